"""Exception hierarchy for eigplace."""


class PlacementError(Exception):
    """Base class for all errors raised by eigplace."""


# -- problem definition ------------------------------------------------------

class InvalidProblem(PlacementError, ValueError):
    pass


class NonPositiveNoise(InvalidProblem):
    pass


class DimensionMismatch(InvalidProblem):
    pass


class SingularPriorFactor(InvalidProblem):
    pass


class InvalidSpec(PlacementError, ValueError):
    pass


class RankTooLarge(PlacementError, ValueError):
    pass


# -- EIG evaluation ----------------------------------------------------------

class IndexOutOfRange(PlacementError, IndexError):
    pass


class CandidateAlreadySelected(PlacementError, ValueError):
    pass


class StaleState(PlacementError, RuntimeError):
    pass


class NotPositiveDefinite(PlacementError, ArithmeticError):
    pass


class NumericalBreakdown(PlacementError, ArithmeticError):
    pass


# -- selection algorithms ----------------------------------------------------

class BudgetOutOfRange(PlacementError, ValueError):
    pass


class EnumerationTooLarge(PlacementError, ValueError):
    pass


class GuaranteeViolation(PlacementError, AssertionError):
    pass


# -- command line ------------------------------------------------------------

class ConfigError(PlacementError, ValueError):
    pass


class ProblemError(PlacementError, ValueError):
    pass
