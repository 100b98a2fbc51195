"""Greedy sensor placement maximizing the expected information gain of
linear Gaussian inverse problems."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .problem import (  # noqa: E402
    Candidate,
    Compression,
    GeneratorSpec,
    InverseProblem,
    PreparedDesign,
    assemble_rows,
    generate_problem,
    load_problem,
    low_rank_compress,
    save_problem,
    singular_spectrum,
    suggest_rank,
)
from .eig import (  # noqa: E402
    PosteriorUpdate,
    SelectionState,
    eig_value,
    empty_state,
    extend_state,
    marginal_gain_meas,
    marginal_gain_param,
    posterior_covariance,
    posterior_mean,
    posterior_update,
    state_for,
)
from .greedy import (  # noqa: E402
    GainQueue,
    GuaranteeReport,
    PlacementResult,
    check_guarantee,
    exhaustive_search,
    greedy_select,
    lazy_greedy_select,
    stochastic_greedy_select,
)
