"""Sensor selection under a cardinality budget.

All algorithms maximize ``Phi(S) = log det(I + G_SS)`` over ``|S| = k`` and
return a :class:`PlacementResult`. Gains are compared strictly, so exact ties
go to the smallest candidate index; lazy and standard greedy therefore return
the same sequence.
"""
from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from .eig import (
    SelectionState,
    eig_value,
    empty_state,
    extend_state,
    marginal_gain_meas,
    marginal_gain_param,
)
from .errors import BudgetOutOfRange, EnumerationTooLarge, GuaranteeViolation
from .problem import PreparedDesign

__all__ = [
    "PlacementResult",
    "GainQueue",
    "GuaranteeReport",
    "GREEDY_RATIO",
    "greedy_select",
    "lazy_greedy_select",
    "exhaustive_search",
    "check_guarantee",
    "stochastic_greedy_select",
]

GREEDY_RATIO = 1.0 - 1.0 / math.e
GAIN_PATHS = ("measurement", "parameter")


@dataclass
class PlacementResult:
    """Outcome of one selection run.

    ``phi_trace[j]`` is ``Phi`` of the first ``j + 1`` selected sensors and
    ``evals_trace[j]`` the number of gain (or, for exhaustive search,
    objective) evaluations spent up to that point.
    """

    selected: tuple
    step_gains: tuple
    phi_trace: tuple
    gain_evals: int
    algorithm: str
    wall_time: Optional[float] = None
    evals_trace: tuple = ()

    @property
    def phi(self) -> float:
        return self.phi_trace[-1] if self.phi_trace else 0.0

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "algorithm": self.algorithm,
            "selected": list(self.selected),
            "step_gains": list(self.step_gains),
            "phi_trace": list(self.phi_trace),
            "gain_evals": self.gain_evals,
            "wall_time": self.wall_time if timing else None,
        }


class GainQueue:
    """Max-priority queue of ``(candidate, cached gain, refresh step)``.

    Ordered by cached gain descending, then candidate index ascending.
    """

    def __init__(self):
        self._heap = []

    def __len__(self):
        return len(self._heap)

    def push(self, candidate: int, gain: float, refreshed_at: int) -> None:
        heapq.heappush(self._heap, (-gain, candidate, refreshed_at))

    def pop(self):
        neg_gain, candidate, refreshed_at = heapq.heappop(self._heap)
        return candidate, -neg_gain, refreshed_at

    def peek(self):
        neg_gain, candidate, refreshed_at = self._heap[0]
        return candidate, -neg_gain, refreshed_at

    def entries(self) -> list:
        return sorted((c, -g, r) for g, c, r in self._heap)


def _check_budget(prepared: PreparedDesign, k: int) -> int:
    k = int(k)
    if not 1 <= k <= prepared.d:
        raise BudgetOutOfRange(f"budget k={k} outside 1..{prepared.d}")
    return k


def _gain_fn(prepared: PreparedDesign, gain_path: str) -> Callable[[SelectionState, int], float]:
    if gain_path == "measurement":
        return lambda state, v: marginal_gain_meas(prepared, state, v)
    if gain_path == "parameter":
        return lambda state, v: marginal_gain_param(prepared, state.selected, v)
    raise ValueError(f"gain_path must be one of {GAIN_PATHS}, got {gain_path!r}")


def _argmax(gains, candidates):
    best_v, best_g = None, -math.inf
    for v, g in zip(candidates, gains):
        if g > best_g or (g == best_g and v < best_v):
            best_v, best_g = v, g
    return best_v, best_g


def _finish(state, gains, evals_trace, algorithm, t0) -> PlacementResult:
    return PlacementResult(
        selected=state.selected,
        step_gains=tuple(gains),
        phi_trace=tuple(np.cumsum(gains).tolist()),
        gain_evals=evals_trace[-1] if evals_trace else 0,
        algorithm=algorithm,
        wall_time=time.perf_counter() - t0,
        evals_trace=tuple(evals_trace),
    )


def greedy_select(prepared: PreparedDesign, k: int, gain_path: str = "measurement",
                  n_workers: int = 1) -> PlacementResult:
    """Standard greedy: evaluate every remaining candidate at every step.

    With ``n_workers > 1`` the candidates of one step are evaluated on a
    thread pool; the reduction is order independent.
    """
    k = _check_budget(prepared, k)
    gain = _gain_fn(prepared, gain_path)
    t0 = time.perf_counter()
    state = empty_state()
    gains, evals_trace, evals = [], [], 0
    pool = ThreadPoolExecutor(n_workers) if n_workers > 1 else None
    try:
        for _ in range(k):
            chosen = set(state.selected)
            remaining = [v for v in range(prepared.d) if v not in chosen]
            if pool is None:
                values = [gain(state, v) for v in remaining]
            else:
                values = list(pool.map(lambda v, s=state: gain(s, v), remaining))
            evals += len(remaining)
            v, g = _argmax(values, remaining)
            state = extend_state(state, prepared, v)
            gains.append(g)
            evals_trace.append(evals)
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(state, gains, evals_trace, "greedy", t0)


def lazy_greedy_select(prepared: PreparedDesign, k: int,
                       gain_path: str = "measurement") -> PlacementResult:
    """Lazy greedy: stale gains are upper bounds, so only queue tops are
    re-evaluated, and a top entry refreshed in the current step is accepted."""
    k = _check_budget(prepared, k)
    gain = _gain_fn(prepared, gain_path)
    t0 = time.perf_counter()
    state = empty_state()
    queue = GainQueue()
    for v in range(prepared.d):
        queue.push(v, gain(state, v), 0)
    evals = prepared.d
    gains, evals_trace = [], []
    for step in range(k):
        while True:
            v, g, refreshed_at = queue.pop()
            if refreshed_at == step:
                break
            queue.push(v, gain(state, v), step)
            evals += 1
        state = extend_state(state, prepared, v)
        gains.append(g)
        evals_trace.append(evals)
    return _finish(state, gains, evals_trace, "lazy", t0)


def exhaustive_search(prepared: PreparedDesign, k: int, cap: int = 10**6) -> PlacementResult:
    """Global maximizer of ``Phi`` over all ``k``-subsets (lexicographic tie-break).

    Raises:
        EnumerationTooLarge: if ``C(d, k)`` exceeds ``cap``.
    """
    k = _check_budget(prepared, k)
    count = math.comb(prepared.d, k)
    if count > cap:
        raise EnumerationTooLarge(
            f"C({prepared.d}, {k}) = {count:.3e} subsets exceeds the cap of {cap}; "
            f"exhaustive search is hopeless beyond toy sizes "
            f"(d=100, k=20 already needs C(100, 20) = {math.comb(100, 20):.2e}, "
            f"i.e. O(10^20) evaluations)"
        )
    t0 = time.perf_counter()
    best, best_phi = None, -math.inf
    for subset in combinations(range(prepared.d), k):
        phi = eig_value(prepared, subset)
        if phi > best_phi:
            best, best_phi = subset, phi
    # report the optimum as a sequence of prefix gains in index order
    state, gains = empty_state(), []
    for v in best:
        new = extend_state(state, prepared, v)
        gains.append(new.phi - state.phi)
        state = new
    return _finish(state, gains, [count] * k, "exhaustive", t0)


@dataclass
class GuaranteeReport:
    ratio: float
    greedy_phi: float
    optimal_phi: float
    greedy: tuple
    optimal: tuple
    bound: float = field(default=GREEDY_RATIO)

    @property
    def holds(self) -> bool:
        return self.ratio >= self.bound - 1e-12


def check_guarantee(prepared: PreparedDesign, k: int, cap: int = 10**6) -> GuaranteeReport:
    """Compare greedy against the exhaustive optimum.

    Raises:
        GuaranteeViolation: if ``Phi_greedy / Phi_opt < 1 - 1/e``.
    """
    opt = exhaustive_search(prepared, k, cap)
    gr = greedy_select(prepared, k)
    ratio = gr.phi / opt.phi if opt.phi > 0 else 1.0
    report = GuaranteeReport(ratio, gr.phi, opt.phi, gr.selected, opt.selected)
    if not report.holds:
        raise GuaranteeViolation(f"greedy/optimal = {ratio:.6f} < 1 - 1/e")
    return report


def stochastic_greedy_select(prepared: PreparedDesign, k: int, epsilon: float = 0.1,
                             seed: int = 0, gain_path: str = "measurement") -> PlacementResult:
    """Stochastic greedy: each step scores a random sample of
    ``ceil((d/k) log(1/epsilon))`` remaining candidates."""
    k = _check_budget(prepared, k)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    gain = _gain_fn(prepared, gain_path)
    rng = np.random.default_rng(seed)
    sample_size = math.ceil(prepared.d / k * math.log(1.0 / epsilon))
    t0 = time.perf_counter()
    state = empty_state()
    gains, evals_trace, evals = [], [], 0
    for _ in range(k):
        chosen = set(state.selected)
        remaining = [v for v in range(prepared.d) if v not in chosen]
        if sample_size < len(remaining):
            remaining = sorted(rng.choice(remaining, size=sample_size, replace=False).tolist())
        values = [gain(state, v) for v in remaining]
        evals += len(remaining)
        v, g = _argmax(values, remaining)
        state = extend_state(state, prepared, v)
        gains.append(g)
        evals_trace.append(evals)
    return _finish(state, gains, evals_trace, "stochastic", t0)
