"""Expected information gain, marginal gains and posterior updates.

Throughout, ``Phi(S) = log det(I + sum_{s in S} f_s f_s^T)`` where ``f_s`` are
the prior-preconditioned rows of a :class:`~eigplace.problem.PreparedDesign`
(the usual factor 1/2 of the EIG is dropped). By the determinant identity
``det(I_n + A^T A) = det(I_k + A A^T)`` this equals ``log det(I_k + G_SS)``,
so once the Gram matrix is known every quantity below lives in ``R^k``.

Candidate indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import (
    CandidateAlreadySelected,
    DimensionMismatch,
    IndexOutOfRange,
    NotPositiveDefinite,
    NumericalBreakdown,
    StaleState,
)
from .problem import InverseProblem, PreparedDesign

__all__ = [
    "SelectionState",
    "PosteriorUpdate",
    "eig_value",
    "marginal_gain_param",
    "marginal_gain_meas",
    "empty_state",
    "state_for",
    "extend_state",
    "posterior_covariance",
    "posterior_update",
    "posterior_mean",
]

# Schur complements in [-SCHUR_CLAMP, 0) are roundoff and are clamped to 0.
SCHUR_CLAMP = 1e-10
BREAKDOWN_TOL = 1e-8


def _check_indices(prepared: PreparedDesign, S: Iterable[int]) -> list:
    idx = [int(i) for i in S]
    d = prepared.d
    for i in idx:
        if not 0 <= i < d:
            raise IndexOutOfRange(f"candidate {i} outside 0..{d - 1}")
    if len(set(idx)) != len(idx):
        raise CandidateAlreadySelected(f"repeated candidate in {idx}")
    return idx


def _check_new(prepared: PreparedDesign, selected: Sequence[int], v: int) -> int:
    v = int(v)
    if not 0 <= v < prepared.d:
        raise IndexOutOfRange(f"candidate {v} outside 0..{prepared.d - 1}")
    if v in selected:
        raise CandidateAlreadySelected(f"candidate {v} is already in the design")
    return v


def _cholesky(M: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "I + G_SS is not positive definite; the Gram matrix is corrupted"
        ) from None


def _measurement_matrix(prepared: PreparedDesign, idx: list) -> np.ndarray:
    return np.eye(len(idx)) + prepared.gram[np.ix_(idx, idx)]


def _log1p_schur(schur: float, scale: float) -> float:
    if schur < 0.0:
        if schur < -SCHUR_CLAMP * max(1.0, scale):
            raise NumericalBreakdown(f"negative Schur complement {schur:.3e}")
        schur = 0.0
    return float(np.log1p(schur))


def eig_value(prepared: PreparedDesign, S: Iterable[int]) -> float:
    """``log det(I + G_SS)``; zero for the empty design."""
    idx = _check_indices(prepared, S)
    if not idx:
        return 0.0
    L = _cholesky(_measurement_matrix(prepared, idx))
    return float(2.0 * np.sum(np.log(np.diag(L))))


def marginal_gain_param(prepared: PreparedDesign, S: Iterable[int], v: int) -> float:
    """Reference gain ``log(1 + <(I + H(S))^{-1} f_v, f_v>)`` via an n x n solve."""
    idx = _check_indices(prepared, S)
    v = _check_new(prepared, idx, v)
    f = prepared.rows[v]
    if not idx:
        return _log1p_schur(float(f @ f), float(f @ f))
    A = prepared.rows[idx]
    K = np.eye(prepared.n) + A.T @ A
    z = cho_solve((_cholesky(K), True), f)
    return _log1p_schur(float(z @ f), float(f @ f))


@dataclass(frozen=True, eq=False)
class SelectionState:
    """An ordered design and the Cholesky factor of ``I + G_SS``.

    ``chol`` is lower triangular with ``chol @ chol.T == I + G_SS`` (rows and
    columns ordered as ``selected``); ``phi`` is the running EIG. States are
    never mutated: :func:`extend_state` returns a new one.
    """

    selected: tuple
    chol: np.ndarray
    phi: float

    @property
    def k(self) -> int:
        return len(self.selected)


def empty_state() -> SelectionState:
    chol = np.zeros((0, 0))
    chol.flags.writeable = False
    return SelectionState(selected=(), chol=chol, phi=0.0)


def state_for(prepared: PreparedDesign, S: Iterable[int]) -> SelectionState:
    """Factorize ``I + G_SS`` from scratch for an arbitrary design."""
    idx = _check_indices(prepared, S)
    if not idx:
        return empty_state()
    L = _cholesky(_measurement_matrix(prepared, idx))
    L.flags.writeable = False
    return SelectionState(tuple(idx), L, float(2.0 * np.sum(np.log(np.diag(L)))))


def _schur(prepared: PreparedDesign, state: SelectionState, v: int):
    """Return ``(w, c)`` with ``w = L^{-1} G[S, v]`` and ``c = G_vv - |w|^2``."""
    k = len(state.selected)
    if state.chol.shape != (k, k):
        raise StaleState(f"factor has shape {state.chol.shape} for {k} selected sensors")
    v = _check_new(prepared, state.selected, v)
    g_vv = float(prepared.gram[v, v])
    if k == 0:
        return np.zeros(0), g_vv
    g = prepared.gram[list(state.selected), v]
    w = solve_triangular(state.chol, g, lower=True, check_finite=False)
    return w, g_vv - float(w @ w)


def marginal_gain_meas(prepared: PreparedDesign, state: SelectionState, v: int) -> float:
    """Gain of adding ``v`` using only the k x k factor held in ``state``."""
    _, c = _schur(prepared, state, v)
    return _log1p_schur(c, float(prepared.gram[v, v]))


def extend_state(state: SelectionState, prepared: PreparedDesign, v: int) -> SelectionState:
    """Append ``v`` to the design with a bordered Cholesky update."""
    w, c = _schur(prepared, state, v)
    g_vv = float(prepared.gram[v, v])
    if 1.0 + c < 1.0 - BREAKDOWN_TOL * max(1.0, g_vv):
        raise NumericalBreakdown(f"new diagonal entry squared {1.0 + c:.3e} < 1")
    gain = _log1p_schur(c, g_vv)
    k = state.k
    L = np.zeros((k + 1, k + 1))
    L[:k, :k] = state.chol
    L[k, :k] = w
    L[k, k] = np.sqrt(1.0 + max(c, 0.0))
    L.flags.writeable = False
    return SelectionState(state.selected + (int(v),), L, state.phi + gain)


# -- posterior quantities ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class PosteriorUpdate:
    """Rank-one change of the posterior covariance when one sensor is added.

    ``C_post(S + {i}) = C_post(S) - outer(direction, direction) / denom``
    where ``direction = R z_tilde``.
    """

    z_tilde: np.ndarray
    denom: float
    trace_drop: float
    direction: np.ndarray

    def apply(self, covariance: np.ndarray) -> np.ndarray:
        return covariance - np.outer(self.direction, self.direction) / self.denom


def _apply_inverse(prepared: PreparedDesign, idx: list, x: np.ndarray) -> np.ndarray:
    """``(I + H(S))^{-1} x`` through the k x k measurement-space system."""
    if not idx:
        return x.copy()
    A = prepared.rows[idx]
    L = _cholesky(_measurement_matrix(prepared, idx))
    return x - A.T @ cho_solve((L, True), A @ x)


def posterior_covariance(prepared: PreparedDesign, problem: InverseProblem, S) -> np.ndarray:
    """Dense ``C_post(S) = R (I + H(S))^{-1} R^T``."""
    idx = _check_indices(prepared, S)
    R = problem.prior_factor
    if not idx:
        return R @ R.T
    A = prepared.rows[idx]
    L = _cholesky(_measurement_matrix(prepared, idx))
    B = solve_triangular(L, A @ R.T, lower=True)
    return R @ R.T - B.T @ B


def posterior_update(prepared: PreparedDesign, problem: InverseProblem, S, i: int) -> PosteriorUpdate:
    idx = _check_indices(prepared, S)
    i = _check_new(prepared, idx, i)
    f = prepared.rows[i]
    z = _apply_inverse(prepared, idx, f)
    denom = 1.0 + float(f @ z)
    direction = problem.prior_factor @ z
    for a in (z, direction):
        a.flags.writeable = False
    return PosteriorUpdate(
        z_tilde=z,
        denom=denom,
        trace_drop=float(direction @ direction) / denom,
        direction=direction,
    )


def posterior_mean(prepared: PreparedDesign, problem: InverseProblem, S, y) -> np.ndarray:
    """MAP point given data ``y`` observed at the sensors ``S`` (in that order)."""
    idx = _check_indices(prepared, S)
    y = np.asarray(y, dtype=float)
    if y.shape != (len(idx),):
        raise DimensionMismatch(f"data has shape {y.shape}, expected ({len(idx)},)")
    m_pr = np.array(problem.prior_mean)
    if not idx:
        return m_pr
    sigma = problem.noise_std[idx]
    r = (y - problem.forward_map[idx] @ m_pr) / sigma
    L = _cholesky(_measurement_matrix(prepared, idx))
    # (I + A^T A)^{-1} A^T r == A^T (I + A A^T)^{-1} r
    coef = cho_solve((L, True), r)
    return m_pr + problem.prior_factor @ (prepared.rows[idx].T @ coef)
