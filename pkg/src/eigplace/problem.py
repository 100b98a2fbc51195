"""Discretized linear Gaussian inverse problems and their sensor rows.

An :class:`InverseProblem` holds the observation model ``y = F m + eta`` with
``eta ~ N(0, diag(sigma**2))`` and a Gaussian prior ``N(m_pr, R R^T)``.
:func:`assemble_rows` turns it into a :class:`PreparedDesign`: the
prior-preconditioned sensor rows ``f_i = R^T F^T e_i / sigma_i`` and their Gram
matrix, which is all the greedy machinery needs.

Two reproducible problem families are provided by :func:`generate_problem`:

* ``heat1d``: final-time observations of the 1-D heat equation on (0, 1) with
  homogeneous Dirichlet boundary conditions and a squared inverse-elliptic
  prior.
* ``synthetic``: a forward map with prescribed geometric singular values.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidSpec,
    NonPositiveNoise,
    ProblemError,
    RankTooLarge,
    SingularPriorFactor,
)

__all__ = [
    "Candidate",
    "InverseProblem",
    "Compression",
    "PreparedDesign",
    "GeneratorSpec",
    "assemble_rows",
    "low_rank_compress",
    "singular_spectrum",
    "suggest_rank",
    "dirichlet_laplacian",
    "generate_problem",
    "problem_to_dict",
    "problem_from_dict",
    "load_problem",
    "save_problem",
]

Coord = Union[float, tuple, None]


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Candidate:
    """A candidate sensor: a label and an optional spatial coordinate."""

    label: str
    coord: Coord = None

    def to_dict(self) -> dict:
        coord = list(self.coord) if isinstance(self.coord, tuple) else self.coord
        return {"label": self.label, "coord": coord}

    @classmethod
    def from_dict(cls, data: dict) -> "Candidate":
        coord = data.get("coord")
        if isinstance(coord, list):
            coord = tuple(float(c) for c in coord)
        elif coord is not None:
            coord = float(coord)
        return cls(label=str(data["label"]), coord=coord)


@dataclass(frozen=True, eq=False)
class InverseProblem:
    """Linear Gaussian inverse problem with ``d`` candidate sensors.

    Attributes:
        forward_map: ``(d, n)`` matrix ``F``; row ``i`` is candidate sensor ``i``.
        noise_std: length-``d`` vector of noise standard deviations.
        prior_mean: length-``n`` prior mean.
        prior_factor: ``(n, n)`` factor ``R`` of the prior covariance
            ``C_pr = R R^T``. Any factor works; the EIG does not depend on
            the choice.
        candidates: one :class:`Candidate` per row of ``forward_map``.
    """

    forward_map: np.ndarray
    noise_std: np.ndarray
    prior_mean: np.ndarray
    prior_factor: np.ndarray
    candidates: tuple = field(default=())

    def __post_init__(self):
        F = _frozen(self.forward_map, 2, "forward_map")
        sigma = _frozen(self.noise_std, 1, "noise_std")
        m_pr = _frozen(self.prior_mean, 1, "prior_mean")
        R = _frozen(self.prior_factor, 2, "prior_factor")
        d, n = F.shape
        if d < 1 or n < 1:
            raise DimensionMismatch(f"forward_map must be non-empty, got shape {F.shape}")
        if sigma.shape != (d,):
            raise DimensionMismatch(f"noise_std has length {sigma.size}, expected {d}")
        if m_pr.shape != (n,):
            raise DimensionMismatch(f"prior_mean has length {m_pr.size}, expected {n}")
        if R.shape != (n, n):
            raise DimensionMismatch(f"prior_factor has shape {R.shape}, expected {(n, n)}")
        if not np.all(sigma > 0):
            raise NonPositiveNoise(f"noise_std must be strictly positive (min {sigma.min()!r})")
        if np.linalg.matrix_rank(R) < n:
            raise SingularPriorFactor("prior_factor must have full column rank")

        candidates = tuple(self.candidates)
        if not candidates:
            candidates = tuple(Candidate(f"s{i}") for i in range(d))
        if len(candidates) != d:
            raise DimensionMismatch(f"{len(candidates)} candidates for {d} forward-map rows")

        object.__setattr__(self, "forward_map", F)
        object.__setattr__(self, "noise_std", sigma)
        object.__setattr__(self, "prior_mean", m_pr)
        object.__setattr__(self, "prior_factor", R)
        object.__setattr__(self, "candidates", candidates)

    @property
    def d(self) -> int:
        return self.forward_map.shape[0]

    @property
    def n(self) -> int:
        return self.forward_map.shape[1]

    @property
    def prior_covariance(self) -> np.ndarray:
        return self.prior_factor @ self.prior_factor.T


@dataclass(frozen=True)
class Compression:
    """Record of a low-rank compression applied to a :class:`PreparedDesign`."""

    rank: int
    discarded_singular_values: tuple

    @property
    def discarded_mass(self) -> float:
        """Sum of the discarded squared singular values (Gram eigenvalues)."""
        return float(sum(s * s for s in self.discarded_singular_values))

    def eig_error_bound(self) -> float:
        """Upper bound on ``|Phi_full(S) - Phi_compressed(S)|`` over all ``S``."""
        return float(sum(math.log1p(s * s) for s in self.discarded_singular_values))


@dataclass(frozen=True, eq=False)
class PreparedDesign:
    """Prior-preconditioned sensor rows and their Gram matrix.

    ``rows[i]`` is the vector ``f_i`` of sensor ``i``; ``gram[i, j]`` is
    ``<f_i, f_j>``. ``provenance`` is ``None`` unless the rows were
    compressed with :func:`low_rank_compress`.
    """

    rows: np.ndarray
    gram: np.ndarray
    row_norms_sq: np.ndarray
    provenance: Optional[Compression] = None

    @classmethod
    def from_rows(cls, rows, provenance: Optional[Compression] = None) -> "PreparedDesign":
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2:
            raise DimensionMismatch(f"rows must be a 2-D array, got shape {rows.shape}")
        norms_sq = np.einsum("ij,ij->i", rows, rows)
        gram = rows @ rows.T
        gram = 0.5 * (gram + gram.T)
        gram[np.diag_indices_from(gram)] = norms_sq
        for a in (rows, gram, norms_sq):
            a.flags.writeable = False
        return cls(rows=rows, gram=gram, row_norms_sq=norms_sq, provenance=provenance)

    @property
    def d(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]


def assemble_rows(problem: InverseProblem) -> PreparedDesign:
    """Build the prior-preconditioned rows ``R^T F^T e_i / sigma_i``."""
    # InverseProblem validates shapes and noise on construction; re-check in
    # case a caller bypassed it with object.__setattr__.
    sigma = np.asarray(problem.noise_std)
    F = np.asarray(problem.forward_map)
    if not np.all(sigma > 0):
        raise NonPositiveNoise("noise_std must be strictly positive")
    if sigma.shape != (F.shape[0],) or problem.prior_factor.shape != (F.shape[1], F.shape[1]):
        raise DimensionMismatch("inconsistent problem shapes")
    rows = (F @ problem.prior_factor) / sigma[:, None]
    return PreparedDesign.from_rows(rows)


def singular_spectrum(prepared: PreparedDesign) -> np.ndarray:
    """Singular values of the ``(d, n)`` row matrix, descending."""
    return np.linalg.svd(prepared.rows, compute_uv=False)


def suggest_rank(spectrum: Sequence[float], cutoff: float = 1e-8) -> int:
    """Smallest rank whose discarded Gram eigenvalue mass is at most
    ``cutoff`` times the total mass. ``spectrum`` holds singular values."""
    lam = np.sort(np.asarray(spectrum, dtype=float) ** 2)[::-1]
    total = lam.sum()
    if total == 0.0:
        return 1
    tail = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])
    return max(1, int(np.argmax(tail <= cutoff * total)))


def low_rank_compress(prepared: PreparedDesign, rank: int) -> PreparedDesign:
    """Project every row onto the top-``rank`` right singular subspace.

    The resulting Gram matrix is the best rank-``rank`` approximation of the
    original one. The discarded singular values are kept in ``provenance`` so
    the induced EIG error can be bounded.
    """
    rank = int(rank)
    if rank < 1:
        raise ValueError(f"rank must be positive, got {rank}")
    limit = min(prepared.d, prepared.n)
    if rank > limit:
        raise RankTooLarge(f"rank {rank} exceeds min(d, n) = {limit}")
    U, s, Vt = np.linalg.svd(prepared.rows, full_matrices=False)
    rows = (U[:, :rank] * s[:rank]) @ Vt[:rank]
    discarded = tuple(float(x) for x in s[rank:])
    if prepared.provenance is not None:
        discarded = prepared.provenance.discarded_singular_values + discarded
    return PreparedDesign.from_rows(rows, provenance=Compression(rank, discarded))


# -- generators --------------------------------------------------------------

PRIOR_EXPONENT = 2
_DEFAULT_NOISE = {"heat1d": 0.01, "synthetic": 1.0}


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a reproducible test problem.

    ``heat1d`` uses ``kappa``, ``final_time``, ``prior_shift`` and
    ``prior_scale``; when ``sensor_coords`` is given those physical points
    are observed (by linear interpolation between grid nodes), otherwise ``d``
    grid nodes are drawn with ``seed``. ``synthetic`` uses ``rho``.
    """

    kind: str
    n: int
    d: int
    seed: int = 0
    noise_std: Optional[float] = None
    kappa: float = 1.0
    final_time: float = 0.01
    prior_shift: float = 1.0
    prior_scale: float = 0.01
    rho: float = 0.5
    sensor_coords: Optional[tuple] = None

    def __post_init__(self):
        if self.sensor_coords is not None:
            object.__setattr__(self, "sensor_coords", tuple(float(c) for c in self.sensor_coords))
        self.validate()

    def validate(self) -> None:
        if self.kind not in ("heat1d", "synthetic"):
            raise InvalidSpec(f"unknown generator kind {self.kind!r}")
        if int(self.n) != self.n or int(self.d) != self.d or self.n < 1 or self.d < 1:
            raise InvalidSpec("n and d must be positive integers")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        if self.noise_std is not None and not self.noise_std > 0:
            raise InvalidSpec("noise_std must be positive")
        if self.kind == "heat1d":
            for name in ("kappa", "final_time", "prior_shift", "prior_scale"):
                if not getattr(self, name) > 0:
                    raise InvalidSpec(f"{name} must be strictly positive")
            if self.d > self.n:
                raise InvalidSpec(f"heat1d needs d <= n, got d={self.d}, n={self.n}")
            if self.sensor_coords is not None:
                if len(self.sensor_coords) != self.d:
                    raise InvalidSpec("sensor_coords length must equal d")
                if not all(0.0 < c < 1.0 for c in self.sensor_coords):
                    raise InvalidSpec("sensor_coords must lie in the open interval (0, 1)")
        elif not 0.0 < self.rho < 1.0:
            raise InvalidSpec("rho must lie in (0, 1)")

    @property
    def sigma(self) -> float:
        return self.noise_std if self.noise_std is not None else _DEFAULT_NOISE[self.kind]

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if self.sensor_coords is not None:
            out["sensor_coords"] = list(self.sensor_coords)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown generator fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None


def dirichlet_laplacian(n: int, kappa: float = 1.0):
    """Eigen-decomposition of ``kappa/h^2 * tridiag(1, -2, 1)`` on ``n`` nodes.

    Returns ``(eigenvalues, eigenvectors, nodes)`` with eigenvalues sorted by
    increasing magnitude (all negative), orthonormal eigenvector columns and
    interior nodes ``x_j = j h``, ``h = 1/(n+1)``.
    """
    h = 1.0 / (n + 1)
    j = np.arange(1, n + 1)
    nodes = j * h
    eigenvalues = -4.0 * kappa / h**2 * np.sin(0.5 * np.pi * j * h) ** 2
    eigenvectors = np.sqrt(2.0 * h) * np.sin(np.pi * np.outer(nodes, j))
    return eigenvalues, eigenvectors, nodes


def _interpolation_rows(coords, n: int) -> np.ndarray:
    """Rows that linearly interpolate nodal values (zero at the boundary)."""
    h = 1.0 / (n + 1)
    S = np.zeros((len(coords), n))
    for r, x in enumerate(coords):
        left = min(int(math.floor(x / h)), n)
        w = x / h - left
        # node k (1-based) is column k - 1; nodes 0 and n+1 are boundary zeros
        if left >= 1:
            S[r, left - 1] += 1.0 - w
        if left + 1 <= n:
            S[r, left] += w
    return S


def _heat1d(spec: GeneratorSpec) -> InverseProblem:
    n, d = spec.n, spec.d
    lam, Q, nodes = dirichlet_laplacian(n, spec.kappa)
    h = 1.0 / (n + 1)
    propagator = (Q * np.exp(spec.final_time * lam)) @ Q.T

    if spec.sensor_coords is not None:
        coords = spec.sensor_coords
        S = _interpolation_rows(coords, n)
    else:
        rng = np.random.default_rng(spec.seed)
        idx = np.sort(rng.choice(n, size=d, replace=False))
        coords = tuple(float(x) for x in nodes[idx])
        S = np.zeros((d, n))
        S[np.arange(d), idx] = 1.0

    # Nodal prior covariance (delta I - gamma L)^-2 / h: the 1/h is the lumped
    # mass weight that keeps the EIG stable under mesh refinement.
    R = (Q / (spec.prior_shift - spec.prior_scale * lam) ** (PRIOR_EXPONENT // 2)) @ Q.T
    R /= math.sqrt(h)

    candidates = tuple(Candidate(f"x={c:.6g}", float(c)) for c in coords)
    return InverseProblem(
        forward_map=S @ propagator,
        noise_std=np.full(d, spec.sigma),
        prior_mean=np.zeros(n),
        prior_factor=R,
        candidates=candidates,
    )


def _random_orthogonal(rng: np.random.Generator, m: int) -> np.ndarray:
    Q, Rq = np.linalg.qr(rng.standard_normal((m, m)))
    return Q * np.where(np.diag(Rq) < 0, -1.0, 1.0)


def _synthetic(spec: GeneratorSpec) -> InverseProblem:
    n, d = spec.n, spec.d
    rng = np.random.default_rng(spec.seed)
    U = _random_orthogonal(rng, d)
    V = _random_orthogonal(rng, n)
    m = min(d, n)
    s = spec.rho ** np.arange(m)
    F = (U[:, :m] * s) @ V[:, :m].T
    return InverseProblem(
        forward_map=F,
        noise_std=np.full(d, spec.sigma),
        prior_mean=np.zeros(n),
        prior_factor=np.eye(n),
    )


def generate_problem(spec: GeneratorSpec) -> InverseProblem:
    """Instantiate the problem described by ``spec`` (deterministic in ``spec``)."""
    spec.validate()
    if spec.kind == "heat1d":
        return _heat1d(spec)
    return _synthetic(spec)


# -- JSON serialization ------------------------------------------------------

def problem_to_dict(problem: InverseProblem) -> dict:
    return {
        "n": problem.n,
        "d": problem.d,
        "forward_map": problem.forward_map.tolist(),
        "noise_std": problem.noise_std.tolist(),
        "prior_mean": problem.prior_mean.tolist(),
        "prior_factor": problem.prior_factor.tolist(),
        "candidates": [c.to_dict() for c in problem.candidates],
    }


def problem_from_dict(data: Any) -> InverseProblem:
    """Rebuild a problem from its JSON document; raises :class:`ProblemError`."""
    try:
        problem = InverseProblem(
            forward_map=data["forward_map"],
            noise_std=data["noise_std"],
            prior_mean=data["prior_mean"],
            prior_factor=data["prior_factor"],
            candidates=tuple(Candidate.from_dict(c) for c in data.get("candidates", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemError(f"malformed problem document: {exc}") from exc
    if data.get("n", problem.n) != problem.n or data.get("d", problem.d) != problem.d:
        raise ProblemError("declared n/d disagree with array shapes")
    return problem


def load_problem(path) -> InverseProblem:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ProblemError(f"cannot read problem file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ProblemError(f"{path}: expected a JSON object")
    return problem_from_dict(data)


def save_problem(problem: InverseProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem)) + "\n")
