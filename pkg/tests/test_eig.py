import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigplace import (
    InverseProblem,
    PreparedDesign,
    assemble_rows,
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
from eigplace.eig import SelectionState
from eigplace.errors import (
    CandidateAlreadySelected,
    DimensionMismatch,
    IndexOutOfRange,
    NotPositiveDefinite,
    NumericalBreakdown,
    StaleState,
)

from conftest import dense_phi, orthogonal_prepared, random_prepared, random_problem


def brute_gain(prepared, S, v):
    return dense_phi(prepared, list(S) + [v]) - dense_phi(prepared, S)


# -- eig_value ---------------------------------------------------------------

def test_empty_design_is_zero():
    assert eig_value(random_prepared(0, 4, 3), []) == 0.0


def test_singleton():
    prep = random_prepared(1, 4, 3)
    for i in range(4):
        assert eig_value(prep, [i]) == pytest.approx(math.log1p(prep.gram[i, i]), rel=1e-14)


def test_two_orthogonal_rows():
    a, b = 2.5, 0.3
    prep = orthogonal_prepared([math.sqrt(a), math.sqrt(b)], n=4)
    # direct 2x2 determinant
    det = np.linalg.det(np.array([[1 + a, 0.0], [0.0, 1 + b]]))
    assert eig_value(prep, [0, 1]) == pytest.approx(math.log(det), rel=1e-14)
    assert eig_value(prep, [0, 1]) == pytest.approx(math.log1p(a) + math.log1p(b), rel=1e-14)


def test_eig_value_order_independent():
    prep = random_prepared(2, 6, 4)
    assert eig_value(prep, [4, 1, 3]) == pytest.approx(eig_value(prep, [1, 3, 4]), rel=1e-13)


def test_eig_value_errors():
    prep = random_prepared(0, 4, 3)
    with pytest.raises(IndexOutOfRange):
        eig_value(prep, [4])
    with pytest.raises(IndexOutOfRange):
        eig_value(prep, [-1])
    with pytest.raises(CandidateAlreadySelected):
        eig_value(prep, [1, 1])
    bad = PreparedDesign(rows=np.eye(2), gram=np.array([[0.0, 5.0], [5.0, 0.0]]),
                         row_norms_sq=np.zeros(2))
    with pytest.raises(NotPositiveDefinite):
        eig_value(bad, [0, 1])


# -- marginal gains ----------------------------------------------------------

def test_gain_from_empty_set():
    prep = random_prepared(3, 5, 4)
    for v in range(5):
        expected = math.log1p(prep.gram[v, v])
        assert marginal_gain_param(prep, [], v) == pytest.approx(expected, rel=1e-14)
        assert marginal_gain_meas(prep, empty_state(), v) == pytest.approx(expected, rel=1e-14)


def test_orthogonal_candidate_gain_independent_of_design():
    rng = np.random.default_rng(5)
    rows = np.zeros((4, 6))
    rows[:3, :4] = rng.standard_normal((3, 4))
    rows[3, 4:] = rng.standard_normal(2)
    prep = PreparedDesign.from_rows(rows)
    g = prep.gram[3, 3]
    for S in ([], [0], [0, 2], [0, 1, 2]):
        assert marginal_gain_param(prep, S, 3) == pytest.approx(math.log1p(g), rel=1e-13)
        assert marginal_gain_meas(prep, state_for(prep, S), 3) == pytest.approx(math.log1p(g), rel=1e-13)
        assert brute_gain(prep, S, 3) == pytest.approx(math.log1p(g), rel=1e-10)


def test_duplicate_sensor_gain():
    # g = 2: log(1 + g - g^2/(1+g)) = log((1+2g)/(1+g)) = log(5/3)
    f = np.array([1.0, 1.0, 0.0])
    prep = PreparedDesign.from_rows(np.vstack([f, f, [0.0, 0.0, 1.0]]))
    expected = math.log(5.0 / 3.0)
    assert brute_gain(prep, [0], 1) == pytest.approx(expected, rel=1e-12)
    assert marginal_gain_param(prep, [0], 1) == pytest.approx(expected, rel=1e-12)
    assert marginal_gain_meas(prep, state_for(prep, [0]), 1) == pytest.approx(expected, rel=1e-12)


def test_meas_matches_param_exhaustively():
    prep = random_prepared(8, 6, 8)
    for size in range(4):
        for S in itertools.combinations(range(6), size):
            state = state_for(prep, S)
            for v in set(range(6)) - set(S):
                a = marginal_gain_meas(prep, state, v)
                b = marginal_gain_param(prep, S, v)
                assert a == pytest.approx(b, rel=1e-10)
                assert a == pytest.approx(brute_gain(prep, S, v), rel=1e-9, abs=1e-12)


def test_gain_errors():
    prep = random_prepared(0, 4, 3)
    state = state_for(prep, [1, 2])
    with pytest.raises(CandidateAlreadySelected):
        marginal_gain_param(prep, [1, 2], 2)
    with pytest.raises(CandidateAlreadySelected):
        marginal_gain_meas(prep, state, 1)
    with pytest.raises(IndexOutOfRange):
        marginal_gain_meas(prep, state, 7)
    stale = SelectionState(selected=(1, 2, 3), chol=state.chol, phi=state.phi)
    with pytest.raises(StaleState):
        marginal_gain_meas(prep, stale, 0)


def test_negative_schur_roundoff_is_clamped_large_raises():
    rows = np.eye(2)
    # G_vv - |L^{-1} g|^2 slightly negative
    tiny = PreparedDesign(rows=rows, gram=np.array([[1.0, math.sqrt(2 * (1 + 1e-12))],
                                                     [math.sqrt(2 * (1 + 1e-12)), 1.0]]),
                          row_norms_sq=np.ones(2))
    state = SelectionState((0,), np.array([[math.sqrt(2.0)]]), math.log(2.0))
    assert marginal_gain_meas(tiny, state, 1) == 0.0
    broken = PreparedDesign(rows=rows, gram=np.array([[1.0, 2.0], [2.0, 1.0]]),
                            row_norms_sq=np.ones(2))
    with pytest.raises(NumericalBreakdown):
        marginal_gain_meas(broken, state, 1)
    with pytest.raises(NumericalBreakdown):
        extend_state(state, broken, 1)


# -- extend_state ------------------------------------------------------------

def test_extend_empty_state():
    prep = random_prepared(4, 5, 3)
    s = extend_state(empty_state(), prep, 2)
    np.testing.assert_allclose(s.chol, [[math.sqrt(1 + prep.gram[2, 2])]], rtol=1e-15)
    assert s.phi == pytest.approx(math.log1p(prep.gram[2, 2]), rel=1e-15)
    assert s.selected == (2,)


def test_ten_extensions_match_scratch():
    prep = random_prepared(10, 14, 9)
    order = [3, 11, 0, 7, 5, 13, 1, 9, 2, 12]
    state = empty_state()
    for v in order:
        prev = state
        state = extend_state(state, prep, v)
        assert prev.k == len(state.selected) - 1  # previous state untouched
    assert state.phi == pytest.approx(eig_value(prep, order), rel=1e-10)
    fresh = np.linalg.cholesky(np.eye(10) + prep.gram[np.ix_(order, order)])
    assert np.linalg.norm(state.chol - fresh) <= 1e-12 * np.linalg.norm(fresh)
    assert np.all(np.diag(state.chol) >= 1.0)
    assert state.phi == pytest.approx(2 * np.log(np.diag(state.chol)).sum(), rel=1e-12)


def test_extend_with_zero_row():
    rows = np.array([[1.0, 2.0], [0.0, 0.0], [0.5, -1.0]])
    prep = PreparedDesign.from_rows(rows)
    s = extend_state(empty_state(), prep, 0)
    t = extend_state(s, prep, 1)
    assert t.phi == s.phi
    assert t.chol[1, 1] == 1.0


def test_extend_rejects_duplicates():
    prep = random_prepared(0, 4, 3)
    with pytest.raises(CandidateAlreadySelected):
        extend_state(state_for(prep, [0, 1]), prep, 0)


# -- posterior update --------------------------------------------------------

def dense_post_cov(problem, S):
    H = sum((np.outer(problem.forward_map[s], problem.forward_map[s]) / problem.noise_std[s] ** 2
             for s in S), np.zeros((problem.n, problem.n)))
    return np.linalg.inv(H + np.linalg.inv(problem.prior_covariance))


def test_posterior_update_from_prior():
    f = np.array([1.0, -2.0, 0.5])
    g = f @ f
    p = InverseProblem(f[None, :], [1.0], np.zeros(3), np.eye(3))
    prep = assemble_rows(p)
    up = posterior_update(prep, p, [], 0)
    np.testing.assert_allclose(up.apply(np.eye(3)), np.eye(3) - np.outer(f, f) / (1 + g), atol=1e-15)
    assert up.trace_drop == pytest.approx(g / (1 + g), rel=1e-15)
    assert up.denom == pytest.approx(1 + g, rel=1e-15)


@pytest.mark.parametrize("seed,d,n", [(0, 5, 4), (1, 4, 12), (2, 6, 20)])
def test_posterior_update_matches_dense_inverse(seed, d, n):
    p = random_problem(seed, d, n)
    prep = assemble_rows(p)
    rng = np.random.default_rng(seed)
    for size in range(3):
        for S in itertools.combinations(range(d), size):
            C = dense_post_cov(p, S)
            np.testing.assert_allclose(posterior_covariance(prep, p, S), C,
                                       rtol=0, atol=1e-10 * np.abs(C).max())
            for i in set(range(d)) - set(S):
                up = posterior_update(prep, p, S, i)
                C_plus = up.apply(C)
                C_ref = dense_post_cov(p, list(S) + [i])
                assert np.linalg.norm(C_plus - C_ref) <= 1e-10 * np.linalg.norm(C_ref)
                assert up.denom >= 1.0 and up.trace_drop >= 0.0
                assert up.trace_drop == pytest.approx(np.trace(C) - np.trace(C_ref), rel=1e-10)
                X = rng.standard_normal((100, n))
                quad = np.einsum("ij,jk,ik->i", X, C - C_plus, X)
                np.testing.assert_allclose(quad, (X @ up.direction) ** 2 / up.denom,
                                           rtol=1e-9, atol=1e-12)
                assert np.all(quad >= -1e-12)


def test_posterior_update_rejects_selected():
    p = random_problem(0, 3, 2)
    with pytest.raises(CandidateAlreadySelected):
        posterior_update(assemble_rows(p), p, [0, 2], 2)


# -- posterior mean ----------------------------------------------------------

def test_posterior_mean_without_data_is_prior_mean():
    p = random_problem(0, 4, 3)
    np.testing.assert_array_equal(posterior_mean(assemble_rows(p), p, [], []), p.prior_mean)


@pytest.mark.parametrize("seed", range(4))
def test_posterior_mean_matches_dense_formula(seed):
    p = random_problem(seed, d=7, n=12)
    prep = assemble_rows(p)
    rng = np.random.default_rng(seed)
    S = [5, 0, 3]
    y = rng.standard_normal(3)
    Cpr_inv = np.linalg.inv(p.prior_covariance)
    F = p.forward_map[S]
    Gi = np.diag(1.0 / p.noise_std[S] ** 2)
    Cpost = np.linalg.inv(F.T @ Gi @ F + Cpr_inv)
    expected = Cpost @ (F.T @ Gi @ y + Cpr_inv @ p.prior_mean)
    m = posterior_mean(prep, p, S, y)
    assert np.linalg.norm(m - expected) <= 1e-10 * np.linalg.norm(expected)
    # normal equations (H + C_pr^{-1}) m = F^T Gamma^{-1} y + C_pr^{-1} m_pr
    rhs = F.T @ Gi @ y + Cpr_inv @ p.prior_mean
    resid = (F.T @ Gi @ F + Cpr_inv) @ m - rhs
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(rhs)


def test_posterior_mean_vague_prior_recovers_least_squares():
    rng = np.random.default_rng(21)
    d, n = 6, 10
    F = rng.standard_normal((d, n))
    sigma = rng.uniform(0.5, 1.5, d)
    p = InverseProblem(F, sigma, np.zeros(n), 1e3 * np.eye(n))
    m_true = rng.standard_normal(n)
    m = posterior_mean(assemble_rows(p), p, range(d), F @ m_true)
    # minimum-norm least-squares reconstruction, i.e. the projection onto Range(F^T)
    ls = np.linalg.pinv(F) @ (F @ m_true)
    assert np.linalg.norm(m - ls) <= 1e-3 * np.linalg.norm(ls)


def test_posterior_mean_dimension_mismatch():
    p = random_problem(0, 4, 3)
    with pytest.raises(DimensionMismatch):
        posterior_mean(assemble_rows(p), p, [0, 1], [1.0])


# -- properties --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_monotone_and_submodular(seed):
    prep = random_prepared(seed, 6, 4)
    V = set(range(6))
    for size in range(6):
        for S in itertools.combinations(range(6), size):
            state = state_for(prep, S)
            for v in V - set(S):
                dv = marginal_gain_meas(prep, state, v)
                assert dv >= -1e-12
                for w in V - set(S) - {v}:
                    assert dv >= marginal_gain_meas(prep, extend_state(state, prep, w), v) - 1e-10


def test_random_formula_agreement():
    rng = np.random.default_rng(77)
    for _ in range(200):
        d, n = rng.integers(2, 12), rng.integers(1, 15)
        prep = random_prepared(int(rng.integers(2**31)), int(d), int(n))
        size = int(rng.integers(0, d))
        S = rng.choice(d, size=size, replace=False).tolist()
        v = int(rng.choice(sorted(set(range(d)) - set(S))))
        assert marginal_gain_meas(prep, state_for(prep, S), v) == pytest.approx(
            marginal_gain_param(prep, S, v), rel=1e-10, abs=1e-15)


def test_lemma_rank_one_logdet():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 31))
        B = rng.standard_normal((n, int(rng.integers(1, n + 1))))
        K = B @ B.T
        u = rng.standard_normal(n)
        lhs = (np.linalg.slogdet(np.eye(n) + K + np.outer(u, u))[1]
               - np.linalg.slogdet(np.eye(n) + K)[1])
        w, Q = np.linalg.eigh(np.eye(n) + K)
        rhs = math.log1p(np.sum((Q @ ((Q.T @ u) / np.sqrt(w))) ** 2))
        assert lhs == pytest.approx(rhs, rel=1e-10)
        prep = PreparedDesign.from_rows(np.vstack([B.T, u]))
        S = list(range(B.shape[1]))
        assert marginal_gain_param(prep, S, len(S)) == pytest.approx(rhs, rel=1e-10)


def test_push_through_identity():
    rng = np.random.default_rng(6)
    for _ in range(50):
        k, n = rng.integers(1, 10, size=2)
        G = rng.standard_normal((k, n))
        lhs = np.linalg.inv(np.eye(n) + G.T @ G)
        rhs = np.eye(n) - G.T @ np.linalg.inv(np.eye(k) + G @ G.T) @ G
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), perm_seed=st.integers(0, 1000))
def test_phi_independent_of_insertion_order(seed, perm_seed):
    prep = random_prepared(seed, 6, 5)
    order = np.random.default_rng(perm_seed).permutation(6)[:4]
    state = empty_state()
    gains = []
    for v in order:
        gains.append(marginal_gain_meas(prep, state, v))
        state = extend_state(state, prep, v)
    assert state.phi == pytest.approx(eig_value(prep, sorted(order)), rel=1e-10)
    assert sum(gains) == pytest.approx(state.phi, rel=1e-12)
