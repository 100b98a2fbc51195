import numpy as np
import pytest

from eigplace import InverseProblem, assemble_rows


def random_problem(seed, d, n, triangular=False):
    """Seeded dense instance with a well-conditioned prior factor."""
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((d, n))
    sigma = rng.uniform(0.5, 2.0, size=d)
    B = rng.standard_normal((n, n)) / np.sqrt(n)
    C = B @ B.T + 0.5 * np.eye(n)
    if triangular:
        R = np.linalg.cholesky(C)
    else:
        w, Q = np.linalg.eigh(C)
        R = (Q * np.sqrt(w)) @ Q.T
    return InverseProblem(F, sigma, rng.standard_normal(n), R)


def random_prepared(seed, d, n):
    return assemble_rows(random_problem(seed, d, n))


def dense_phi(prepared, S):
    """Parameter-space oracle: log det(I_n + sum_{s in S} f_s f_s^T)."""
    S = list(S)
    A = prepared.rows[S]
    sign, logdet = np.linalg.slogdet(np.eye(prepared.n) + A.T @ A)
    assert sign > 0
    return logdet


def orthogonal_prepared(norms, n=None):
    """Rows norms[i] * e_i: a modular instance."""
    from eigplace import PreparedDesign

    d = len(norms)
    rows = np.zeros((d, n or d))
    rows[np.arange(d), np.arange(d)] = norms
    return PreparedDesign.from_rows(rows)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    passed = report.passed if report.when == "call" else False
    prev = _ACCEPTANCE.get(number, (title, True, 0.0))
    _ACCEPTANCE[number] = (title, prev[1] and passed, prev[2] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, secs = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({secs:.2f}s)")
