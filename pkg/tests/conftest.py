import numpy as np
import pytest

from lrcov import RegressionData


def make_data(n, p=2, seed=0, beta=None, noise=1.0):
    """Intercept plus p-1 standard normal covariates; y = x'beta + noise * N(0,1)."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = np.ones(p) if beta is None else np.asarray(beta, float)
    y = X @ beta + noise * rng.standard_normal(n)
    return RegressionData(y, X)


@pytest.fixture
def small_data():
    return make_data(120, p=3, seed=11)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
