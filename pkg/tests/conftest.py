import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mnlqr.model import ModeTensor

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_sym(rng, d, psd=False):
    X = rng.standard_normal((d, d))
    return X @ X.T if psd else X + X.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def example_v():
    """Three-mode example system with nx=2, nu=1."""
    A = [np.array([[2.0, 0], [1, 0]]), np.array([[0.0, 3], [0, 0]]), np.array([[0.0, 0], [0, 1]])]
    B = [np.zeros((2, 1)), np.zeros((2, 1)), np.array([[0.0], [2.0]])]
    return ModeTensor.from_modes(A, B)
