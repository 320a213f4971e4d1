import numpy as np
import pytest

from gginf import distributions as D

FAMILIES = {
    "exponential": D.exponential,
    "gamma2": lambda: D.gamma(2),
    "hyperexp": lambda: D.hyperexponential([0.3, 0.7], [0.5, 2.0]),
}


@pytest.fixture(params=sorted(FAMILIES))
def dist(request):
    return FAMILIES[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
