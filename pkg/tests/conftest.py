import sys

import numpy as np
import pytest

from gbh_stab import BoundaryFeedbackController, DomainSpec, PhysicalParams, build_grid


@pytest.fixture(scope="session")
def params():
    return PhysicalParams(eta=1.0, delta=1.0, a=1.0, beta=1.0, gamma=0.5, kappa=1)


@pytest.fixture(scope="session")
def domain():
    return DomainSpec(2, (1.0, 2.0))


@pytest.fixture(scope="session")
def grid31(domain):
    return build_grid(domain, 31, 31)


@pytest.fixture(scope="session")
def grid63(domain):
    return build_grid(domain, 63, 63)


@pytest.fixture(scope="session")
def ctrl31(grid31, params):
    return BoundaryFeedbackController(omega=6.0, epsilon=0.1, k=0.1).fit(grid31, params)


@pytest.fixture(scope="session")
def ctrl63(grid63, params):
    return BoundaryFeedbackController(omega=6.0, epsilon=0.1, k=0.1).fit(grid63, params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
