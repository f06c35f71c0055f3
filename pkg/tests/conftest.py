import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from confdisk.rkhs import Truncation

settings.register_profile(
    "default",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def t3_8():
    return Truncation(3, 8)


@pytest.fixture(scope="session")
def t3_12():
    return Truncation(3, 12)


@pytest.fixture(scope="session")
def t4_8():
    return Truncation(4, 8)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
