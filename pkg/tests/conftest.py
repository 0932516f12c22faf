import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nowcast.synthetic import generate_synthetic_panel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo_panel():
    panel, truth = generate_synthetic_panel(1)
    return panel


@pytest.fixture(scope="session")
def small_panel():
    panel, _ = generate_synthetic_panel(3, n_months=60, p=12)
    return panel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
