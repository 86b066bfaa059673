import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heatnull.grid import make_grid
from heatnull.weights import WeightParams, WeightSet

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 16, 0.5, (0.2, 0.8))


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 32, 0.5, (0.2, 0.8))


@pytest.fixture(scope="session")
def weights_for():
    def make(grid, s=1.0, **kw):
        return WeightSet(WeightParams(T=grid.T, omega=grid.omega, **kw).with_s(s))
    return make


def sine(amp=1.0, k=1):
    return lambda x: amp * np.sin(k * np.pi * np.asarray(x, dtype=float))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
