import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jkosplit.grid import GridDensity, make_grid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid():
    # dx = 0.02, so [0, 1] is exactly 50 cells
    return make_grid(10.0, 1000)


@pytest.fixture
def unit_uniform(grid):
    x = grid.centers
    return GridDensity(grid, ((x > 0) & (x < 1)).astype(float))


def smooth_bump(grid, center=0.0, width=1.0, mass=1.0):
    x = grid.centers
    v = np.maximum(1.0 - ((x - center) / width) ** 2, 0.0) ** 2
    return GridDensity(grid, v * mass / (v.sum() * grid.dx))


def gaussian(grid, center=0.0, sigma=1.0, mass=1.0):
    x = grid.centers
    v = np.exp(-0.5 * ((x - center) / sigma) ** 2)
    return GridDensity(grid, v * mass / (v.sum() * grid.dx))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for res in RESULTS.values():
        terminalreporter.write_line(res.line())
