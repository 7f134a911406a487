import os
import sys

import pytest

# the project runs from the repository root, as main.py does
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from datasets.presets import initial_condition  # noqa: E402
from graphs.grid import make_grid  # noqa: E402
from graphs.models.population import make_fvp, make_sbm  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the Monte Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo runs that take minutes")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def grid():
    return make_grid(8.0, 64, 1.0, 32)


@pytest.fixture
def fvp(grid):
    return make_fvp(grid, initial_condition("gaussian-cdf", "FVP", grid), epsilon=1e-3, na=64)


@pytest.fixture
def sbm(grid):
    return make_sbm(grid, initial_condition("gaussian-cdf", "SBM", grid), epsilon=1e-3, na=64)
