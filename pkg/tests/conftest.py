import numpy as np
import pytest

from catalog import get_model
from config import RunConfig
from noise import build_bundle


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run acceptance-scale tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def lin_lip():
    return get_model('lin-lip')


@pytest.fixture
def loclip():
    return get_model('loclip')


@pytest.fixture
def pure_drift():
    return get_model('pure-drift')


@pytest.fixture
def null_model():
    return get_model('null')


@pytest.fixture
def grid():
    return np.linspace(0.0, 0.2, 21)


@pytest.fixture
def make_bundle(grid):
    def factory(spec, n, seed=7, grid=grid):
        rate = spec.dominating_rate() if spec.has_jumps else 1.0
        return build_bundle(seed, n, grid, rate, spec.mark_law)
    return factory


@pytest.fixture
def testing_config(tmp_path):
    return RunConfig.from_profile('testing', output_dir=str(tmp_path / 'runs'))
