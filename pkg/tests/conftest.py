import pytest

from app.services.presets import build_measure, build_space
from app.services.walk_engine import WalkConfig


@pytest.fixture
def line_space():
    return build_space("line")


@pytest.fixture
def tree_space():
    return build_space("tree_flats")


@pytest.fixture
def building_space():
    return build_space("building_sl3", q=2)


@pytest.fixture
def make_config():
    """Factory for small WalkConfigs on a named backend/preset."""
    def _make(backend, preset=None, n_steps=32, n_trials=8, seed=1, checkpoints=(), certify=False, **options):
        space = build_space(backend, **options)
        return WalkConfig(space=space, measure=build_measure(space, backend, preset),
                          n_steps=n_steps, n_trials=n_trials, seed=seed,
                          checkpoints=tuple(checkpoints), certify=certify)
    return _make
