import numpy as np
import pytest

from gamdepth.scenes import make_plane_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def plane64():
    return make_plane_scene(3, (64, 64), 0.0)


@pytest.fixture(scope="session")
def banded64():
    return make_plane_scene(5, (64, 64), 0.4)
