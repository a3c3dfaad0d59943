import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import svbake as sv
from svbake.scenes import quad_scene, room_scene, two_plane_scene


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240815)


@pytest.fixture(scope="session")
def small_quad():
    return quad_scene(96)


@pytest.fixture(scope="session")
def small_room():
    return room_scene(128)


@pytest.fixture(scope="session")
def small_two_planes():
    return two_plane_scene(128)


def make_srgb(rng, h, w):
    return sv.ImageF.from_array(rng.random((h, w, 3), dtype=np.float32), sv.SRGB)
