import os
import sys

import numpy as np
import pytest

# Add the project root directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from common.rng import stream
from config.reader import NoiseSpec, load_config, load_scene_inputs
from geom3d import CameraIntrinsics, ObjectModel, Pose, Rotation3


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run acceptance-scale Monte-Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_config():
    """Default configuration shrunk so experiments run in seconds"""
    return load_config(overrides={
        "n_calib": 50, "n_test": 100, "n_resamples": 3, "n_scenes": 4, "trials": 200,
        "witness_trials": 200, "sample_min_candidates": 2,
    })


@pytest.fixture
def scene_inputs(small_config):
    return load_scene_inputs(small_config)


@pytest.fixture
def model(scene_inputs) -> ObjectModel:
    return scene_inputs[0]


@pytest.fixture
def intrinsics(scene_inputs) -> CameraIntrinsics:
    return scene_inputs[1]


@pytest.fixture
def cuboid_model() -> ObjectModel:
    """Box corners centered exactly at the origin"""
    corners = np.array([[x, y, z] for x in (-0.05, 0.05) for y in (-0.04, 0.04) for z in (-0.045, 0.045)])
    return ObjectModel(corners, "cuboid")


@pytest.fixture
def clean_noise() -> NoiseSpec:
    return NoiseSpec(sigma_blob=3.0, sigma_det=0.0, p_out=0.0, w_out=0.3)


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(0, "tests")


def random_pose(rng: np.random.Generator, depth=(0.8, 1.5)) -> Pose:
    """Random rotation and a translation that keeps a 10 cm object well in front of the camera"""
    rot = Rotation3.from_rotvec(rng.normal(size=3))
    t = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(*depth)])
    return Pose(rot, t)
