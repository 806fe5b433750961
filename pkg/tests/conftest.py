import numpy as np
import pytest

from geometry.camera import PinholeCamera, make_pose
from nets.config import ArchitectureConfig
from pipeline.config import SyntheticWorldConfig, TrainConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_camera(width=12, height=8, focal=10.0, pose=None):
    return PinholeCamera(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height, pose)


def yaw_pose(yaw, translation):
    c, s = np.cos(yaw), np.sin(yaw)
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return make_pose(rotation, translation)


@pytest.fixture
def camera():
    return small_camera()


@pytest.fixture
def tiny_world():
    """Deux caméras 16x24, une scène par échantillon, un objet mobile."""
    return SyntheticWorldConfig(
        num_cameras=2, height=16, width=24, samples_per_scene=1,
        num_static_boxes=2, num_dynamic=1, train_seeds=(0, 1), val_seeds=(2,),
    )


@pytest.fixture
def static_world(tiny_world):
    return tiny_world.replace(ego_velocity=[0.0, 0.0, 0.0], num_dynamic=0)


@pytest.fixture
def tiny_architecture():
    return ArchitectureConfig(base_channels=2, pyramid_levels=2, num_cameras=2, sh_degree=0, height=16, width=24)


@pytest.fixture
def tiny_train_config(tiny_architecture):
    return TrainConfig(epochs=1, learning_rate=1e-3, progress=False, architecture=tiny_architecture)
