import numpy as np
import pytest
import torch

from helpers import ensure_dataset, gt_calibrations


@pytest.fixture(autouse=True)
def _deterministic():
    torch.manual_seed(1234)
    np.random.seed(1234)


@pytest.fixture(scope="session")
def template():
    from eyelidlab.eyeball import build_template

    return build_template(32)


@pytest.fixture(scope="session")
def main_scene():
    return ensure_dataset("main")


@pytest.fixture(scope="session")
def blink_scene():
    return ensure_dataset("blink")


@pytest.fixture(scope="session")
def orbit_scene():
    return ensure_dataset("orbit")


@pytest.fixture(scope="session")
def main_gt_calib(main_scene):
    return gt_calibrations(main_scene.root)
