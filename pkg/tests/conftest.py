import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsedet.core import GROUND_Z0, OrientedBox3, Pose2
from sparsedet.simulate import LidarModel, Scene, SimObstacle, Trajectory

settings.register_profile(
    "repo", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")


def static_scene(obstacles, t0=0.0, t1=1.0, ground=GROUND_Z0):
    """Scene of static boxes: ``obstacles`` holds (x, y, yaw, (L, W, H)) or (.., cls) tuples."""
    obs = []
    for k, spec in enumerate(obstacles):
        x, y, yaw, dims = spec[:4]
        cls = spec[4] if len(spec) > 4 else "vehicle"
        box = OrientedBox3((0.0, 0.0, dims[2] / 2), *dims)
        obs.append(SimObstacle(k, box, cls, Trajectory.static(Pose2(x, y, yaw), t0, t1)))
    return Scene(ground, tuple(obs), Trajectory.static(Pose2(), t0, t1))


@pytest.fixture
def lidar16():
    return LidarModel.uniform(16)


@pytest.fixture
def quiet_lidar16():
    return LidarModel.uniform(16, range_noise_sigma=0.0)


def yaw_error_deg(a, b):
    d = (a - b + math.pi / 2) % math.pi - math.pi / 2
    return abs(math.degrees(d))


def rng(seed=0):
    return np.random.default_rng(seed)


# acceptance criteria report lines, printed after the run
ACCEPTANCE_LINES: dict = {}


def report(number: int, ok: bool, text: str) -> bool:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
