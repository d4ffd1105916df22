import math

import numpy as np
import pytest

from lodestar_odom import scenarios
from lodestar_odom.geometry import Pose2
from lodestar_odom.synth import FULL, FrameSpec, ScanSchedule, Scene, render_frame


@pytest.fixture(scope="session")
def harbor():
    """Curved-harbor scene, route, frame spec and schedule."""
    return scenarios.curved_harbor()


@pytest.fixture(scope="session")
def clean_scene(harbor):
    return harbor[0].with_noise(speckle_sigma=0.0, false_alarm_rate=0.0)


@pytest.fixture(scope="session")
def small_spec():
    return FrameSpec(width=201, resolution=2.0, bins=360)


@pytest.fixture(scope="session")
def wall_scene():
    # a long wall 100 m east (+y) of the origin
    wall = np.array([[-400.0, 100.0], [400.0, 100.0], [400.0, 110.0], [-400.0, 110.0]])
    return Scene((wall,), (1.0,))


def render(scene, pose, spec, t=0.0, frame_id=0):
    return render_frame(scene, pose, spec, ScanSchedule(1.0, 1.0, FULL), t, frame_id)


def deg(x):
    return math.degrees(x)


def rad(x):
    return math.radians(x)


def pose_error(est: Pose2, ref: Pose2):
    """(translation m, |rotation| deg) between two poses."""
    d = ref.inverse().compose(est)
    return math.hypot(d.x, d.y), abs(math.degrees(d.theta))
