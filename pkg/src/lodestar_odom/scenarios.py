"""Bundled synthetic scenes and routes."""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .geometry import Pose2, Trajectory
from .synth import FULL, PARTIAL, FrameSpec, ScanSchedule, Scene

HARBOR_POLYGONS = (
    # west shore, jagged waterline facing east
    ([(-100, -70), (-20, -55), (40, -75), (90, -50), (140, -65), (200, -45), (260, -80),
      (260, -300), (-100, -300)], 1.0),
    # north shore
    ([(250, -100), (235, -20), (245, 40), (228, 100), (240, 160), (225, 220), (250, 300),
      (400, 300), (400, -100)], 1.0),
    # island enclosed by the route
    ([(40, 40), (120, 35), (150, 70), (140, 130), (100, 160), (60, 120), (30, 80)], 1.0),
    # southern breakwater
    ([(60, 290), (150, 300), (200, 280), (230, 320), (100, 350), (20, 330)], 1.0),
    # piers and rocks
    ([(55, -70), (65, -70), (65, -30), (55, -30)], 0.5),
    ([(150, -60), (156, -60), (156, -28), (150, -28)], 0.5),
    ([(96, -24), (104, -24), (104, -16), (96, -16)], 1.0),
    ([(206, 56), (214, 56), (214, 64), (206, 64)], 1.0),
    ([(126, 246), (134, 246), (134, 254), (126, 254)], 0.5),
    ([(-40, 20), (-30, 24), (-34, 34), (-44, 30)], 1.0),
)


def curved_harbor_scene(speckle_sigma: float = 0.05, false_alarm_rate: float = 2e-4,
                        seed: int = 7) -> Scene:
    polys = tuple(np.array(p, float) for p, _ in HARBOR_POLYGONS)
    rcs = tuple(r for _, r in HARBOR_POLYGONS)
    return Scene(polys, rcs, (0.0, 0.5, 1.0), false_alarm_rate, speckle_sigma, seed)


def integrate_route(turn_rate: Callable[[float], float], speed: float, times: Sequence[float],
                    start: Pose2 = Pose2(), substeps: int = 100) -> Trajectory:
    """Unicycle route sampled at ``times`` (exact arcs between substeps)."""
    times = np.asarray(times, float)
    th, x, y = start.theta, start.x, start.y
    t = times[0]
    poses = [Pose2(th, x, y)]
    for t_next in times[1:]:
        h = (t_next - t) / substeps
        for j in range(substeps):
            w = turn_rate(t + (j + 0.5) * h)
            if abs(w) < 1e-12:
                x += speed * h * math.cos(th)
                y += speed * h * math.sin(th)
            else:
                x += speed / w * (math.sin(th + w * h) - math.sin(th))
                y -= speed / w * (math.cos(th + w * h) - math.cos(th))
            th += w * h
        t = t_next
        poses.append(Pose2(th, x, y))
    return Trajectory(tuple(times), tuple(poses))


def hook_turn_rate(t: float) -> float:
    if 40 <= t < 50:
        return math.radians(9.0)          # steep 90 degree turn
    if 80 <= t < 120:
        return math.radians(2.75)         # long hook
    return 0.0


def curved_harbor(n_frames: int = 120, frame_period: float = 1.0, speed: float = 4.0):
    """Scene, ground-truth route, frame spec and schedule of the curved-harbor benchmark."""
    times = np.arange(n_frames) * frame_period
    traj = integrate_route(hook_turn_rate, speed, times)
    return curved_harbor_scene(), traj, FrameSpec(301, 2.0, 360), ScanSchedule(frame_period, frame_period, FULL)


def straight_run(n_frames: int = 10, frame_period: float = 1.0, speed: float = 4.0):
    times = np.arange(n_frames) * frame_period
    traj = integrate_route(lambda t: 0.0, speed, times, Pose2(0.0, 20.0, 0.0))
    return curved_harbor_scene(), traj, FrameSpec(301, 2.0, 360), ScanSchedule(frame_period, frame_period, FULL)


def partial_sector_harbor(n_frames: int = 120, sweep_period: float = 1.0, frames_per_sweep: int = 4,
                          speed: float = 4.0, start_time: float = 25.0):
    """Curved-harbor route published faster than the antenna revolves (stale sectors).

    The run joins the curved-harbor route at ``start_time`` so that the
    default 30 s window contains the steep turn.
    """
    fp = sweep_period / frames_per_sweep
    times = np.arange(n_frames) * fp
    lead = integrate_route(hook_turn_rate, speed, [0.0, start_time])
    traj = integrate_route(lambda t: hook_turn_rate(t + start_time), speed, times, lead.poses[-1])
    return curved_harbor_scene(), traj, FrameSpec(301, 2.0, 360), ScanSchedule(fp, sweep_period, PARTIAL)


SCENARIOS = {
    "curved-harbor": curved_harbor,
    "straight": straight_run,
    "partial-sector": partial_sector_harbor,
}
