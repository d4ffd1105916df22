"""Absolute pose error for planar trajectories, and trajectory files."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .geometry import Pose2, Trajectory, wrap_angle

FIRST_POSE = "first-pose"
LEAST_SQUARES = "least-squares"


class AssociationError(ValueError):
    pass


class TrajectoryFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ApeResult:
    trans_rmse: float
    rot_rmse: float
    trans_mean: float
    trans_max: float
    rot_mean: float
    rot_max: float
    trans_errors: np.ndarray = field(repr=False)
    rot_errors: np.ndarray = field(repr=False)     # degrees
    timestamps: np.ndarray = field(repr=False)
    alignment: Pose2 = Pose2()
    align_mode: str = LEAST_SQUARES

    def summary(self) -> str:
        return f"{self.trans_rmse:.3f}/{self.rot_rmse:.3f}"


def associate(est: Trajectory, gt: Trajectory, max_dt: float = 0.01) -> List[Tuple[int, int]]:
    """Greedy nearest-timestamp pairs (est index, gt index), smallest gaps first."""
    if max_dt <= 0:
        raise ValueError("max_dt must be positive")
    te = np.asarray(est.timestamps)
    tg = np.asarray(gt.timestamps)
    cands = []
    for i, t in enumerate(te):
        lo = np.searchsorted(tg, t - max_dt, side="left")
        hi = np.searchsorted(tg, t + max_dt, side="right")
        for j in range(lo, hi):
            cands.append((abs(tg[j] - t), i, j))
    cands.sort()
    used_e, used_g = set(), set()
    pairs = []
    for _, i, j in cands:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        pairs.append((i, j))
    if not pairs:
        rng = lambda ts: f"[{ts[0]:.3f}, {ts[-1]:.3f}]" if len(ts) else "[]"
        raise AssociationError(
            f"no poses associated within {max_dt} s (est {rng(te)}, gt {rng(tg)})"
        )
    pairs.sort()
    return pairs


def fit_rigid_2d(src: np.ndarray, dst: np.ndarray) -> Pose2:
    """Least-squares rotation + translation mapping ``src`` points onto ``dst``."""
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - ms, dst - md
    h = a.T @ b
    theta = math.atan2(h[0, 1] - h[1, 0], h[0, 0] + h[1, 1])
    R = Pose2(theta).rotation
    t = md - R @ ms
    return Pose2(theta, t[0], t[1])


def compute_ape(est: Trajectory, gt: Trajectory, align: str = LEAST_SQUARES,
                max_dt: float = 0.01) -> ApeResult:
    pairs = associate(est, gt, max_dt)
    if len(pairs) < 2:
        raise AssociationError("need at least two associated poses")
    pe = [est.poses[i] for i, _ in pairs]
    pg = [gt.poses[j] for _, j in pairs]
    if align == FIRST_POSE:
        A = pg[0].compose(pe[0].inverse())
    elif align == LEAST_SQUARES:
        A = fit_rigid_2d(np.array([[p.x, p.y] for p in pe]), np.array([[p.x, p.y] for p in pg]))
    else:
        raise ValueError(f"unknown alignment {align!r}")
    aligned = [A.compose(p) for p in pe]
    te = np.array([math.hypot(a.x - g.x, a.y - g.y) for a, g in zip(aligned, pg)])
    re = np.degrees(np.abs([wrap_angle(a.theta - g.theta) for a, g in zip(aligned, pg)]))
    return ApeResult(
        trans_rmse=float(np.sqrt(np.mean(te ** 2))),
        rot_rmse=float(np.sqrt(np.mean(re ** 2))),
        trans_mean=float(te.mean()),
        trans_max=float(te.max()),
        rot_mean=float(re.mean()),
        rot_max=float(re.max()),
        trans_errors=te,
        rot_errors=re,
        timestamps=np.array([gt.timestamps[j] for _, j in pairs]),
        alignment=A,
        align_mode=align,
    )


def ape_series_csv(res: ApeResult) -> str:
    lines = ["timestamp,trans_error_m,rot_error_deg"]
    lines += [f"{t:.9f},{a:.9f},{b:.9f}" for t, a, b in zip(res.timestamps, res.trans_errors, res.rot_errors)]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ files

def format_trajectory(traj: Trajectory) -> str:
    return "".join(f"{t:.9f} {p.x:.9f} {p.y:.9f} {p.theta:.9f}\n" for t, p in traj)


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(format_trajectory(traj))


def _yaw_from_quaternion(qx, qy, qz, qw) -> float:
    return math.atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))


def parse_trajectory(text: str, source: str = "<trajectory>") -> Trajectory:
    """Read ``t x y theta`` lines, or ``t x y z qx qy qz qw`` lines projected to the plane."""
    ts, poses = [], []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise TrajectoryFormatError(f"{source}: line {ln}: non-numeric field in {raw!r}") from None
        if len(vals) == 4:
            t, x, y, th = vals
        elif len(vals) == 8:
            t, x, y, _z, qx, qy, qz, qw = vals
            th = _yaw_from_quaternion(qx, qy, qz, qw)
        else:
            raise TrajectoryFormatError(
                f"{source}: line {ln}: expected 4 or 8 fields, got {len(vals)}"
            )
        if ts and t <= ts[-1]:
            raise TrajectoryFormatError(f"{source}: line {ln}: timestamp not increasing")
        ts.append(t)
        poses.append(Pose2(th, x, y))
    return Trajectory(tuple(ts), tuple(poses))


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    return parse_trajectory(path.read_text(), str(path))
