"""Semi-direct odometry: descriptor rotation, rotated features, robust registration."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import features as F
from .descriptor import LodeStarDescriptor, compute_descriptor, estimate_rotation
from .geometry import Pose2, RadarFrame, Trajectory, pixel_bins, pixel_grid, transform_cloud
from .registration import (
    EmptyInput,
    NoCorrespondences,
    RegistrationParams,
    build_surfaces,
    register,
)

log = logging.getLogger(__name__)

OVERLAP_OFF = "off"
OVERLAP_IMAGE = "image-diff"
OVERLAP_TIME = "timestamps"
SELECTIONS = ("k-nearest", "k-strongest", "contour")


@dataclass(frozen=True)
class PipelineConfig:
    bins: int = 360
    k: int = 10
    selection: str = "k-nearest"
    filter_kind: str = F.HIGH_PASS
    grad_threshold: float = 0.3
    intensity_threshold: float = 0.25
    change_threshold: float = 0.02
    overlap_mode: str = OVERLAP_OFF
    max_stale_fraction: float = 0.25
    max_hold: int = 8
    dense_gate: float = 1.2
    subbin: bool = True
    surface_radius: Optional[float] = None      # meters; None -> 2.5 x resolution
    min_neighbors: int = 3
    max_correspondence_distance: Optional[float] = None   # None -> 3 x resolution
    max_iterations: int = 50
    tol: float = 1e-6
    lambda_init: float = 1e-3

    def __post_init__(self):
        if self.bins < 8:
            raise ValueError("bins must be >= 8")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if self.filter_kind not in (F.HIGH_PASS, F.LOW_PASS):
            raise ValueError(f"unknown filter_kind {self.filter_kind!r}")
        if not 0 < self.grad_threshold <= 1:
            raise ValueError("grad_threshold must be in (0, 1]")
        for name in ("intensity_threshold", "change_threshold", "max_stale_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.overlap_mode not in (OVERLAP_OFF, OVERLAP_IMAGE, OVERLAP_TIME):
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.dense_gate < 1 and self.dense_gate != 0:
            raise ValueError("dense_gate must be 0 or >= 1")
        if self.min_neighbors < 2 or self.max_iterations < 1 or self.max_hold < 0:
            raise ValueError("invalid registration settings")

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)

    def registration_params(self, resolution: float) -> RegistrationParams:
        gate = self.max_correspondence_distance
        return RegistrationParams(
            max_correspondence_distance=3.0 * resolution if gate is None else gate,
            max_iterations=self.max_iterations,
            tol=self.tol,
            lambda_init=self.lambda_init,
        )

    def surface_radius_for(self, resolution: float) -> float:
        return 2.5 * resolution if self.surface_radius is None else self.surface_radius


PRESETS: Dict[str, PipelineConfig] = {
    "k10": PipelineConfig(k=10),
    "k50": PipelineConfig(k=50),
}


# ------------------------------------------------------------------ config files

def format_config(cfg: PipelineConfig) -> str:
    """Serialize to the ``key = value`` config grammar (one key per line)."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    kind = type(default)
    if name in ("surface_radius", "max_correspondence_distance"):
        kind = float
    if kind is bool:
        if raw.lower() in ("true", "yes", "on", "1"):
            return True
        if raw.lower() in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str, base: PipelineConfig = PipelineConfig(), source: str = "<config>") -> PipelineConfig:
    defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    kw = {}
    for ln, rawline in enumerate(text.splitlines(), 1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if val not in PRESETS:
                raise ValueError(f"{source}:{ln}: unknown preset {val!r}")
            defaults.update({f.name: getattr(PRESETS[val], f.name) for f in dataclasses.fields(base)})
            continue
        if key not in defaults:
            raise ValueError(f"{source}:{ln}: unknown key {key!r}")
        try:
            kw[key] = _coerce(key, val, defaults[key])
        except ValueError as e:
            raise ValueError(f"{source}:{ln}: {e}") from None
    defaults.update(kw)
    return PipelineConfig(**defaults)


# ------------------------------------------------------------------ odometry

@dataclass(frozen=True)
class OdometryStep:
    prev_id: int
    curr_id: int
    timestamp: float
    theta_L: float
    theta_P: float
    pose_delta: Pose2
    peak_ratio: float = 1.0
    dense_used: bool = False
    degraded: bool = False
    converged: bool = False
    final_cost: float = 0.0
    iterations: int = 0
    n_src: int = 0
    n_dst: int = 0
    inlier_fraction: float = 0.0
    stale_fraction: float = 0.0


@dataclass(frozen=True, eq=False)
class _Prepared:
    descriptor: LodeStarDescriptor
    cloud: F.FeatureCloud


def _denoised(frame: RadarFrame, threshold: float) -> RadarFrame:
    if threshold <= 0:
        return frame
    img = np.where(frame.image >= threshold, frame.image, 0.0)
    return RadarFrame(img, frame.resolution, frame.timestamp, frame.frame_id, frame.bin_times)


def extract_features(frame: RadarFrame, config: PipelineConfig) -> F.FeatureCloud:
    clean = _denoised(frame, config.intensity_threshold)
    contour = F.extract_contour(clean, config.filter_kind, config.grad_threshold)
    if config.selection == "contour":
        return F.contour_cloud(clean, contour, config.bins)
    return F.select_k_nearest(clean, contour, config.k, config.bins,
                              strongest=config.selection == "k-strongest")


def prepare(frame: RadarFrame, config: PipelineConfig) -> _Prepared:
    return _Prepared(compute_descriptor(frame, config.bins), extract_features(frame, config))


def overlap_report(prev: RadarFrame, curr: RadarFrame, config: PipelineConfig) -> Optional[F.OverlapReport]:
    if config.overlap_mode == OVERLAP_OFF:
        return None
    if config.overlap_mode == OVERLAP_TIME and prev.bin_times is not None and curr.bin_times is not None:
        if len(curr.bin_times) == config.bins:
            return F.eliminate_overlap_by_time(prev, curr)
        log.warning("scan-time table has %d bins, expected %d; using image difference",
                    len(curr.bin_times), config.bins)
    return F.eliminate_overlap(prev, curr, config.change_threshold, config.bins)


def stale_content_fraction(frame: RadarFrame, report: F.OverlapReport, threshold: float) -> float:
    """Share of the frame's returns that lie in stale bins."""
    px, py = pixel_grid(frame.width)
    lit = (frame.image >= max(threshold, 1e-12)) & (np.hypot(px, py) <= frame.center)
    if not lit.any():
        return 0.0
    pb = pixel_bins(frame.width, report.bins)[lit]
    return float(report.stale_mask()[pb].mean())


def _check_pair(prev: RadarFrame, curr: RadarFrame) -> None:
    if not prev.same_grid(curr):
        raise ValueError(f"frames {prev.frame_id} and {curr.frame_id} are not congruent")
    if not prev.timestamp < curr.timestamp:
        if not (prev.timestamp == curr.timestamp and prev is curr):
            raise ValueError(f"frame {curr.frame_id} does not follow frame {prev.frame_id} in time")


def _process(prev: RadarFrame, curr: RadarFrame, pp: _Prepared, pc: _Prepared,
             config: PipelineConfig, report: Optional[F.OverlapReport]) -> OdometryStep:
    curr_cloud = pc.cloud
    stale = 0.0
    valid = None
    if report is not None:
        stale = report.dropped_fraction
        curr_cloud = F.apply_overlap_dropout(curr_cloud, report)
        if report.bins == config.bins and report.stale_sectors:
            valid = ~report.stale_mask()

    est = estimate_rotation(pp.descriptor, pc.descriptor, subbin=config.subbin, valid=valid)
    dense_used = est.peak_ratio >= config.dense_gate
    theta_L = est.theta_L if dense_used else 0.0

    # bring the current scan into the previous heading, then refine
    rotated = transform_cloud(curr_cloud.points, Pose2(theta_L))
    radius = config.surface_radius_for(curr.resolution)
    src = build_surfaces(rotated, radius, config.min_neighbors)
    dst = build_surfaces(pp.cloud.points, radius, config.min_neighbors)
    base = dict(prev_id=prev.frame_id, curr_id=curr.frame_id, timestamp=curr.timestamp,
                theta_L=theta_L, peak_ratio=est.peak_ratio, dense_used=dense_used,
                n_src=len(src), n_dst=len(dst), stale_fraction=stale)
    try:
        res = register(src, dst, Pose2(), config.registration_params(curr.resolution))
    except (EmptyInput, NoCorrespondences) as e:
        log.info("frames %d->%d degraded: %s", prev.frame_id, curr.frame_id, e)
        return OdometryStep(theta_P=0.0, pose_delta=Pose2(theta_L), degraded=True, **base)
    theta_P = res.pose.theta
    delta = Pose2(theta_L + theta_P, res.pose.x, res.pose.y)
    return OdometryStep(theta_P=theta_P, pose_delta=delta, converged=res.converged,
                        final_cost=res.final_cost, iterations=res.iterations,
                        inlier_fraction=res.inlier_fraction, **base)


def process_pair(prev: RadarFrame, curr: RadarFrame, config: PipelineConfig = PipelineConfig(),
                 report: Optional[F.OverlapReport] = None) -> OdometryStep:
    """Ego-motion from ``prev`` to ``curr`` (pose of curr expressed in prev)."""
    _check_pair(prev, curr)
    if report is None:
        report = overlap_report(prev, curr, config)
    return _process(prev, curr, prepare(prev, config), prepare(curr, config), config, report)


def run_sequence(frames: Sequence[RadarFrame], config: PipelineConfig = PipelineConfig()
                 ) -> Tuple[Trajectory, List[OdometryStep]]:
    """Accumulate pair-wise ego-motion into a trajectory starting at identity.

    With overlap elimination enabled a frame whose returns are mostly stale
    relative to the current reference frame is not registered (its
    subscription is dropped) until enough sectors have been rescanned or
    ``max_hold`` frames were skipped.  Without it every consecutive pair is
    registered.
    """
    if len(frames) < 2:
        raise ValueError("run_sequence needs at least two frames")
    cache: Dict[int, _Prepared] = {}

    def prep(i):
        if i not in cache:
            cache[i] = prepare(frames[i], config)
        return cache[i]

    ref = 0
    pose = Pose2.identity()
    stamps = [frames[0].timestamp]
    poses = [pose]
    steps: List[OdometryStep] = []
    held = 0
    for i in range(1, len(frames)):
        prev, curr = frames[ref], frames[i]
        _check_pair(prev, curr)
        report = overlap_report(prev, curr, config)
        if report is not None and held < config.max_hold:
            if stale_content_fraction(curr, report, config.intensity_threshold) > config.max_stale_fraction:
                held += 1
                continue
        step = _process(prev, curr, prep(ref), prep(i), config, report)
        steps.append(step)
        pose = pose.compose(step.pose_delta)
        stamps.append(curr.timestamp)
        poses.append(pose)
        cache.pop(ref, None)
        ref, held = i, 0
    return Trajectory(tuple(stamps), tuple(poses)), steps


def step_rows(steps: Sequence[OdometryStep]) -> List[dict]:
    rows = []
    for s in steps:
        rows.append({
            "prev_id": s.prev_id, "curr_id": s.curr_id, "timestamp": f"{s.timestamp:.9f}",
            "theta_L": f"{s.theta_L:.9f}", "theta_P": f"{s.theta_P:.9f}",
            "dx": f"{s.pose_delta.x:.9f}", "dy": f"{s.pose_delta.y:.9f}",
            "dtheta": f"{s.pose_delta.theta:.9f}", "peak_ratio": f"{s.peak_ratio:.6f}",
            "dense_used": int(s.dense_used), "final_cost": f"{s.final_cost:.6f}",
            "iterations": s.iterations, "n_src": s.n_src, "n_dst": s.n_dst,
            "inlier_fraction": f"{s.inlier_fraction:.6f}",
            "stale_fraction": f"{s.stale_fraction:.6f}",
            "converged": int(s.converged), "degraded": int(s.degraded),
        })
    return rows
