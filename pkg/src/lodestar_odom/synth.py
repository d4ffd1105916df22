"""Synthetic maritime radar: polygon coastlines, quantized returns, scan schedules.

Frames are produced by casting rays from the sensor and painting the first
coastline hit of every ray.  Returns take one of a few discrete RCS levels,
optionally perturbed by speckle, plus single-pixel false alarms.  In
``partial-sector`` mode each frame only refreshes the azimuth bins the
antenna swept since the previous frame; the rest is carried over, and each
refreshed bin is drawn from the vessel pose at that bin's sweep time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import TWO_PI, Pose2, RadarFrame, Trajectory, disk_mask, pixel_bins

FULL = "full-rotation"
PARTIAL = "partial-sector"


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polygon_is_simple(poly: np.ndarray) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Scene:
    """Coastline polygons in world meters plus the radar return model."""

    coast_polygons: Tuple[np.ndarray, ...] = ()
    polygon_rcs: Tuple[float, ...] = ()
    rcs_levels: Tuple[float, ...] = (0.0, 0.5, 1.0)
    false_alarm_rate: float = 0.0
    speckle_sigma: float = 0.0
    seed: int = 0
    extent: Optional[Tuple[float, float, float, float]] = None

    def __post_init__(self):
        polys = tuple(np.asarray(p, dtype=float).reshape(-1, 2) for p in self.coast_polygons)
        rcs = tuple(self.polygon_rcs) or tuple(max(self.rcs_levels) for _ in polys)
        if len(rcs) != len(polys):
            raise ValueError("one RCS value per polygon is required")
        levels = tuple(float(v) for v in self.rcs_levels)
        if list(levels) != sorted(levels) or 0.0 not in levels:
            raise ValueError("rcs_levels must be sorted ascending and contain 0")
        if any(v < 0 or v > 1 for v in levels):
            raise ValueError("rcs_levels must lie in [0, 1]")
        for i, p in enumerate(polys):
            if len(p) < 3:
                raise ValueError(f"polygon {i} has fewer than 3 vertices")
            if not polygon_is_simple(p):
                raise ValueError(f"polygon {i} is self-intersecting")
        if not 0 <= self.false_alarm_rate <= 1 or self.speckle_sigma < 0:
            raise ValueError("invalid noise parameters")
        object.__setattr__(self, "coast_polygons", polys)
        object.__setattr__(self, "polygon_rcs", tuple(float(v) for v in rcs))
        object.__setattr__(self, "rcs_levels", levels)
        object.__setattr__(self, "_edges", self._build_edges())

    def quantized_rcs(self, i: int) -> float:
        levels = np.asarray(self.rcs_levels)
        return float(levels[np.argmin(np.abs(levels - self.polygon_rcs[i]))])

    def bounds(self, margin: float = 0.0) -> Optional[Tuple[float, float, float, float]]:
        """(xmin, ymin, xmax, ymax) of valid sensor positions.

        An explicit ``extent`` wins; otherwise the polygon bounding box grown
        by ``margin`` (the sensor range, so the coast stays observable).
        """
        if self.extent is not None:
            return tuple(float(v) for v in self.extent)
        if not self.coast_polygons:
            return None
        allp = np.vstack(self.coast_polygons)
        lo, hi = allp.min(axis=0) - margin, allp.max(axis=0) + margin
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    def edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Segment start points, end points and per-segment RCS level."""
        return self._edges

    def _build_edges(self):
        a, b, lv = [], [], []
        for i, p in enumerate(self.coast_polygons):
            a.append(p)
            b.append(np.roll(p, -1, axis=0))
            lv.append(np.full(len(p), self.quantized_rcs(i)))
        if not a:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)
        return np.vstack(a), np.vstack(b), np.concatenate(lv)

    def with_noise(self, speckle_sigma=None, false_alarm_rate=None, seed=None) -> "Scene":
        return Scene(
            self.coast_polygons,
            self.polygon_rcs,
            self.rcs_levels,
            self.false_alarm_rate if false_alarm_rate is None else false_alarm_rate,
            self.speckle_sigma if speckle_sigma is None else speckle_sigma,
            self.seed if seed is None else seed,
            self.extent,
        )


@dataclass(frozen=True)
class ScanSchedule:
    frame_period: float = 1.0
    sweep_period: float = 1.0
    mode: str = FULL

    def __post_init__(self):
        if self.frame_period <= 0 or self.sweep_period <= 0:
            raise ValueError("frame and sweep periods must be positive")
        if self.mode not in (FULL, PARTIAL):
            raise ValueError(f"unknown scan mode {self.mode!r}")

    def last_sweep_times(self, t: float, bins: int) -> np.ndarray:
        """Most recent time <= t at which the antenna pointed at each bin center."""
        omega = TWO_PI / self.sweep_period
        beta = np.arange(bins) * (TWO_PI / bins)
        lag = np.mod(omega * t - beta, TWO_PI) / omega
        return t - lag


@dataclass(frozen=True)
class FrameSpec:
    width: int = 301
    resolution: float = 2.0
    bins: int = 360

    def __post_init__(self):
        if self.width < 3:
            raise ValueError("frame width too small")

    @property
    def r_max(self) -> float:
        return self.resolution * (self.width // 2)

    def rays_per_bin(self) -> int:
        # keep ray spacing below half a pixel at the outer ring
        return max(1, math.ceil(2.0 * TWO_PI * (self.width // 2) / self.bins))


class SceneBoundsError(ValueError):
    pass


def cast_rays(scene: Scene, origins: np.ndarray, dirs: np.ndarray, max_range: float):
    """First-hit range and RCS per ray; range is inf where nothing is hit."""
    a, b, lv = scene.edges()
    m = len(dirs)
    rng = np.full(m, np.inf)
    level = np.zeros(m)
    if len(a) == 0 or m == 0:
        return rng, level
    # drop segments that no origin can reach within max_range
    lo, hi = origins.min(axis=0) - max_range, origins.max(axis=0) + max_range
    near = (np.maximum(a, b) >= lo).all(axis=1) & (np.minimum(a, b) <= hi).all(axis=1)
    a, b, lv = a[near], b[near], lv[near]
    if len(a) == 0:
        return rng, level
    e = b - a                                  # (E, 2)
    if np.all(origins == origins[0]):
        origins = origins[:1]                  # broadcast a single origin
    # ray o + t d meets segment a + u e
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    den = dx * e[None, :, 1] - dy * e[None, :, 0]
    ox, oy = origins[:, 0:1], origins[:, 1:2]
    wx, wy = a[None, :, 0] - ox, a[None, :, 1] - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * e[None, :, 1] - wy * e[None, :, 0]) / den
        u = (wx * dy - wy * dx) / den
    ok = (np.abs(den) > 1e-12) & (t > 0) & (u >= 0) & (u <= 1) & (t <= max_range)
    t = np.where(ok, t, np.inf)
    j = np.argmin(t, axis=1)
    rng = t[np.arange(m), j]
    level = np.where(np.isfinite(rng), lv[j], 0.0)
    return rng, level


def _paint(image: np.ndarray, spec: FrameSpec, beta: np.ndarray, rng: np.ndarray,
           level: np.ndarray) -> None:
    c = spec.width // 2
    hit = np.isfinite(rng) & (level > 0)
    r_px = rng[hit] / spec.resolution
    rows = np.rint(c - r_px * np.sin(beta[hit])).astype(int)
    cols = np.rint(c + r_px * np.cos(beta[hit])).astype(int)
    inside = (rows >= 0) & (rows < spec.width) & (cols >= 0) & (cols < spec.width)
    np.maximum.at(image, (rows[inside], cols[inside]), level[hit][inside])


def render_frame(scene: Scene, pose: Pose2, frame_spec: FrameSpec = FrameSpec(),
                 schedule: ScanSchedule = ScanSchedule(), t: float = 0.0,
                 frame_id: int = 0, previous: Optional[RadarFrame] = None,
                 pose_at: Optional[Callable[[float], Pose2]] = None) -> RadarFrame:
    """Render one radar frame seen from ``pose`` (sensor-to-world).

    In partial-sector mode the bins swept after ``previous.timestamp`` are
    redrawn on top of ``previous``; ``pose_at`` supplies the pose at each
    bin's sweep time (defaults to ``pose``).  Without ``previous`` every bin
    is drawn.
    """
    bounds = scene.bounds(frame_spec.r_max)
    if bounds is not None:
        x0, y0, x1, y1 = bounds
        if not (x0 <= pose.x <= x1 and y0 <= pose.y <= y1):
            raise SceneBoundsError(
                f"pose ({pose.x:.1f}, {pose.y:.1f}) outside scene bounds {bounds}"
            )
    spec = frame_spec
    nb = spec.bins
    if previous is not None and previous.image.shape != (spec.width, spec.width):
        raise ValueError("previous frame does not match frame spec")

    if schedule.mode == FULL:
        bin_times = np.full(nb, float(t))
        fresh_bins = np.ones(nb, bool)
        image = np.zeros((spec.width, spec.width))
    else:
        bin_times = schedule.last_sweep_times(t, nb)
        if previous is None:
            fresh_bins = np.ones(nb, bool)
            image = np.zeros((spec.width, spec.width))
        else:
            fresh_bins = bin_times > previous.timestamp
            old = previous.bin_times if previous.bin_times is not None else np.full(nb, previous.timestamp)
            bin_times = np.where(fresh_bins, bin_times, old)
            image = np.array(previous.image, dtype=float)

    all_fresh = bool(fresh_bins.all())
    fresh_px = None if all_fresh else fresh_bins[pixel_bins(spec.width, nb)]
    if not all_fresh:
        image[fresh_px] = 0.0

    # rays supersampled inside every fresh bin, centered on the bin azimuth
    per = spec.rays_per_bin()
    offs = (np.arange(per) + 0.5) / per - 0.5
    kk = np.repeat(np.nonzero(fresh_bins)[0], per)
    beta = (kk + np.tile(offs, int(fresh_bins.sum()))) * (TWO_PI / nb)
    if schedule.mode == FULL or pose_at is None:
        ray_pose_th = np.full(len(kk), pose.theta)
        origins = np.tile([pose.x, pose.y], (len(kk), 1))
    else:
        uniq = {}
        for k in np.unique(kk):
            uniq[k] = pose_at(float(bin_times[k]))
        ray_pose_th = np.array([uniq[k].theta for k in kk])
        origins = np.array([[uniq[k].x, uniq[k].y] for k in kk]).reshape(-1, 2)
    # body direction (sin b, cos b) rotated into the world
    bx, by = np.sin(beta), np.cos(beta)
    cth, sth = np.cos(ray_pose_th), np.sin(ray_pose_th)
    dirs = np.column_stack([cth * bx - sth * by, sth * bx + cth * by])
    rng, level = cast_rays(scene, origins, dirs, spec.r_max)
    layer = np.zeros_like(image)
    _paint(layer, spec, beta, rng, level)
    if not all_fresh:
        layer[~fresh_px] = 0.0

    gen = np.random.default_rng([int(scene.seed), int(frame_id)])
    if scene.speckle_sigma > 0:
        lit = np.nonzero(layer)
        noise = gen.normal(0.0, scene.speckle_sigma, size=len(lit[0]))
        layer[lit] = np.clip(layer[lit] + noise, 0.0, 1.0)
    if scene.false_alarm_rate > 0:
        fa = (gen.random(layer.shape) < scene.false_alarm_rate) & disk_mask(spec.width)
        if not all_fresh:
            fa &= fresh_px
        layer[fa] = max(scene.rcs_levels)
    if all_fresh:
        image = layer
    else:
        image[fresh_px] = layer[fresh_px]
    return RadarFrame(image, spec.resolution, float(t), int(frame_id), bin_times)


def generate_sequence(scene: Scene, trajectory: Trajectory, frame_spec: FrameSpec = FrameSpec(),
                      schedule: ScanSchedule = ScanSchedule()) -> Tuple[List[RadarFrame], Trajectory]:
    """One frame per trajectory pose; ground truth is the trajectory itself."""
    ts = np.asarray(trajectory.timestamps)
    if schedule.mode == PARTIAL and len(ts) > 1:
        dts = np.diff(ts)
        if not np.allclose(dts, schedule.frame_period, rtol=1e-6, atol=1e-9):
            raise ValueError("trajectory spacing does not match schedule.frame_period")
    frames: List[RadarFrame] = []
    prev = None
    for i, (t, pose) in enumerate(trajectory):
        if schedule.mode == PARTIAL:
            f = render_frame(scene, pose, frame_spec, schedule, t, i, prev, trajectory.pose_at)
        else:
            f = render_frame(scene, pose, frame_spec, schedule, t, i)
        frames.append(f)
        prev = f
    return frames, trajectory


def sector_runs(bin_times: np.ndarray) -> List[Tuple[int, int, float]]:
    """Collapse per-bin scan times into (bin_start, bin_end_exclusive, time) runs."""
    runs = []
    n = len(bin_times)
    start = 0
    for k in range(1, n + 1):
        if k == n or bin_times[k] != bin_times[start]:
            runs.append((start, k, float(bin_times[start])))
            start = k
    return runs


def bin_times_from_runs(runs: Sequence[Tuple[int, int, float]], bins: int) -> np.ndarray:
    out = np.full(bins, np.nan)
    for b0, b1, tt in runs:
        out[int(b0):int(b1)] = tt
    if np.isnan(out).any():
        raise ValueError("sector sidecar does not cover every azimuth bin")
    return out


# ---------------------------------------------------------------- scene files

def parse_scene(text: str, source: str = "<scene>") -> Scene:
    """Parse the plain-text scene grammar (see README)."""
    kw = {}
    polys, rcs = [], []
    cur = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if cur is not None:
            if line == "end":
                polys.append(np.array(cur[1]))
                rcs.append(cur[0])
                cur = None
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{source}:{ln}: expected 'x y' vertex, got {raw!r}")
            try:
                cur[1].append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{source}:{ln}: bad vertex {raw!r}") from None
            continue
        if line.startswith("polygon"):
            level = None
            for tok in line.split()[1:]:
                if tok.startswith("rcs="):
                    level = float(tok[4:])
                else:
                    raise ValueError(f"{source}:{ln}: unknown polygon option {tok!r}")
            cur = (level, [])
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{ln}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "rcs_levels":
            kw[key] = tuple(float(v) for v in val.replace(",", " ").split())
        elif key in ("false_alarm_rate", "speckle_sigma"):
            kw[key] = float(val)
        elif key == "seed":
            kw[key] = int(val)
        elif key == "extent":
            vals = tuple(float(v) for v in val.replace(",", " ").split())
            if len(vals) != 4:
                raise ValueError(f"{source}:{ln}: extent needs 4 numbers")
            kw[key] = vals
        else:
            raise ValueError(f"{source}:{ln}: unknown key {key!r}")
    if cur is not None:
        raise ValueError(f"{source}: polygon block not closed with 'end'")
    levels = kw.get("rcs_levels", (0.0, 0.5, 1.0))
    rcs = [max(levels) if r is None else r for r in rcs]
    return Scene(tuple(polys), tuple(rcs), **kw)


def format_scene(scene: Scene) -> str:
    out = [
        f"rcs_levels = {' '.join(repr(v) for v in scene.rcs_levels)}",
        f"false_alarm_rate = {scene.false_alarm_rate!r}",
        f"speckle_sigma = {scene.speckle_sigma!r}",
        f"seed = {scene.seed}",
    ]
    if scene.extent is not None:
        out.append(f"extent = {' '.join(repr(float(v)) for v in scene.extent)}")
    for poly, level in zip(scene.coast_polygons, scene.polygon_rcs):
        out.append(f"polygon rcs={level!r}")
        out.extend(f"  {float(x)!r} {float(y)!r}" for x, y in poly)
        out.append("end")
    return "\n".join(out) + "\n"


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scene file not found: {path}")
    return parse_scene(path.read_text(), str(path))
