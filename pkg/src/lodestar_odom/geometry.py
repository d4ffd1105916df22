"""Planar poses, radar frames and point clouds.

Axis convention (used everywhere in the package): the image center is the
sensor origin, +x points to image "up" (decreasing row) and +y to image
"right" (increasing column).  The azimuth ``theta`` of a pixel is measured
so that a radial sample at range ``r`` sits at
``(row, col) = (c - r sin(theta), c + r cos(theta))`` with ``c`` the center
index, i.e. the point ``(x, y) = (r sin(theta), r cos(theta))``.
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """SE(2) transform mapping p -> R(theta) p + (x, y)."""

    theta: float = 0.0
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose2":
        return cls(math.atan2(m[1, 0], m[0, 0]), m[0, 2], m[1, 2])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def rotation(self) -> np.ndarray:
        return rot2(self.theta)

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = (self.x, self.y)
        return m

    def compose(self, other: "Pose2") -> "Pose2":
        """``self * other``: apply ``other`` first, then ``self``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.theta + other.theta,
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
        )

    __matmul__ = compose

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-self.theta, -(c * self.x + s * self.y), s * self.x - c * self.y)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return pts @ self.rotation.T + self.translation

    def as_tuple(self) -> tuple:
        return (self.theta, self.x, self.y)


def interpolate_pose(a: Pose2, b: Pose2, s: float) -> Pose2:
    """Linear interpolation of position and shortest-arc heading, s in [0, 1]."""
    dth = wrap_angle(b.theta - a.theta)
    return Pose2(a.theta + s * dth, a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))


@dataclass(frozen=True)
class Trajectory:
    """Timestamped pose sequence with strictly increasing stamps."""

    timestamps: tuple = ()
    poses: tuple = ()

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        ps = tuple(self.poses)
        if len(ts) != len(ps):
            raise ValueError("timestamps and poses differ in length")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", ps)

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self) -> Iterator[tuple]:
        return iter(zip(self.timestamps, self.poses))

    def __getitem__(self, i):
        return self.timestamps[i], self.poses[i]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses]).reshape(-1, 2)

    def headings(self) -> np.ndarray:
        return np.array([p.theta for p in self.poses])

    def path_length(self) -> float:
        xy = self.positions()
        if len(xy) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum())

    def pose_at(self, t: float) -> Pose2:
        """Pose at time ``t`` by interpolation; clamped outside the stamped range."""
        ts = self.timestamps
        if not ts:
            raise ValueError("empty trajectory")
        if t <= ts[0]:
            return self.poses[0]
        if t >= ts[-1]:
            return self.poses[-1]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        s = (t - ts[i]) / (ts[i + 1] - ts[i])
        return interpolate_pose(self.poses[i], self.poses[i + 1], s)


@dataclass(frozen=True, eq=False)
class RadarFrame:
    """One Cartesian radar image, intensities in [0, 1].

    ``bin_times`` optionally carries the last scan time of every azimuth bin
    (length = number of bins), as written by the simulator's sector sidecars.
    """

    image: np.ndarray
    resolution: float
    timestamp: float = 0.0
    frame_id: int = 0
    bin_times: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        img = np.array(self.image, dtype=float)
        if img.ndim != 2 or img.shape[0] != img.shape[1]:
            raise ValueError(f"radar image must be square, got shape {img.shape}")
        if not np.all(np.isfinite(img)):
            raise ValueError("radar image contains non-finite values")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValueError("radar intensities must lie in [0, 1]")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        if self.bin_times is not None:
            bt = np.array(self.bin_times, dtype=float)
            bt.setflags(write=False)
            object.__setattr__(self, "bin_times", bt)

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def center(self) -> int:
        return self.width // 2

    @property
    def r_max(self) -> float:
        return self.resolution * self.center

    @classmethod
    def from_uint8(cls, img: np.ndarray, resolution: float, **kw) -> "RadarFrame":
        return cls(np.asarray(img, dtype=float) / 255.0, resolution, **kw)

    def to_uint8(self) -> np.ndarray:
        return np.round(self.image * 255.0).astype(np.uint8)

    def same_grid(self, other: "RadarFrame") -> bool:
        return self.image.shape == other.image.shape and math.isclose(
            self.resolution, other.resolution
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=8)
def pixel_grid(width: int) -> tuple:
    """Per-pixel (x, y) offsets from the center in pixel units (read-only)."""
    c = width // 2
    rows, cols = np.mgrid[0:width, 0:width]
    return _frozen((c - rows).astype(float)), _frozen((cols - c).astype(float))


@lru_cache(maxsize=8)
def pixel_azimuth(width: int) -> np.ndarray:
    """Azimuth of every pixel in [0, 2*pi), consistent with the module convention."""
    px, py = pixel_grid(width)
    return _frozen(np.mod(np.arctan2(px, py), TWO_PI))


@lru_cache(maxsize=8)
def disk_mask(width: int) -> np.ndarray:
    """Pixels within ``width // 2`` of the center (the sensor range disk)."""
    px, py = pixel_grid(width)
    return _frozen(np.hypot(px, py) <= width // 2)


def azimuth_bin_of(theta, bins: int):
    """Nearest azimuth bin index for angle(s) ``theta``."""
    return np.mod(np.rint(np.asarray(theta) * bins / TWO_PI).astype(int), bins)


@lru_cache(maxsize=16)
def pixel_bins(width: int, bins: int) -> np.ndarray:
    return _frozen(azimuth_bin_of(pixel_azimuth(width), bins))


@dataclass(frozen=True, eq=False)
class PointCloud2D:
    """Planar points in meters with intensity and azimuth bin per point."""

    xy: np.ndarray
    intensity: np.ndarray
    azimuth_bin: np.ndarray

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        inten = np.asarray(self.intensity, dtype=float).reshape(-1)
        bins = np.asarray(self.azimuth_bin, dtype=int).reshape(-1)
        if not (len(xy) == len(inten) == len(bins)):
            raise ValueError("point cloud field lengths differ")
        if not np.all(np.isfinite(xy)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "azimuth_bin", bins)

    @classmethod
    def empty(cls) -> "PointCloud2D":
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return len(self.xy)

    def subset(self, mask) -> "PointCloud2D":
        return PointCloud2D(self.xy[mask], self.intensity[mask], self.azimuth_bin[mask])


def image_to_cloud(frame: RadarFrame, threshold: float, bins: int = 360) -> PointCloud2D:
    """One point per pixel whose intensity is at least ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    rows, cols = np.nonzero(frame.image >= threshold)
    c = frame.center
    px = (c - rows).astype(float)
    py = (cols - c).astype(float)
    az = np.mod(np.arctan2(px, py), TWO_PI)
    xy = np.column_stack([px, py]) * frame.resolution
    return PointCloud2D(xy, frame.image[rows, cols], azimuth_bin_of(az, bins))


def transform_cloud(cloud: PointCloud2D, pose: Pose2) -> PointCloud2D:
    """Rotate every point by ``pose.theta`` then translate; bins are kept."""
    return PointCloud2D(pose.apply(cloud.xy), cloud.intensity.copy(), cloud.azimuth_bin.copy())


def compose_all(poses: Sequence[Pose2]) -> Pose2:
    out = Pose2.identity()
    for p in poses:
        out = out.compose(p)
    return out
