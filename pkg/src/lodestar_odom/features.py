"""Marine feature extraction: contours, k-nearest candidates, overlap dropout."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List, Tuple

import numpy as np
from scipy import ndimage

from .geometry import PointCloud2D, RadarFrame, pixel_bins, pixel_grid

HIGH_PASS = "high-pass"
LOW_PASS = "low-pass"

CONTOUR = "contour"
K_NEAREST = "k-nearest"
K_STRONGEST = "k-strongest"


@dataclass(frozen=True, eq=False)
class ContourMask:
    mask: np.ndarray
    filter_kind: str = HIGH_PASS


@dataclass(frozen=True, eq=False)
class FeatureCloud:
    points: PointCloud2D
    provenance: np.ndarray
    source_frame_id: int = -1
    pixels: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, keep) -> "FeatureCloud":
        pix = None if self.pixels is None else self.pixels[keep]
        return FeatureCloud(self.points.subset(keep), self.provenance[keep],
                            self.source_frame_id, pix)


@dataclass(frozen=True)
class OverlapReport:
    stale_sectors: Tuple[Tuple[int, int], ...]   # half-open [start, end) bin intervals
    dropped_fraction: float
    bins: int = 360

    def stale_mask(self) -> np.ndarray:
        m = np.zeros(self.bins, bool)
        for a, b in self.stale_sectors:
            m[a:b] = True
        return m

    def stale_bins(self) -> FrozenSet[int]:
        return frozenset(np.nonzero(self.stale_mask())[0].tolist())


def local_contrast(image: np.ndarray) -> np.ndarray:
    """Largest absolute difference between a pixel and its 4 direct neighbors."""
    pad = np.pad(image, 1, mode="edge")
    h, w = image.shape
    out = np.zeros_like(image)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb = pad[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        np.maximum(out, np.abs(image - nb), out=out)
    return out


def extract_contour(frame: RadarFrame, filter_kind: str = HIGH_PASS,
                    grad_threshold: float = 0.3) -> ContourMask:
    """Boundary pixels of the returns.

    A pixel is kept when its contrast to the 4 direct neighbors exceeds
    ``grad_threshold`` and it sits on the bright (high-pass) or dark
    (low-pass) side of the local 3x3 mean.  Flat interiors have no contrast
    and drop out.
    """
    if grad_threshold <= 0:
        raise ValueError("grad_threshold must be positive")
    img = frame.image
    strength = local_contrast(img)
    mean = ndimage.uniform_filter(img, size=3, mode="nearest")
    if filter_kind == HIGH_PASS:
        side = img >= mean
    elif filter_kind == LOW_PASS:
        side = img <= mean
    else:
        raise ValueError(f"unknown filter kind {filter_kind!r}")
    return ContourMask((strength > grad_threshold) & side, filter_kind)


def _cloud_from_pixels(frame: RadarFrame, rows, cols, bins_of_px) -> PointCloud2D:
    c = frame.center
    xy = np.column_stack([c - rows, cols - c]).astype(float) * frame.resolution
    return PointCloud2D(xy, frame.image[rows, cols], bins_of_px)


def select_k_nearest(frame: RadarFrame, contour: ContourMask, k: int = 10,
                     bins: int = 360, strongest: bool = False) -> FeatureCloud:
    """Up to ``k`` contour pixels per azimuth bin, nearest to the sensor first.

    Each pixel belongs to exactly one bin (its rounded azimuth), so no point
    is selected twice.  ``strongest=True`` gives the k-strongest baseline
    (ties broken by range).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if contour.mask.shape != frame.image.shape:
        raise ValueError("contour mask does not match frame")
    px, py = pixel_grid(frame.width)
    rad = np.hypot(px, py)
    sel = contour.mask & (rad <= frame.center)
    rows, cols = np.nonzero(sel)
    pb = pixel_bins(frame.width, bins)[rows, cols]
    r = rad[rows, cols]
    if strongest:
        order = np.lexsort((r, -frame.image[rows, cols], pb))
    else:
        # ties in range resolved by row-major pixel order
        order = np.lexsort((r, pb))
    pb_sorted = pb[order]
    starts = np.searchsorted(pb_sorted, pb_sorted, side="left")
    rank = np.arange(len(order)) - starts
    keep = order[rank < k]
    keep.sort()
    rows, cols, pb = rows[keep], cols[keep], pb[keep]
    tag = K_STRONGEST if strongest else K_NEAREST
    return FeatureCloud(
        _cloud_from_pixels(frame, rows, cols, pb),
        np.full(len(keep), tag, dtype=object),
        frame.frame_id,
        np.column_stack([rows, cols]),
    )


def contour_cloud(frame: RadarFrame, contour: ContourMask, bins: int = 360) -> FeatureCloud:
    """Every contour pixel inside the sensor disk (no per-bin selection)."""
    px, py = pixel_grid(frame.width)
    sel = contour.mask & (np.hypot(px, py) <= frame.center)
    rows, cols = np.nonzero(sel)
    pb = pixel_bins(frame.width, bins)[rows, cols]
    return FeatureCloud(
        _cloud_from_pixels(frame, rows, cols, pb),
        np.full(len(rows), CONTOUR, dtype=object),
        frame.frame_id,
        np.column_stack([rows, cols]),
    )


def _intervals(mask: np.ndarray) -> Tuple[Tuple[int, int], ...]:
    out: List[Tuple[int, int]] = []
    n = len(mask)
    k = 0
    while k < n:
        if mask[k]:
            j = k
            while j < n and mask[j]:
                j += 1
            out.append((k, j))
            k = j
        else:
            k += 1
    return tuple(out)


def report_from_mask(stale: np.ndarray) -> OverlapReport:
    stale = np.asarray(stale, bool)
    return OverlapReport(_intervals(stale), float(stale.mean()) if len(stale) else 0.0, len(stale))


def corridor_change(prev: RadarFrame, curr: RadarFrame, bins: int = 360) -> np.ndarray:
    """Mean absolute intensity change per azimuth corridor.

    The mean runs over corridor pixels with a return in either frame;
    corridors empty in both frames score 0.
    """
    if not prev.same_grid(curr):
        raise ValueError("frames are not congruent")
    px, py = pixel_grid(curr.width)
    support = (np.hypot(px, py) <= curr.center) & ((prev.image > 0) | (curr.image > 0))
    pb = pixel_bins(curr.width, bins)[support]
    diff = np.abs(curr.image - prev.image)[support]
    total = np.bincount(pb, weights=diff, minlength=bins)
    count = np.bincount(pb, minlength=bins)
    return np.divide(total, count, out=np.zeros(bins), where=count > 0)


def eliminate_overlap(prev: RadarFrame, curr: RadarFrame, change_threshold: float = 0.02,
                      bins: int = 360) -> OverlapReport:
    """Azimuth bins whose content did not change between the two frames."""
    return report_from_mask(corridor_change(prev, curr, bins) < change_threshold)


def eliminate_overlap_by_time(prev: RadarFrame, curr: RadarFrame) -> OverlapReport:
    """Stale bins from per-bin scan times: not rescanned after ``prev``'s scan."""
    if prev.bin_times is None or curr.bin_times is None:
        raise ValueError("both frames need per-bin scan times")
    if len(prev.bin_times) != len(curr.bin_times):
        raise ValueError("scan-time tables differ in bin count")
    return report_from_mask(curr.bin_times <= prev.bin_times)


def apply_overlap_dropout(cloud: FeatureCloud, report: OverlapReport) -> FeatureCloud:
    if not report.stale_sectors:
        return cloud
    stale = report.stale_mask()
    return cloud.subset(~stale[cloud.points.azimuth_bin % report.bins])
