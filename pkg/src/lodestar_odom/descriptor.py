"""Radial-integration descriptor and rotation by circular cross-correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .geometry import TWO_PI, RadarFrame, wrap_angle


@dataclass(frozen=True, eq=False)
class LodeStarDescriptor:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)) or (v.size and v.min() < 0):
            raise ValueError("descriptor entries must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def bins(self) -> int:
        return len(self.values)

    @property
    def bin_width(self) -> float:
        return TWO_PI / len(self.values)

    def shifted(self, s: int) -> "LodeStarDescriptor":
        """Circular shift: result[k] = values[k - s]."""
        return LodeStarDescriptor(np.roll(self.values, s))

    def to_csv(self) -> str:
        return "bin_index,value\n" + "".join(
            f"{i},{v:.9g}\n" for i, v in enumerate(self.values)
        )


@dataclass(frozen=True)
class RotationEstimate:
    theta_L: float
    correlation_peak: float
    peak_ratio: float
    shift: float = 0.0


def radial_sample_coords(width: int, bins: int) -> np.ndarray:
    """(row, col) sample positions of every radial ray, shape (2, bins, R+1)."""
    c = width // 2
    theta = np.arange(bins) * (TWO_PI / bins)
    r = np.arange(c + 1, dtype=float)
    rows = c - np.outer(np.sin(theta), r)
    cols = c + np.outer(np.cos(theta), r)
    return np.stack([rows, cols])


@lru_cache(maxsize=8)
def radial_operator(width: int, bins: int) -> sparse.csr_matrix:
    """Sparse (bins, width**2) matrix summing bilinear ray samples per bin."""
    rows, cols = radial_sample_coords(width, bins)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr, fc = rows - r0, cols - c0
    k = np.broadcast_to(np.arange(bins)[:, None], rows.shape)
    data, ri, ci = [], [], []
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        # neighbours past the last row/column only ever get zero weight
        rr = np.minimum(r0 + dr, width - 1)
        cc = np.minimum(c0 + dc, width - 1)
        data.append(w.ravel())
        ri.append(k.ravel())
        ci.append((rr * width + cc).ravel())
    m = sparse.csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                          shape=(bins, width * width))
    m.sum_duplicates()
    return m


def compute_descriptor(frame: RadarFrame, bins: int = 360) -> LodeStarDescriptor:
    """Integrate bilinearly sampled intensity along every azimuth ray.

    The step along the ray is one pixel and integration stops at ``r_max``
    so the image corners never contribute.  The integral is linear in the
    image, so it is applied as a cached sparse operator.
    """
    if bins < 8:
        raise ValueError("descriptor needs at least 8 azimuth bins")
    vals = radial_operator(frame.width, bins) @ frame.image.ravel()
    return LodeStarDescriptor(np.clip(vals, 0.0, None))


def _as_array(d) -> np.ndarray:
    return d.values if isinstance(d, LodeStarDescriptor) else np.asarray(d, dtype=float)


def circular_correlate(a, b) -> np.ndarray:
    """out[s] = sum_k a[(k + s) mod A] * b[k], computed with real FFTs."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"bin count mismatch: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    return np.fft.irfft(np.fft.rfft(a) * np.conj(np.fft.rfft(b)), n=n)


def circular_correlate_naive(a, b) -> np.ndarray:
    a, b = _as_array(a), _as_array(b)
    n = len(a)
    out = np.zeros(n)
    for s in range(n):
        acc = 0.0
        for k in range(n):
            acc += a[(k + s) % n] * b[k]
        out[s] = acc
    return out


def _parabolic_offset(ym: float, y0: float, yp: float) -> float:
    den = ym - 2.0 * y0 + yp
    if den >= 0.0:
        return 0.0
    off = 0.5 * (ym - yp) / den
    return float(np.clip(off, -0.5, 0.5))


def _masked_ncc(a: np.ndarray, b: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Normalized correlation of the valid part of ``a`` against every window of ``b``.

    Without normalization a partial signature favors shifts where ``b``
    happens to have large variance.
    """
    m = valid.astype(float)
    nv = m.sum()
    ac = np.where(valid, a - a[valid].mean(), 0.0)
    num = circular_correlate(ac, b)       # centering b is implicit since ac sums to 0
    s1 = circular_correlate(m, b)
    s2 = circular_correlate(m, b * b)
    var_b = np.maximum(s2 - s1 ** 2 / nv, 1e-12)
    norm_a = math.sqrt(max(float(ac @ ac), 1e-12))
    return num / (norm_a * np.sqrt(var_b))


def estimate_rotation(prev: LodeStarDescriptor, curr: LodeStarDescriptor,
                      subbin: bool = True, valid=None) -> RotationEstimate:
    """Heading change from ``prev`` to ``curr``.

    The correlation is taken as ``circular_correlate(curr, prev)`` so that
    ``estimate_rotation(d, d.shifted(s))`` returns ``s`` bins.  Under the
    package axis convention a positive result is a positive ego rotation.

    ``valid`` optionally masks the bins of ``curr`` that may be used (stale
    sectors excluded); masked bins do not contribute to the correlation.
    """
    a, b = curr.values, prev.values
    if a.shape != b.shape:
        raise ValueError(f"bin count mismatch: {b.shape[0]} vs {a.shape[0]}")
    n = len(a)
    if valid is not None:
        valid = np.asarray(valid, bool)
        if valid.shape != a.shape:
            raise ValueError("valid mask does not match the descriptor")
        if not valid.any():
            return RotationEstimate(0.0, 0.0, 1.0, 0.0)
    if not a.any() or not b.any():
        return RotationEstimate(0.0, 0.0, 1.0, 0.0)
    # centering shifts the correlation by a constant: argmax and the
    # parabolic offset are unchanged, but the peak ratio becomes meaningful
    if valid is None or valid.all():
        corr = circular_correlate(a - a.mean(), b - b.mean())
    else:
        corr = _masked_ncc(a, b, valid)
    k = int(np.argmax(corr))
    peak = float(corr[k])
    off = 0.0
    if subbin:
        off = _parabolic_offset(corr[(k - 1) % n], corr[k], corr[(k + 1) % n])
    shift = k + off
    if shift > n / 2:
        shift -= n

    # second-highest local maximum outside the peak's immediate neighbors
    is_max = (corr >= np.roll(corr, 1)) & (corr >= np.roll(corr, -1))
    excl = np.ones(n, bool)
    excl[[(k - 1) % n, k, (k + 1) % n]] = False
    cands = corr[is_max & excl]
    second = float(cands.max()) if cands.size else float(np.min(corr))
    if second > 0:
        ratio = max(1.0, peak / second)
    else:
        ratio = math.inf if peak > 0 else 1.0
    return RotationEstimate(wrap_angle(shift * TWO_PI / n), peak, ratio, float(shift))
