"""Surface features and robust SE(2) registration.

The cost of a pose ``T = (theta, x, y)`` over corresponding features is

    f(T) = sum_i alpha_i * log(1 + e_i),   e_i = |q_i - (R p_i + t)|^2

and it is minimized by Levenberg-damped Gauss-Newton with the Cauchy IRLS
weight ``alpha_i / (1 + e_i)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .features import FeatureCloud
from .geometry import PointCloud2D, Pose2

log = logging.getLogger(__name__)


class RegistrationError(RuntimeError):
    pass


class EmptyInput(RegistrationError):
    pass


class NoCorrespondences(RegistrationError):
    pass


@dataclass(frozen=True)
class SurfaceFeature:
    p: np.ndarray
    eta: np.ndarray
    planarity: float = 1.0
    neighbor_count: int = 1

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(2)
        eta = np.asarray(self.eta, dtype=float).reshape(2)
        n = np.linalg.norm(eta)
        if n == 0:
            raise ValueError("normal must be non-zero")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eta", eta / n)
        object.__setattr__(self, "planarity", float(np.clip(self.planarity, 0.0, 1.0)))


@dataclass(frozen=True, eq=False)
class Surfaces:
    """Column storage for many surface features."""

    p: np.ndarray
    eta: np.ndarray
    planarity: np.ndarray
    neighbor_count: np.ndarray

    @classmethod
    def empty(cls) -> "Surfaces":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0, int))

    @classmethod
    def from_list(cls, feats: Sequence[SurfaceFeature]) -> "Surfaces":
        if not len(feats):
            return cls.empty()
        return cls(
            np.array([f.p for f in feats]),
            np.array([f.eta for f in feats]),
            np.array([f.planarity for f in feats]),
            np.array([f.neighbor_count for f in feats], dtype=int),
        )

    def __len__(self) -> int:
        return len(self.p)

    def __getitem__(self, i) -> SurfaceFeature:
        return SurfaceFeature(self.p[i], self.eta[i], self.planarity[i], int(self.neighbor_count[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def transformed(self, T: Pose2) -> "Surfaces":
        return Surfaces(T.apply(self.p), self.eta @ T.rotation.T, self.planarity, self.neighbor_count)


SurfaceLike = Union[Surfaces, Sequence[SurfaceFeature]]


def as_surfaces(s: SurfaceLike) -> Surfaces:
    return s if isinstance(s, Surfaces) else Surfaces.from_list(list(s))


def build_surfaces(cloud, radius: float, min_neighbors: int = 3) -> Surfaces:
    """Neighborhood centroid, minor-eigenvector normal and planarity per point.

    Neighborhoods are the points within ``radius`` (the point included);
    points with fewer than ``min_neighbors`` are dropped.  Normals face the
    sensor origin.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if min_neighbors < 2:
        raise ValueError("min_neighbors must be >= 2")
    if isinstance(cloud, FeatureCloud):
        cloud = cloud.points
    pts = cloud.xy if isinstance(cloud, PointCloud2D) else np.asarray(cloud, float).reshape(-1, 2)
    if len(pts) == 0:
        return Surfaces.empty()
    tree = cKDTree(pts)
    adj = tree.sparse_distance_matrix(tree, radius, output_type="coo_matrix").tocsr()
    adj.data[:] = 1.0
    adj.setdiag(1.0)
    adj.eliminate_zeros()
    cnt = np.asarray(adj.sum(axis=1)).ravel()
    keep = cnt >= min_neighbors
    if not keep.any():
        return Surfaces.empty()
    adj = adj[keep]
    cnt = cnt[keep]
    mu = (adj @ pts) / cnt[:, None]
    sec = adj @ np.column_stack([pts[:, 0] ** 2, pts[:, 0] * pts[:, 1], pts[:, 1] ** 2])
    a = sec[:, 0] / cnt - mu[:, 0] ** 2
    b = sec[:, 1] / cnt - mu[:, 0] * mu[:, 1]
    c = sec[:, 2] / cnt - mu[:, 1] ** 2
    half_tr = 0.5 * (a + c)
    disc = np.hypot(0.5 * (a - c), b)
    lmax = half_tr + disc
    lmin = np.maximum(half_tr - disc, 0.0)
    phi = 0.5 * np.arctan2(2.0 * b, a - c)          # major axis direction
    eta = np.column_stack([-np.sin(phi), np.cos(phi)])
    flip = np.einsum("ij,ij->i", eta, -mu) < 0
    eta[flip] *= -1.0
    planarity = np.where(lmax > 1e-12, 1.0 - lmin / np.where(lmax > 1e-12, lmax, 1.0), 0.0)
    return Surfaces(mu, eta, np.clip(planarity, 0.0, 1.0), cnt.astype(int))


def residual(a: SurfaceFeature, b: SurfaceFeature, T: Pose2) -> float:
    """Squared distance between ``b.p`` and ``a.p`` mapped through ``T``."""
    d = b.p - (T.rotation @ a.p + T.translation)
    return float(d @ d)


def similarity_weight(a: SurfaceFeature, b: SurfaceFeature) -> float:
    return max(0.0, float(a.eta @ b.eta)) * min(a.planarity, b.planarity)


def pair_weights(src: Surfaces, dst: Surfaces, pairs: np.ndarray, T: Optional[Pose2] = None) -> np.ndarray:
    """Vectorized similarity weight; source normals are rotated by ``T`` if given."""
    eta = src.eta[pairs[:, 0]]
    if T is not None:
        eta = eta @ T.rotation.T
    dots = np.einsum("ij,ij->i", eta, dst.eta[pairs[:, 1]])
    return np.maximum(dots, 0.0) * np.minimum(src.planarity[pairs[:, 0]], dst.planarity[pairs[:, 1]])


def _errors(src: Surfaces, dst: Surfaces, pairs: np.ndarray, T: Pose2) -> np.ndarray:
    return T.apply(src.p[pairs[:, 0]]) - dst.p[pairs[:, 1]]


def _pairs(correspondences) -> np.ndarray:
    return np.asarray(correspondences, dtype=int).reshape(-1, 2)


def objective(srcs: SurfaceLike, dsts: SurfaceLike, correspondences, T: Pose2,
              weights: Optional[np.ndarray] = None) -> float:
    """Sum of alpha * log(1 + squared residual) over the correspondences.

    ``weights`` overrides the per-pair alpha (default: ``similarity_weight``
    on the features as given).
    """
    src, dst = as_surfaces(srcs), as_surfaces(dsts)
    pairs = _pairs(correspondences)
    if len(pairs) == 0:
        return 0.0
    alpha = pair_weights(src, dst, pairs) if weights is None else np.asarray(weights, float)
    e = _errors(src, dst, pairs, T)
    return float(np.sum(alpha * np.log1p(np.einsum("ij,ij->i", e, e))))


def objective_gradient(srcs: SurfaceLike, dsts: SurfaceLike, correspondences, T: Pose2,
                       weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Analytic gradient of :func:`objective` w.r.t. (theta, x, y)."""
    src, dst = as_surfaces(srcs), as_surfaces(dsts)
    pairs = _pairs(correspondences)
    if len(pairs) == 0:
        return np.zeros(3)
    alpha = pair_weights(src, dst, pairs) if weights is None else np.asarray(weights, float)
    g, _, _ = _normal_equations(src, dst, pairs, T, alpha)
    return g


def _normal_equations(src, dst, pairs, T, alpha):
    p = src.p[pairs[:, 0]]
    e = _errors(src, dst, pairs, T)
    sq = np.einsum("ij,ij->i", e, e)
    w = alpha / (1.0 + sq)
    c, s = math.cos(T.theta), math.sin(T.theta)
    # d(R p)/d theta
    jt = np.column_stack([-s * p[:, 0] - c * p[:, 1], c * p[:, 0] - s * p[:, 1]])
    J = np.zeros((len(p), 2, 3))
    J[:, :, 0] = jt
    J[:, 0, 1] = 1.0
    J[:, 1, 2] = 1.0
    g = 2.0 * np.einsum("i,ij,ijk->k", w, e, J)
    H = 2.0 * np.einsum("i,ijk,ijl->kl", w, J, J)
    return g, H, w


@dataclass(frozen=True)
class RegistrationParams:
    max_correspondence_distance: float = 6.0
    max_iterations: int = 50
    tol: float = 1e-6
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    max_rejections: int = 10
    verbose: bool = False


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    pose: Pose2
    final_cost: float
    iterations: int
    inlier_fraction: float
    converged: bool
    correspondences: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)      # final IRLS weight per pair
    history: tuple = field(default=(), repr=False)             # (cost_before, cost_after) per iteration


def correspond(src: Surfaces, dst: Surfaces, T: Pose2, gate: float, tree: Optional[cKDTree] = None) -> np.ndarray:
    """Nearest destination feature per transformed source feature, gated."""
    if tree is None:
        tree = cKDTree(dst.p)
    d, j = tree.query(T.apply(src.p), k=1, distance_upper_bound=gate)
    ok = np.isfinite(d)
    return np.column_stack([np.nonzero(ok)[0], j[ok]]).astype(int)


def register(src: SurfaceLike, dst: SurfaceLike, T0: Pose2 = Pose2(),
             params: RegistrationParams = RegistrationParams()) -> RegistrationResult:
    """Estimate ``T`` with ``dst ~ T(src)`` starting from ``T0``."""
    src, dst = as_surfaces(src), as_surfaces(dst)
    if len(src) == 0 or len(dst) == 0:
        raise EmptyInput("registration needs non-empty source and destination")
    tree = cKDTree(dst.p)
    gate = params.max_correspondence_distance
    T = T0
    lam = params.lambda_init
    history = []
    converged = False
    it = 0
    pairs = correspond(src, dst, T, gate, tree)
    if len(pairs) == 0:
        raise NoCorrespondences(f"no correspondences within {gate} m at the initial pose")
    while it < params.max_iterations:
        it += 1
        alpha = pair_weights(src, dst, pairs, T)
        f0 = objective(src, dst, pairs, T, alpha)
        g, H, _ = _normal_equations(src, dst, pairs, T, alpha)
        step = np.zeros(3)
        f1 = f0
        for _ in range(params.max_rejections + 1):
            A = H + lam * np.diag(np.maximum(np.diag(H), 1e-9))
            try:
                cand = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= params.lambda_up
                continue
            Tc = Pose2(T.theta + cand[0], T.x + cand[1], T.y + cand[2])
            fc = objective(src, dst, pairs, Tc, alpha)
            if fc <= f0:
                step, f1, T = cand, fc, Tc
                lam = max(lam / params.lambda_down, 1e-12)
                break
            lam *= params.lambda_up
        history.append((f0, f1))
        if params.verbose:
            log.debug("iter %d cost %.6g -> %.6g |step| %.3g lambda %.1e pairs %d",
                      it, f0, f1, np.linalg.norm(step), lam, len(pairs))
        if np.linalg.norm(step) < params.tol:
            converged = True
            break
        new_pairs = correspond(src, dst, T, gate, tree)
        if len(new_pairs) == 0:
            break
        pairs = new_pairs

    alpha = pair_weights(src, dst, pairs, T)
    e = _errors(src, dst, pairs, T)
    sq = np.einsum("ij,ij->i", e, e)
    final = float(np.sum(alpha * np.log1p(sq)))
    return RegistrationResult(
        pose=T,
        final_cost=final,
        iterations=it,
        inlier_fraction=len(pairs) / len(src),
        converged=converged,
        correspondences=pairs,
        weights=alpha / (1.0 + sq),
        history=tuple(history),
    )
