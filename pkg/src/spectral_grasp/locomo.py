"""Local contact moment (LoCoMo) grasp scoring.

For each finger the object surface around the contact is cut into ``kappa``
nested patches. Each patch's zero-moment shift (centroid offset from the
contact, in the contact frame) is compared against the pad's own shift with a
peak-normalized isotropic Gaussian; the per-finger moments are combined as a
weighted product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .cloud_io import PointCloud
from .errors import InsufficientPatch


@dataclass(frozen=True)
class LocomoParams:
    kappa: int = 3
    radii: Tuple[float, ...] = (0.005, 0.01, 0.015)
    sigma: float = 0.01
    omega: Tuple[float, ...] = (1.0, 1.0)
    rho: float = 1.0
    min_patch_points: int = 5

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.kappa < 1 or len(self.radii) != self.kappa:
            raise ValueError("need kappa >= 1 and exactly kappa radii")
        if any(r <= 0 for r in self.radii) or any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        if self.sigma <= 0 or self.rho <= 0 or any(w <= 0 for w in self.omega):
            raise ValueError("sigma, rho and omega must be positive")
        if self.min_patch_points < 1:
            raise ValueError("min_patch_points must be >= 1")


@dataclass(frozen=True, eq=False)
class Patch:
    center: np.ndarray
    members: np.ndarray
    frame: np.ndarray  # columns: tangent x, tangent y, normal
    indices: Optional[np.ndarray] = None


def tangent_frame(normal) -> np.ndarray:
    """Right-handed frame with z along ``normal``.

    The x axis comes from the world axis along which the normal has its
    smallest component, projected onto the tangent plane.
    """
    z = np.asarray(normal, dtype=np.float64)
    z = z / np.linalg.norm(z)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(z)))] = 1.0
    x = e - (e @ z) * z
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def extract_patch(cloud: PointCloud, center, normal, radius: float, min_points: int = 5,
                  tree: Optional[cKDTree] = None) -> Patch:
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    if tree is None:
        idx = np.flatnonzero(np.linalg.norm(cloud.points - center, axis=1) <= radius)
    else:
        idx = np.sort(np.asarray(tree.query_ball_point(center, radius), dtype=np.int64))
    if len(idx) < min_points:
        raise InsufficientPatch(f"{len(idx)} points within {radius} m, need {min_points}")
    return Patch(center, cloud.points[idx], tangent_frame(normal), idx)


def zero_moment_shift(p: Patch) -> np.ndarray:
    """Centroid offset of the patch from its centre, in the patch frame."""
    return (p.members.mean(axis=0) - p.center) @ p.frame


def contact_moment(cloud: PointCloud, contact, pad_shifts=None, params: LocomoParams = LocomoParams(),
                   tree: Optional[cKDTree] = None) -> float:
    """Mean Gaussian similarity of object and pad shifts over the nested radii.

    ``contact`` is ``(point, normal)``. ``pad_shifts`` defaults to zeros
    (flat pad). Any under-populated patch makes the moment 0.
    """
    point, normal = contact
    if pad_shifts is None:
        pad_shifts = np.zeros((params.kappa, 3))
    pad_shifts = np.asarray(pad_shifts, dtype=np.float64).reshape(params.kappa, 3)
    total = 0.0
    for r, s_pad in zip(params.radii, pad_shifts):
        try:
            patch = extract_patch(cloud, point, normal, r, params.min_patch_points, tree)
        except InsufficientPatch:
            return 0.0
        eps = zero_moment_shift(patch) - s_pad
        total += np.exp(-(eps @ eps) / (2 * params.sigma ** 2))
    return float(total / params.kappa)


def grasp_quality(moments: Sequence[float], params: LocomoParams) -> float:
    """``rho * prod(M_i ** omega_i)``."""
    omega = params.omega
    if len(omega) == 1:
        omega = omega * len(moments)
    if len(omega) != len(moments):
        raise ValueError("one omega per finger required")
    q = params.rho
    for m, w in zip(moments, omega):
        q *= float(m) ** w
    return float(q)


def pad_shift_table(g, params: LocomoParams) -> np.ndarray:
    """Per-finger pad shifts, shape ``(n_fingers, kappa, 3)``.

    Computed from each pad cloud around its centroid; a pad too sparse for a
    radius is treated as flat there.
    """
    out = np.zeros((g.n_fingers, params.kappa, 3))
    for i, pad in enumerate(g.pads):
        c = pad.points.mean(axis=0)
        n = g.pad_normals[i]
        for j, r in enumerate(params.radii):
            try:
                out[i, j] = zero_moment_shift(extract_patch(pad, c, n, r, params.min_patch_points))
            except InsufficientPatch:
                pass
    return out


def score_candidate(cand, cloud: PointCloud, pad_shifts: np.ndarray, params: LocomoParams,
                    tree: Optional[cKDTree] = None) -> float:
    moments = [contact_moment(cloud, (p, n), pad_shifts[i], params, tree)
               for i, (p, n) in enumerate(zip(cand.contacts.points, cand.contacts.normals))]
    return grasp_quality(moments, params)


def rank_grasps(candidates, cloud: PointCloud, g, params: LocomoParams = LocomoParams(),
                tree: Optional[cKDTree] = None, workers: int = 1) -> List:
    """Score every candidate in place and return them best first.

    Ties fall back to the higher correlation value, then input order.
    """
    candidates = list(candidates)
    if tree is None:
        tree = cKDTree(cloud.points)
    shifts = pad_shift_table(g, params)
    if workers > 1 and len(candidates) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda c: score_candidate(c, cloud, shifts, params, tree), candidates))
    else:
        scores = [score_candidate(c, cloud, shifts, params, tree) for c in candidates]
    for c, s in zip(candidates, scores):
        c.score = s
    order = sorted(range(len(candidates)),
                   key=lambda i: (-candidates[i].score, -_finite(candidates[i].correlation), i))
    return [candidates[i] for i in order]


def _finite(x: float) -> float:
    return x if np.isfinite(x) else -np.inf
