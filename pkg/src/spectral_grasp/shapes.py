"""Synthetic test objects with exact normals."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .cloud_io import PointCloud


def sample_box(size=0.04, n_points: int = 10000, center=(0.0, 0.0, 0.0)) -> PointCloud:
    """Regular grid on the six faces of an axis-aligned cube (or box).

    ``size`` may be a scalar or an ``(sx, sy, sz)`` triple. Grid nodes sit at
    cell centres, so no point lies on an edge.
    """
    sx, sy, sz = np.broadcast_to(np.asarray(size, dtype=np.float64), (3,))
    per_face = max(1, n_points // 6)
    n = max(1, int(round(np.sqrt(per_face))))
    t = (np.arange(n) + 0.5) / n - 0.5
    u, v = np.meshgrid(t, t, indexing="ij")
    u, v = u.ravel(), v.ravel()
    half = np.array([sx, sy, sz]) / 2
    pts, nrm = [], []
    for axis in range(3):
        a, b = [i for i in range(3) if i != axis]
        dims = np.array([sx, sy, sz])
        for sign in (1.0, -1.0):
            p = np.zeros((len(u), 3))
            p[:, axis] = sign * half[axis]
            p[:, a] = u * dims[a]
            p[:, b] = v * dims[b]
            nn = np.zeros_like(p)
            nn[:, axis] = sign
            pts.append(p)
            nrm.append(nn)
    return PointCloud(np.concatenate(pts) + np.asarray(center), np.concatenate(nrm))


def sample_sphere(radius=0.06, n_points: int = 10000, center=(0.0, 0.0, 0.0)) -> PointCloud:
    """Fibonacci lattice on a sphere with outward normals."""
    i = np.arange(n_points) + 0.5
    z = 1 - 2 * i / n_points
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5 ** 0.5) * i
    n = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return PointCloud(radius * n + np.asarray(center), n)


def sample_plane(size=0.1, n_side: int = 41, normal_up: bool = True) -> PointCloud:
    # exact mirror symmetry about 0 (linspace can be off by an ulp)
    t = (np.arange(n_side) - (n_side - 1) / 2) * (size / (n_side - 1))
    x, y = np.meshgrid(t, t, indexing="ij")
    pts = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    nrm = np.tile([0.0, 0.0, 1.0 if normal_up else -1.0], (len(pts), 1))
    return PointCloud(pts, nrm)


def sample_roof(half_width=0.03, length=0.06, slope=1.0, spacing=0.002,
                rng: Optional[np.random.Generator] = None) -> PointCloud:
    """Two planes meeting in a sharp ridge along y at x = 0.

    Height is ``-slope * |x|``; normals point up and away from the ridge.
    """
    xs = np.arange(-half_width, half_width + 1e-12, spacing)
    ys = np.arange(-length / 2, length / 2 + 1e-12, spacing)
    x, y = np.meshgrid(xs, ys, indexing="ij")
    x, y = x.ravel(), y.ravel()
    z = -slope * np.abs(x)
    sx = np.sign(x)
    nrm = np.column_stack([slope * sx, np.zeros_like(x), np.ones_like(x)])
    nrm[sx == 0] = (0.0, 0.0, 1.0)
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    return PointCloud(np.column_stack([x, y, z]), nrm)
