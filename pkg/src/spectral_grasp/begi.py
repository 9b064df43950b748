"""Equiangular sphere grid and binary extended Gaussian images.

The grid for bandwidth ``B`` has colatitudes ``theta_j = pi (2j + 1) / 4B``
and longitudes ``phi_k = pi k / B`` for ``0 <= j, k < 2B``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .cloud_io import PointCloud
from .errors import MissingNormals

# Rounding slack so directions sitting exactly between two rings (the equator
# for every B) land deterministically on the upper ring despite float noise.
_HALF_UP_EPS = 1e-9


def colatitudes(B: int) -> np.ndarray:
    return np.pi * (2 * np.arange(2 * B) + 1) / (4 * B)


def longitudes(B: int) -> np.ndarray:
    return np.pi * np.arange(2 * B) / B


def cart_to_sph(n):
    """Unit vector(s) -> (theta, phi) with theta in [0, pi], phi in [0, 2 pi).

    Accepts a single 3-vector or an ``(..., 3)`` array. At the poles phi is 0.
    """
    n = np.asarray(n, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    rho = np.hypot(x, y)
    theta = np.arctan2(rho, z)
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    # mod can return exactly 2 pi for tiny negative angles
    phi = np.where(phi >= 2 * np.pi, 0.0, phi)
    phi = np.where(rho == 0.0, 0.0, phi)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


def sph_to_cart(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def grid_index(theta, phi, B: int):
    """Nearest grid node ``(j, k)`` for direction(s) ``(theta, phi)``.

    Ties between rings round up; theta is clamped to the valid ring range and
    phi wraps around.
    """
    if B < 1:
        raise ValueError("bandwidth must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    j = np.floor((4 * B * theta / np.pi - 1) / 2 + 0.5 + _HALF_UP_EPS).astype(np.int64)
    j = np.clip(j, 0, 2 * B - 1)
    k = np.floor(B * phi / np.pi + 0.5 + _HALF_UP_EPS).astype(np.int64) % (2 * B)
    if j.ndim == 0:
        return int(j), int(k)
    return j, k


def direction_index(n, B: int):
    """Grid node(s) for unit vector(s) ``n``."""
    theta, phi = cart_to_sph(n)
    return grid_index(theta, phi, B)


@dataclass(frozen=True, eq=False)
class Begi:
    """Binary occupancy on the ``2B x 2B`` grid plus the points behind each cell."""

    bandwidth: int
    occupancy: np.ndarray
    point_sets: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def occupied(self):
        """Occupied cells in row-major order."""
        return [tuple(map(int, c)) for c in np.argwhere(self.occupancy)]

    def points_in(self, j: int, k: int) -> np.ndarray:
        return self.point_sets.get((j, k), np.empty(0, dtype=np.int64))

    def to_json(self, include_point_sets: bool = False) -> dict:
        out = {
            "bandwidth": self.bandwidth,
            "occupied": [[j, k, int(len(self.point_sets[(j, k)]))] for j, k in self.occupied],
        }
        if include_point_sets:
            out["point_sets"] = {f"{j},{k}": self.point_sets[(j, k)].tolist()
                                 for j, k in self.occupied}
        return out

    def dumps(self, include_point_sets: bool = False) -> str:
        return json.dumps(self.to_json(include_point_sets), indent=1)


def build_begi(cloud: PointCloud, B: int) -> Begi:
    if cloud.normals_missing:
        raise MissingNormals("cloud carries no normals; estimate them first")
    if B < 1:
        raise ValueError("bandwidth must be >= 1")
    idx = np.flatnonzero(cloud.valid)
    j, k = direction_index(cloud.normals[idx], B)
    j = np.atleast_1d(j)
    k = np.atleast_1d(k)
    cell = j * (2 * B) + k
    order = np.argsort(cell, kind="stable")
    cell_sorted = cell[order]
    starts = np.flatnonzero(np.r_[True, cell_sorted[1:] != cell_sorted[:-1]])
    ends = np.r_[starts[1:], len(cell_sorted)]
    occupancy = np.zeros((2 * B, 2 * B), dtype=bool)
    point_sets = {}
    for s, e in zip(starts, ends):
        c = int(cell_sorted[s])
        jk = divmod(c, 2 * B)
        occupancy[jk] = True
        members = np.sort(idx[order[s:e]])
        members.setflags(write=False)
        point_sets[jk] = members
    occupancy.setflags(write=False)
    return Begi(B, occupancy, point_sets)


def begi_signal(b: Begi) -> np.ndarray:
    """Occupancy as real samples ``f(theta_j, phi_k)`` in ``{0.0, 1.0}``."""
    return b.occupancy.astype(np.float64)
