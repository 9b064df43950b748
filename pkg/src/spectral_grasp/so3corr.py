"""Correlation of two spherical signals over SO(3).

Rotations use zyz Euler angles, ``R = Rz(alpha) Ry(beta) Rz(gamma)``, acting
actively on directions. The Wigner matrix of degree ``l`` is

    D^l_{mm'}(alpha, beta, gamma) = exp(-i m alpha) d^l_{mm'}(beta) exp(-i m' gamma)

and rotating a signal ``g`` to ``g(R^-1 x)`` maps its coefficients by
``g_l^m -> sum_m' D^l_{mm'} g_l^m'``. The correlation at ``R`` is the inner
product of ``f`` with that rotated ``g``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Tuple

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.special import gammaln

from .begi import colatitudes, longitudes
from .sht import HarmonicCoeffs, integrate, ylm_matrix
from .errors import BandwidthMismatch, ZeroSignal


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class RotationZYZ:
    alpha: float
    beta: float
    gamma: float

    def matrix(self) -> np.ndarray:
        return euler_zyz_to_matrix(self.alpha, self.beta, self.gamma)

    def inverse(self) -> "RotationZYZ":
        a = np.mod(np.pi - self.gamma, 2 * np.pi)
        g = np.mod(-np.pi - self.alpha, 2 * np.pi)
        return RotationZYZ(float(a), self.beta, float(g))


IDENTITY = RotationZYZ(0.0, 0.0, 0.0)


def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def euler_zyz_to_matrix(alpha, beta, gamma) -> np.ndarray:
    return _rz(alpha) @ _ry(beta) @ _rz(gamma)


def euler_zyz_matrices(alpha, beta, gamma) -> np.ndarray:
    """Batched ``Rz(alpha) Ry(beta) Rz(gamma)``; output ``(..., 3, 3)``."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64)
                                               for v in (alpha, beta, gamma)))
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    out = np.empty(alpha.shape + (3, 3))
    out[..., 0, 0] = ca * cb * cg - sa * sg
    out[..., 0, 1] = -ca * cb * sg - sa * cg
    out[..., 0, 2] = ca * sb
    out[..., 1, 0] = sa * cb * cg + ca * sg
    out[..., 1, 1] = -sa * cb * sg + ca * cg
    out[..., 1, 2] = sa * sb
    out[..., 2, 0] = -sb * cg
    out[..., 2, 1] = sb * sg
    out[..., 2, 2] = cb
    return out


def matrix_to_euler_zyz(R) -> RotationZYZ:
    R = np.asarray(R, dtype=np.float64)
    beta = float(np.arccos(np.clip(R[2, 2], -1.0, 1.0)))
    if abs(np.sin(beta)) > 1e-12:
        alpha = np.arctan2(R[1, 2], R[0, 2])
        gamma = np.arctan2(R[2, 1], -R[2, 0])
    else:
        gamma = 0.0
        alpha = np.arctan2(R[1, 0], R[0, 0]) if R[2, 2] > 0 else np.arctan2(-R[1, 0], -R[0, 0])
    return RotationZYZ(float(np.mod(alpha, 2 * np.pi)), beta, float(np.mod(gamma, 2 * np.pi)))


def alpha_nodes(B: int) -> np.ndarray:
    return np.pi * np.arange(2 * B) / B


def beta_nodes(B: int) -> np.ndarray:
    return np.pi * (2 * np.arange(2 * B) + 1) / (4 * B)


gamma_nodes = alpha_nodes


# ---------------------------------------------------------------------------
# Wigner d


def _explicit_terms(j: int, a: np.ndarray, b: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Wigner's sum formula for ``d^j_{ab}(beta)`` (row a, column b).

    Only used where the sum has a single term (the seeds of the recurrence)
    and, for small ``j``, as an independent check.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    half = np.asarray(beta, dtype=np.float64)[:, None] / 2
    c, s = np.cos(half), np.sin(half)
    out = np.zeros((half.shape[0], a.size))
    log_pref = 0.5 * (gammaln(j + a + 1) + gammaln(j - a + 1)
                      + gammaln(j + b + 1) + gammaln(j - b + 1))
    s_lo = np.maximum(0, b - a)
    s_hi = np.minimum(j + b, j - a)
    for sv in range(int(s_lo.min()), int(s_hi.max()) + 1):
        live = (sv >= s_lo) & (sv <= s_hi)
        if not np.any(live):
            continue
        aa, bb = a[live], b[live]
        logmag = log_pref[live] - (gammaln(j + bb - sv + 1) + gammaln(sv + 1)
                                   + gammaln(aa - bb + sv + 1) + gammaln(j - aa - sv + 1))
        sign = np.where((aa - bb + sv) % 2, -1.0, 1.0)
        pc = 2 * j + bb - aa - 2 * sv
        ps = aa - bb + 2 * sv
        out[:, live] += sign * np.exp(logmag) * c ** pc * s ** ps
    return out


def wigner_d_explicit(l: int, beta: float) -> np.ndarray:
    """Direct sum evaluation; accurate for small degrees only."""
    m = np.arange(-l, l + 1)
    a, b = np.meshgrid(m, m, indexing="ij")
    vals = _explicit_terms(l, a.ravel(), b.ravel(), np.atleast_1d(beta))
    return vals[0].reshape(2 * l + 1, 2 * l + 1)


def wigner_d_table(lmax: int, betas) -> List[np.ndarray]:
    """``d^l(beta)`` for ``l = 0..lmax`` at every angle in ``betas``.

    Entry ``l`` has shape ``(len(betas), 2l+1, 2l+1)`` with rows and columns
    indexed by orders ``-l..l``. Each ``(m, m')`` track starts at
    ``l = max(|m|, |m'|)`` from a closed-form seed and climbs in degree with
    the three-term recurrence

        l sqrt(((l+1)^2 - m^2)((l+1)^2 - m'^2)) d^{l+1}
            = (2l+1)(l(l+1) cos(beta) - m m') d^l
              - (l+1) sqrt((l^2 - m^2)(l^2 - m'^2)) d^{l-1}
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=np.float64))
    L = lmax
    orders = np.arange(-L, L + 1)
    M, Mp = np.meshgrid(orders, orders, indexing="ij")
    start = np.maximum(np.abs(M), np.abs(Mp))
    cosb = np.cos(betas)[:, None, None]
    nb = len(betas)
    prev = np.zeros((nb, 2 * L + 1, 2 * L + 1))
    cur = np.zeros_like(prev)
    table = []
    for l in range(L + 1):
        shell = start == l
        vals = _explicit_terms(l, M[shell], Mp[shell], betas)
        cur[:, shell] = vals
        table.append(cur[:, L - l:L + l + 1, L - l:L + l + 1].copy())
        if l == L:
            break
        live = start <= l
        if l == 0:
            nxt = np.zeros_like(cur)
            nxt[:, L, L] = cosb[:, 0, 0] * cur[:, L, L]
        else:
            mm = (M * Mp)[None]
            up = np.sqrt(np.clip(((l + 1) ** 2 - M ** 2) * ((l + 1) ** 2 - Mp ** 2), 0, None))
            down = np.sqrt(np.clip((l ** 2 - M ** 2) * (l ** 2 - Mp ** 2), 0, None))
            with np.errstate(divide="ignore", invalid="ignore"):
                nxt = ((2 * l + 1) * (l * (l + 1) * cosb - mm) * cur
                       - (l + 1) * down[None] * prev) / (l * up[None])
            nxt = np.where(live[None], nxt, 0.0)
        prev, cur = cur, nxt
    return table


def wigner_d(l: int, beta: float) -> np.ndarray:
    """``(2l+1) x (2l+1)`` real matrix ``d^l_{mm'}(beta)``, orders ``-l..l``."""
    if l < 0:
        raise ValueError("degree must be non-negative")
    return wigner_d_table(l, [beta])[l][0]


@lru_cache(maxsize=8)
def grid_wigner_table(B: int) -> Tuple[np.ndarray, ...]:
    """Wigner d blocks at the ``2B`` beta nodes, cached per bandwidth."""
    table = wigner_d_table(B - 1, beta_nodes(B))
    for t in table:
        t.setflags(write=False)
    return tuple(table)


def wigner_D(l: int, R: RotationZYZ) -> np.ndarray:
    m = np.arange(-l, l + 1)
    d = wigner_d(l, R.beta)
    return np.exp(-1j * m * R.alpha)[:, None] * d * np.exp(-1j * m * R.gamma)[None, :]


def rotate_coeffs(c: HarmonicCoeffs, R: RotationZYZ) -> HarmonicCoeffs:
    """Coefficients of ``x -> g(R^-1 x)``."""
    B = c.bandwidth
    out = np.zeros_like(c.coeffs)
    table = wigner_d_table(B - 1, [R.beta]) if B > 0 else []
    for l in range(B):
        m = np.arange(-l, l + 1)
        D = np.exp(-1j * m * R.alpha)[:, None] * table[l][0] * np.exp(-1j * m * R.gamma)[None, :]
        out[l * l:(l + 1) ** 2] = D @ c.block(l)
    return HarmonicCoeffs(B, out)


# ---------------------------------------------------------------------------
# correlation


@dataclass(frozen=True, eq=False)
class CorrelationGrid:
    """Values over ``(alpha_a, beta_b, gamma_c)``, array indexed ``[a, b, c]``.

    ``scale`` is the divisor already applied (1.0 for raw values).
    """

    bandwidth: int
    values: np.ndarray
    scale: float = 1.0
    imag_residue: float = 0.0

    def rotation(self, a: int, b: int, c: int) -> RotationZYZ:
        B = self.bandwidth
        return RotationZYZ(float(np.pi * a / B), float(np.pi * (2 * b + 1) / (4 * B)),
                           float(np.pi * c / B))

    def node_of(self, R: RotationZYZ) -> Tuple[int, int, int]:
        """Grid indices of a rotation lying on the grid (nearest node otherwise)."""
        B = self.bandwidth
        a = int(np.round(R.alpha * B / np.pi)) % (2 * B)
        b = int(np.clip(np.round((4 * B * R.beta / np.pi - 1) / 2), 0, 2 * B - 1))
        c = int(np.round(R.gamma * B / np.pi)) % (2 * B)
        return a, b, c

    @property
    def normalized(self) -> bool:
        return self.scale != 1.0


def _check_pair(fc: HarmonicCoeffs, gc: HarmonicCoeffs) -> int:
    if fc.bandwidth != gc.bandwidth:
        raise BandwidthMismatch(f"bandwidths differ: {fc.bandwidth} vs {gc.bandwidth}")
    return fc.bandwidth


def correlate(fc: HarmonicCoeffs, gc: HarmonicCoeffs) -> CorrelationGrid:
    """Correlation on the ``(2B)^3`` rotation grid in ``O(B^4)``.

    For each beta node the order-pair spectrum
    ``S[m, m'] = sum_l f_l^m conj(g_l^m') d^l_{mm'}(beta)`` is accumulated,
    then a 2D inverse FFT over ``(m, m')`` evaluates the alpha and gamma
    phases at all nodes at once.
    """
    B = _check_pair(fc, gc)
    N = 2 * B
    L = B - 1
    table = grid_wigner_table(B)
    spectrum = np.zeros((N, 2 * L + 1, 2 * L + 1), dtype=np.complex128)
    for l in range(B):
        outer = np.outer(fc.block(l), np.conj(gc.block(l)))
        spectrum[:, L - l:L + l + 1, L - l:L + l + 1] += table[l] * outer[None]
    # place orders at their FFT bins
    bins = np.mod(np.arange(-L, L + 1), N)
    full = np.zeros((N, N, N), dtype=np.complex128)
    full[:, bins[:, None], bins[None, :]] = spectrum
    vals = np.fft.ifft2(full, axes=(1, 2)) * (N * N)  # [b, a, c]
    vals = np.transpose(vals, (1, 0, 2))
    scale = max(1.0, float(np.max(np.abs(vals.real))))
    residue = float(np.max(np.abs(vals.imag))) / scale
    return CorrelationGrid(B, np.ascontiguousarray(vals.real), 1.0, residue)


def correlate_direct(fc: HarmonicCoeffs, gc: HarmonicCoeffs) -> CorrelationGrid:
    """Brute-force reference: rotate ``g`` to every node, synthesize it on the
    sphere grid, and integrate against ``f`` with the quadrature rule.

    Cost is ``O(B^6)``; meant for checking :func:`correlate` at small ``B``.
    """
    B = _check_pair(fc, gc)
    N = 2 * B
    theta, phi = np.meshgrid(colatitudes(B), longitudes(B), indexing="ij")
    Y = ylm_matrix(B, theta.ravel(), phi.ravel())  # [point, lm]
    f_grid = (Y @ fc.coeffs).reshape(N, N)
    alphas, gammas = alpha_nodes(B), gamma_nodes(B)
    table = grid_wigner_table(B)
    out = np.empty((N, N, N))
    for b in range(N):
        rot = np.zeros((N, N, B * B), dtype=np.complex128)  # [a, c, lm]
        for l in range(B):
            m = np.arange(-l, l + 1)
            ea = np.exp(-1j * np.outer(alphas, m))
            eg = np.exp(-1j * np.outer(gammas, m))
            dg = table[l][b] * gc.block(l)[None, :]
            rot[:, :, l * l:(l + 1) ** 2] = np.einsum("am,mn,cn->acm", ea, dg, eg)
        g_grids = rot.reshape(N * N, B * B) @ Y.T  # [(a, c), point]
        prod = f_grid.reshape(1, N, N) * np.conj(g_grids.reshape(N * N, N, N))
        out[:, b, :] = np.array([integrate(p, B).real for p in prod]).reshape(N, N)
    return CorrelationGrid(B, out)


def normalize(grid: CorrelationGrid, fc: HarmonicCoeffs, gc: HarmonicCoeffs) -> CorrelationGrid:
    """Divide by ``||f|| ||g||`` so values lie in ``[-1, 1]``."""
    nf, ng = fc.norm(), gc.norm()
    if nf <= 1e-12 or ng <= 1e-12:
        raise ZeroSignal("cannot normalize correlation of a zero signal")
    s = nf * ng
    return CorrelationGrid(grid.bandwidth, grid.values / s, s, grid.imag_residue)


def extract_rotations(grid: CorrelationGrid, t_corr: float, local_max: bool = False
                      ) -> List[Tuple[RotationZYZ, float]]:
    """Every node with value above ``t_corr``, highest first.

    Ties keep ``(a, b, c)`` lexicographic order. With ``local_max`` only
    nodes not exceeded by any of their 26 neighbours are kept (alpha and
    gamma wrap around).
    """
    if not 0.0 <= t_corr <= 1.0:
        raise ValueError("t_corr must lie in [0, 1]")
    v = grid.values
    mask = v > t_corr
    if local_max:
        peak = maximum_filter(v, size=3, mode=("wrap", "nearest", "wrap"))
        mask &= v >= peak
    a, b, c = np.nonzero(mask)
    vals = v[a, b, c]
    order = np.lexsort((c, b, a, -vals))
    return [(grid.rotation(int(a[i]), int(b[i]), int(c[i])), float(vals[i])) for i in order]


def write_density_csv(grid: CorrelationGrid, path, display_threshold: float = 0.5) -> int:
    """Dump nodes with value >= threshold as ``alpha,beta,gamma,value``.

    Returns the number of data rows written.
    """
    B = grid.bandwidth
    al, be, ga = alpha_nodes(B), beta_nodes(B), gamma_nodes(B)
    idx = np.argwhere(grid.values >= display_threshold)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "gamma", "value"])
        for a, b, c in idx:
            w.writerow([f"{al[a]:.9g}", f"{be[b]:.9g}", f"{ga[c]:.9g}",
                        f"{grid.values[a, b, c]:.9g}"])
    return len(idx)
