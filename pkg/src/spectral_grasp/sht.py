"""Discrete spherical harmonic transform on the equiangular ``2B x 2B`` grid.

Harmonics follow the Condon-Shortley convention: ``Y_l^m`` carries the
``(-1)^m`` sign explicitly for ``m >= 0`` (the Legendre functions below do not
include it) and ``Y_l^{-m} = (-1)^m conj(Y_l^m)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .begi import colatitudes
from .errors import DimensionMismatch, DomainError, SymmetryViolation


def coeff_index(l: int, m: int) -> int:
    """Flat position of ``(l, m)``; degree blocks are contiguous, m ascending."""
    return l * l + l + m


@dataclass(frozen=True, eq=False)
class HarmonicCoeffs:
    """Coefficients ``f_l^m`` for ``0 <= l < B`` stored flat (length ``B**2``)."""

    bandwidth: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128).reshape(-1)
        if len(c) != self.bandwidth ** 2:
            raise DimensionMismatch(
                f"expected {self.bandwidth ** 2} coefficients, got {len(c)}")
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, lm):
        l, m = lm
        if not (0 <= l < self.bandwidth and -l <= m <= l):
            raise DomainError(f"(l={l}, m={m}) outside bandwidth {self.bandwidth}")
        return self.coeffs[coeff_index(l, m)]

    def block(self, l: int) -> np.ndarray:
        """Orders ``m = -l..l`` of degree ``l``."""
        return self.coeffs[l * l:(l + 1) * (l + 1)]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    @classmethod
    def zeros(cls, B: int) -> "HarmonicCoeffs":
        return cls(B, np.zeros(B * B, dtype=np.complex128))

    @classmethod
    def from_dict(cls, B: int, values: dict) -> "HarmonicCoeffs":
        c = np.zeros(B * B, dtype=np.complex128)
        for (l, m), v in values.items():
            c[coeff_index(l, m)] = v
        return cls(B, c)

    def to_records(self):
        """``[{l, m, re, im}, ...]`` for JSON debugging dumps."""
        out = []
        for l in range(self.bandwidth):
            for m in range(-l, l + 1):
                v = self.coeffs[coeff_index(l, m)]
                out.append({"l": l, "m": m, "re": float(v.real), "im": float(v.imag)})
        return out


def normalized_legendre(lmax: int, x) -> np.ndarray:
    """``N_l^m P_l^m(x)`` for ``0 <= m <= l <= lmax``, without the ``(-1)^m`` sign.

    ``N_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)``. Returned array has shape
    ``(lmax+1, lmax+1) + x.shape`` indexed ``[l, m]``; entries with ``m > l``
    are zero. Uses the standard three-term recurrence in ``l`` seeded from the
    sectoral values, so nothing overflows for large degrees.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.zeros((lmax + 1, lmax + 1) + x.shape)
    pmm = np.full(x.shape, 1.0 / np.sqrt(4 * np.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2 * m + 1) / (2.0 * m)) * s
        out[m, m] = pmm
        if m + 1 <= lmax:
            out[m + 1, m] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1))
            out[l, m] = a * (x * out[l - 1, m] - b * out[l - 2, m])
    return out


def legendre_lambda(lmax: int, theta) -> np.ndarray:
    """``Lambda_l^m(theta)`` with ``Y_l^m = Lambda_l^m(theta) e^{i m phi}``.

    Shape ``(lmax+1)**2 + theta.shape`` in flat coefficient order.
    """
    theta = np.asarray(theta, dtype=np.float64)
    p = normalized_legendre(lmax, np.cos(theta))
    out = np.zeros(((lmax + 1) ** 2,) + theta.shape)
    for l in range(lmax + 1):
        for m in range(l + 1):
            sign = -1.0 if m % 2 else 1.0
            out[coeff_index(l, m)] = sign * p[l, m]
            out[coeff_index(l, -m)] = p[l, m]
    return out


def eval_ylm(l: int, m: int, theta: float, phi: float) -> complex:
    if l < 0 or abs(m) > l:
        raise DomainError(f"invalid harmonic degree/order (l={l}, m={m})")
    lam = legendre_lambda(l, np.asarray(theta, dtype=np.float64))[coeff_index(l, m)]
    val = lam * np.exp(1j * m * np.asarray(phi, dtype=np.float64))
    return complex(val) if np.ndim(val) == 0 else val


def ylm_matrix(B: int, theta, phi) -> np.ndarray:
    """All ``Y_l^m`` with ``l < B`` at the given points; shape ``(npts, B**2)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    lam = legendre_lambda(B - 1, theta)  # (B^2, npts)
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(B)])
    return (lam * np.exp(1j * ms[:, None] * phi[None, :])).T


@lru_cache(maxsize=None)
def _weights(B: int) -> np.ndarray:
    theta = colatitudes(B)
    k = np.arange(B)
    terms = np.sin(np.outer(theta, 2 * k + 1)) / (2 * k + 1)
    w = (2.0 / B) * np.sin(theta) * terms.sum(axis=1)
    w.setflags(write=False)
    return w


def quadrature_weights(B: int) -> np.ndarray:
    """Sampling-theorem ring weights for the offset colatitudes.

    The weights integrate ``sin(theta) d theta`` exactly for polynomials in
    ``cos(theta)`` of degree below ``2B``; they sum to 2. The full sphere
    quadrature is ``(pi / B) * sum_jk w_j f(theta_j, phi_k)``.
    """
    if B < 1:
        raise ValueError("bandwidth must be >= 1")
    return _weights(B)


def integrate(samples: np.ndarray, B: int) -> complex:
    """Quadrature of grid samples over the sphere."""
    samples = np.asarray(samples)
    w = quadrature_weights(B)
    return (np.pi / B) * np.sum(w[:, None] * samples)


@lru_cache(maxsize=None)
def _grid_lambda(B: int) -> np.ndarray:
    lam = legendre_lambda(B - 1, colatitudes(B))  # (B^2, 2B)
    lam.setflags(write=False)
    return lam


def _order_columns(B: int) -> np.ndarray:
    """FFT bin of every coefficient's order ``m`` on a length-2B ring."""
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(B)])
    return np.mod(ms, 2 * B)


def forward_sht(samples, w=None) -> HarmonicCoeffs:
    """Coefficients of a real ``2B x 2B`` grid signal.

    The longitude sum runs as an FFT per ring; the colatitude sum is a
    weighted Legendre projection.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] != samples.shape[1] or samples.shape[0] % 2:
        raise DimensionMismatch(f"expected a 2B x 2B grid, got shape {samples.shape}")
    B = samples.shape[0] // 2
    if w is None:
        w = quadrature_weights(B)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (2 * B,):
        raise DimensionMismatch(f"expected {2 * B} ring weights, got {w.shape}")
    ring_fft = np.fft.fft(samples, axis=1)  # sum_k f e^{-i m phi_k}
    weighted = ring_fft * w[:, None] * (np.pi / B)
    lam = _grid_lambda(B)
    cols = _order_columns(B)
    # conj(Y_l^m) = Lambda_l^m e^{-i m phi}, Lambda real
    coeffs = np.einsum("cj,jc->c", lam, weighted[:, cols])
    return HarmonicCoeffs(B, coeffs)


def inverse_sht(c: HarmonicCoeffs, residue_tol: float = 1e-6) -> np.ndarray:
    """Synthesize real grid samples from coefficients."""
    B = c.bandwidth
    lam = _grid_lambda(B)
    cols = _order_columns(B)
    ring = np.zeros((2 * B, 2 * B), dtype=np.complex128)
    contrib = lam * c.coeffs[:, None]  # (B^2, 2B) over rings
    np.add.at(ring, (slice(None), cols), contrib.T)
    grid = np.fft.ifft(ring, axis=1) * (2 * B)
    scale = max(1.0, float(np.max(np.abs(grid.real))))
    residue = float(np.max(np.abs(grid.imag))) / scale
    if residue > residue_tol:
        raise SymmetryViolation(
            f"imaginary residue {residue:.3g} exceeds {residue_tol:g}; "
            "coefficients do not describe a real signal")
    return grid.real.copy()


def synthesize_complex(c: HarmonicCoeffs) -> np.ndarray:
    """Complex grid samples, without the real-signal check."""
    B = c.bandwidth
    lam = _grid_lambda(B)
    cols = _order_columns(B)
    ring = np.zeros((2 * B, 2 * B), dtype=np.complex128)
    np.add.at(ring, (slice(None), cols), (lam * c.coeffs[:, None]).T)
    return np.fft.ifft(ring, axis=1) * (2 * B)


def random_real_coeffs(B: int, rng: np.random.Generator) -> HarmonicCoeffs:
    """Random coefficients of a real band-limited signal."""
    c = np.zeros(B * B, dtype=np.complex128)
    for l in range(B):
        c[coeff_index(l, 0)] = rng.standard_normal()
        for m in range(1, l + 1):
            v = rng.standard_normal() + 1j * rng.standard_normal()
            c[coeff_index(l, m)] = v
            c[coeff_index(l, -m)] = (-1) ** m * np.conj(v)
    return HarmonicCoeffs(B, c)
