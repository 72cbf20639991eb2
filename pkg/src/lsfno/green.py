"""Eshelby-Green projector, displacement Green operator and equivalent stress.

For a (possibly complex) frequency vector ``k`` with gradient symbol ``i k``
the strain-space projector is

    Gamma(k) : tau = sym(k (x) A(k)^{-1} (tau conj(k))),
    A(k) = (|k|^2 I + k (x) conj(k)) / 2,

which is Hermitian and idempotent per frequency. For real ``k`` it coincides
with the classical isotropic-reference formula. Only the direction ``k/|k|``
matters, so the operators below work with the cached unit vectors of a
:class:`~lsfno.grid.FourierGrid`.
"""
from __future__ import annotations

import numpy as np

from .grid import FourierGrid, mandel_times_vector
from .tensors import MANDEL_INDEX, SQRT2, dim_from_size

ZERO_FREQUENCY_TOL = 1e-30


def _project(n: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``2 sym(n (x) tau conj(n)) - (conj(n).tau.conj(n)) n (x) n`` in Mandel form."""
    d = n.shape[0]
    t = mandel_times_vector(tau, np.conj(n))
    s = np.sum(np.conj(n) * t, axis=0)
    out = np.empty(np.broadcast_shapes(tau.shape, (tau.shape[0],) + n.shape[1:]), dtype=complex)
    for c, (i, j) in enumerate(MANDEL_INDEX[d]):
        if i == j:
            out[c] = 2.0 * n[i] * t[i] - s * n[i] * n[i]
        else:
            out[c] = SQRT2 * (n[i] * t[j] + n[j] * t[i] - s * n[i] * n[j])
    return out


def gamma_hat_apply(k, tau) -> np.ndarray:
    """Apply the projector symbol at a single nonzero frequency ``k`` to Mandel ``tau``."""
    k = np.asarray(k, dtype=complex)
    tau = np.asarray(tau, dtype=complex)
    if dim_from_size(tau.shape[0]) != k.shape[0]:
        raise ValueError("frequency and tensor dimensions differ")
    norm2 = float(np.sum(np.abs(k) ** 2))
    if norm2 < ZERO_FREQUENCY_TOL:
        raise ValueError("gamma_hat_apply is undefined at k = 0; the zero mode maps to zero")
    return _project(k / np.sqrt(norm2), tau)


def gamma_hat_field(tau_hat: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Projector applied to a whole half spectrum; zero mode and degenerate symbols give 0."""
    out = _project(grid.unit_k, tau_hat)
    out[:, grid.zero_mask] = 0.0
    return out


def gamma_apply(tau, grid: FourierGrid) -> np.ndarray:
    """``Gamma : tau`` for a real Mandel field ``(K, *grid)``."""
    return grid.inverse(gamma_hat_field(grid.forward(tau), grid))


def displacement_hat(xi_hat: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Spectrum of ``-G div xi`` (so that ``sym_grad(u) = -Gamma : xi``)."""
    n = grid.unit_k
    t = mandel_times_vector(xi_hat, np.conj(n))
    s = np.sum(np.conj(n) * t, axis=0)
    inv_norm = np.where(grid.zero_mask, 0.0, 1.0 / np.sqrt(np.where(grid.zero_mask, 1.0, grid.k_norm2)))
    return 1j * inv_norm * (2.0 * t - s * n)


def green_displacement(xi, grid: FourierGrid) -> np.ndarray:
    """Mean-free displacement ``u = -G div xi`` of a Mandel field ``xi``."""
    return grid.inverse(displacement_hat(grid.forward(xi), grid))


def von_mises(sigma) -> np.ndarray:
    """``sqrt(3/2) |dev sigma|`` per voxel for a Mandel stress field ``(K, ...)``."""
    sigma = np.asarray(sigma, dtype=float)
    d = dim_from_size(sigma.shape[0])
    mean = np.sum(sigma[:d], axis=0) / d
    dev2 = np.sum((sigma[:d] - mean) ** 2, axis=0) + np.sum(sigma[d:] ** 2, axis=0)
    return np.sqrt(1.5 * dev2)
