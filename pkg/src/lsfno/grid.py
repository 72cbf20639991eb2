"""Periodic cells, voxel fields and their discrete Fourier representation.

Fields are stored component-major: a field with ``m`` components on an
``N1 x ... x Nd`` grid is an array of shape ``(m, N1, ..., Nd)``. Spectra are
the real-to-complex half spectra over the grid axes, normalized such that the
zero-frequency coefficient is the volume average of the field.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

from .tensors import MANDEL_INDEX, SQRT2, mandel_size

SPECTRAL = "spectral"
ROTATED = "rotated_staggered"
FREQUENCY_MAPS = (SPECTRAL, ROTATED)


@dataclass(frozen=True)
class Cell:
    """Box ``[0, L1] x ... x [0, Ld]`` discretized by ``N1 x ... x Nd`` voxels."""

    lengths: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.lengths)
        resolution = tuple(int(n) for n in self.resolution)
        if len(lengths) != len(resolution) or len(lengths) not in (2, 3):
            raise ValueError(f"lengths {lengths} and resolution {resolution} must both have 2 or 3 entries")
        if any(x <= 0 for x in lengths):
            raise ValueError(f"cell lengths must be positive, got {lengths}")
        if any(n < 1 for n in resolution):
            raise ValueError(f"resolution must be >= 1 per axis, got {resolution}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "resolution", resolution)

    @classmethod
    def cube(cls, edge: float, n: int, d: int = 3) -> "Cell":
        return cls((edge,) * d, (n,) * d)

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.lengths, self.resolution))

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spectrum_shape(self) -> tuple[int, ...]:
        return self.resolution[:-1] + (self.resolution[-1] // 2 + 1,)

    def tiled(self, reps: int = 2) -> "Cell":
        """The cell obtained by stacking ``reps`` copies along every axis."""
        return Cell(tuple(L * reps for L in self.lengths), tuple(N * reps for N in self.resolution))


def _axes(cell: Cell) -> tuple[int, ...]:
    return tuple(range(-cell.dim, 0))


def _check_shape(arr: np.ndarray, shape: tuple[int, ...], what: str):
    if arr.shape[-len(shape):] != shape:
        raise ValueError(f"{what} has trailing shape {arr.shape[-len(shape):]}, expected {shape}")


def fft_forward(field, cell: Cell, workers: int | None = None) -> np.ndarray:
    """Half spectrum of a real ``(m, *grid)`` field, ``f_hat(0)`` = mean of ``f``."""
    field = np.asarray(field, dtype=float)
    _check_shape(field, cell.resolution, "field")
    return scipy.fft.rfftn(field, axes=_axes(cell), norm="forward", workers=workers)


def fft_inverse(spectrum, cell: Cell, workers: int | None = None) -> np.ndarray:
    spectrum = np.asarray(spectrum)
    _check_shape(spectrum, cell.spectrum_shape, "spectrum")
    return scipy.fft.irfftn(spectrum, s=cell.resolution, axes=_axes(cell), norm="forward", workers=workers)


def integer_frequencies(cell: Cell, half: bool = True) -> list[np.ndarray]:
    """Integer frequency per axis, broadcastable over the (half) spectrum grid.

    Indices above ``N/2`` are negative; the Nyquist index ``N/2`` of an even
    axis is reported as ``+N/2``.
    """
    out = []
    d = cell.dim
    for j, N in enumerate(cell.resolution):
        if half and j == d - 1:
            xi = np.arange(N // 2 + 1)
        else:
            xi = np.arange(N)
            xi = np.where(xi > N // 2, xi - N, xi)
        shape = [1] * d
        shape[j] = xi.size
        out.append(xi.reshape(shape))
    return out


def _axis_frequency(kind: str, xi: np.ndarray, L: float, N: int, h: float):
    """Per-axis factors ``(derivative, average)`` of the frequency map."""
    theta = 2.0 * np.pi * xi / N
    if kind == SPECTRAL:
        k = (2.0 * np.pi / L) * xi.astype(complex)
        if N % 2 == 0:
            # no real-valued derivative exists for the self-conjugate Nyquist mode
            k = np.where(2 * np.abs(xi) == N, 0.0, k)
        return k, np.ones_like(k)
    if kind == ROTATED:
        e = np.exp(1j * theta)
        # exact -1 at Nyquist so the averaging factor vanishes identically
        e = np.where(2 * np.abs(xi) == N, -1.0 + 0.0j, e)
        return (e - 1.0) / (1j * h), (1.0 + e) / 2.0
    raise ValueError(f"unknown frequency map {kind!r}; expected one of {FREQUENCY_MAPS}")


def frequency(kind: str, cell: Cell, xi) -> np.ndarray:
    """Frequency vector ``k(xi)`` (complex, length d) for one integer index vector."""
    xi = np.asarray(xi, dtype=int)
    if xi.shape != (cell.dim,):
        raise ValueError(f"index vector must have length {cell.dim}")
    deriv, avg = zip(*(
        _axis_frequency(kind, np.asarray(x), L, N, h)
        for x, L, N, h in zip(xi, cell.lengths, cell.resolution, cell.spacing)
    ))
    k = np.empty(cell.dim, dtype=complex)
    for j in range(cell.dim):
        k[j] = deriv[j] * np.prod([avg[l] for l in range(cell.dim) if l != j])
    return k


def frequency_vectors(kind: str, cell: Cell, half: bool = True) -> np.ndarray:
    """All frequency vectors, shape ``(d, *spectrum_shape)`` (or full grid if not ``half``)."""
    d = cell.dim
    factors = [
        _axis_frequency(kind, xi, L, N, h)
        for xi, L, N, h in zip(integer_frequencies(cell, half), cell.lengths, cell.resolution, cell.spacing)
    ]
    shape = cell.spectrum_shape if half else cell.resolution
    k = np.empty((d,) + shape, dtype=complex)
    for j in range(d):
        kj = factors[j][0]
        for l in range(d):
            if l != j:
                kj = kj * factors[l][1]
        k[j] = np.broadcast_to(kj, shape)
    return k


class FourierGrid:
    """Immutable transform context: cell, frequency map and cached symbols."""

    def __init__(self, cell: Cell, kind: str = ROTATED, workers: int | None = None):
        if kind not in FREQUENCY_MAPS:
            raise ValueError(f"unknown frequency map {kind!r}; expected one of {FREQUENCY_MAPS}")
        self.cell = cell
        self.kind = kind
        self.workers = workers

    @cached_property
    def k(self) -> np.ndarray:
        k = frequency_vectors(self.kind, self.cell)
        k.setflags(write=False)
        return k

    @cached_property
    def k_norm2(self) -> np.ndarray:
        return np.sum(np.abs(self.k) ** 2, axis=0)

    @cached_property
    def zero_mask(self) -> np.ndarray:
        """Frequencies treated as zero (mean mode and degenerate symbols)."""
        return self.k_norm2 < 1e-30

    @cached_property
    def unit_k(self) -> np.ndarray:
        """``k / |k|`` with zeros where :attr:`zero_mask` is set."""
        norm = np.sqrt(np.where(self.zero_mask, 1.0, self.k_norm2))
        kn = np.where(self.zero_mask, 0.0, self.k / norm)
        kn.setflags(write=False)
        return kn

    def forward(self, field) -> np.ndarray:
        return fft_forward(field, self.cell, self.workers)

    def inverse(self, spectrum) -> np.ndarray:
        return fft_inverse(spectrum, self.cell, self.workers)

    def sym_grad(self, u) -> np.ndarray:
        """Discrete symmetric gradient of a ``(d, *grid)`` vector field as a Mandel field."""
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.cell.dim:
            raise ValueError("displacement must have d components")
        return self.inverse(sym_grad_hat(self.k, self.forward(u)))

    def div(self, sigma) -> np.ndarray:
        """Discrete divergence (negative adjoint of :meth:`sym_grad`) of a Mandel field."""
        return self.inverse(div_hat(self.k, self.forward(sigma)))


def sym_grad_hat(k: np.ndarray, u_hat: np.ndarray) -> np.ndarray:
    """Mandel components of ``sym(i k (x) u_hat)``."""
    d = k.shape[0]
    out = np.empty((mandel_size(d),) + u_hat.shape[1:], dtype=complex)
    for s, (i, j) in enumerate(MANDEL_INDEX[d]):
        if i == j:
            out[s] = 1j * k[i] * u_hat[i]
        else:
            out[s] = (1j / SQRT2) * (k[i] * u_hat[j] + k[j] * u_hat[i])
    return out


def div_hat(k: np.ndarray, tau_hat: np.ndarray) -> np.ndarray:
    """``i tau_hat conj(k)``: Fourier divergence consistent with :func:`sym_grad_hat`."""
    return 1j * mandel_times_vector(tau_hat, np.conj(k))


def mandel_times_vector(tau: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Tensor-vector product ``tau v`` with ``tau`` given in Mandel components."""
    d = v.shape[0]
    t = np.zeros((d,) + np.broadcast_shapes(tau.shape[1:], v.shape[1:]), dtype=np.result_type(tau, v))
    for s, (i, j) in enumerate(MANDEL_INDEX[d]):
        if i == j:
            t[i] += tau[s] * v[i]
        else:
            t[i] += (tau[s] / SQRT2) * v[j]
            t[j] += (tau[s] / SQRT2) * v[i]
    return t


def l2_norm(field) -> float:
    """Volume-averaged L2 norm of a component-major field."""
    f = np.asarray(field)
    return float(np.sqrt(np.mean(np.sum(np.abs(f) ** 2, axis=0))))


def l2_inner(a, b) -> float:
    return float(np.mean(np.sum(np.asarray(a) * np.asarray(b), axis=0)))


def spectral_energy(spectrum, cell: Cell) -> float:
    """``sum_xi |f_hat(xi)|^2`` over the full spectrum, given the half spectrum."""
    s = np.abs(np.asarray(spectrum)) ** 2
    N = cell.resolution[-1]
    weights = np.full(cell.spectrum_shape[-1], 2.0)
    weights[0] = 1.0
    if N % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(s * weights))
