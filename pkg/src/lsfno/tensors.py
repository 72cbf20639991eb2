"""Symmetric-tensor algebra in Mandel notation.

Component ordering is fixed as ``(11, 22, 33, 23, 13, 12)`` in 3D and
``(11, 22, 12)`` in 2D, with the shear slots scaled by sqrt(2). With that
scaling the Euclidean norm of a Mandel vector equals the Frobenius norm of
the tensor, and a fourth-order tensor with minor and major symmetries acts
as a plain symmetric K x K matrix, K = d(d+1)/2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2 = np.sqrt(2.0)

# (row, col) of each Mandel slot
MANDEL_INDEX = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}
COMPONENT_NAMES = {
    2: ("11", "22", "12"),
    3: ("11", "22", "33", "23", "13", "12"),
}


def mandel_size(d: int) -> int:
    if d not in MANDEL_INDEX:
        raise ValueError(f"unsupported dimension d={d}; expected 2 or 3")
    return d * (d + 1) // 2


def dim_from_size(K: int) -> int:
    for d in (2, 3):
        if mandel_size(d) == K:
            return d
    raise ValueError(f"{K} is not a Mandel vector length (3 or 6)")


def mandel_weights(d: int) -> np.ndarray:
    """Scaling of each Mandel slot relative to the tensor component (1 or sqrt 2)."""
    return np.array([1.0 if i == j else SQRT2 for i, j in MANDEL_INDEX[d]])


def mandel_pack(tensor, atol: float = 1e-12) -> np.ndarray:
    """Convert symmetric tensors of shape ``(..., d, d)`` into Mandel vectors ``(..., K)``."""
    t = np.asarray(tensor)
    d = t.shape[-1]
    if t.shape[-2] != d or d not in MANDEL_INDEX:
        raise ValueError(f"expected (..., d, d) with d in (2, 3), got {t.shape}")
    asym = np.abs(t - np.swapaxes(t, -1, -2))
    scale = max(1.0, float(np.max(np.abs(t), initial=0.0)))
    if np.any(asym > atol * scale):
        raise ValueError("tensor is not symmetric")
    w = mandel_weights(d)
    return np.stack([w[s] * t[..., i, j] for s, (i, j) in enumerate(MANDEL_INDEX[d])], axis=-1)


def mandel_unpack(vec) -> np.ndarray:
    """Inverse of :func:`mandel_pack`; accepts real or complex ``(..., K)`` arrays."""
    v = np.asarray(vec)
    d = dim_from_size(v.shape[-1])
    w = mandel_weights(d)
    out = np.zeros(v.shape[:-1] + (d, d), dtype=v.dtype)
    for s, (i, j) in enumerate(MANDEL_INDEX[d]):
        out[..., i, j] = v[..., s] / w[s]
        out[..., j, i] = v[..., s] / w[s]
    return out


@dataclass(frozen=True)
class IsotropicMaterial:
    young_modulus: float
    poisson_ratio: float

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.young_modulus}")
        if self.poisson_ratio == 0.5:
            raise ZeroDivisionError("Poisson ratio 0.5 (incompressible) has no finite Lame constant")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.poisson_ratio}")

    @property
    def lame(self) -> tuple[float, float]:
        """Return ``(lambda, mu)``."""
        E, nu = self.young_modulus, self.poisson_ratio
        return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def isotropic_stiffness(mat: IsotropicMaterial, d: int = 3) -> np.ndarray:
    """Mandel matrix of ``lambda tr(eps) I + 2 mu eps``."""
    K = mandel_size(d)
    lam, mu = mat.lame
    trace_vec = np.zeros(K)
    trace_vec[:d] = 1.0
    return lam * np.outer(trace_vec, trace_vec) + 2.0 * mu * np.eye(K)


def double_contract(T, e) -> np.ndarray:
    """Apply ``T : e`` for a Mandel matrix and a Mandel vector (or a stack of them).

    ``e`` may carry trailing grid axes, i.e. shape ``(K, ...)``.
    """
    T = np.asarray(T)
    e = np.asarray(e)
    return np.tensordot(T, e, axes=(1, 0))


def spectral_norm(T) -> float:
    return float(np.linalg.norm(np.asarray(T), 2))


def spectral_bounds(T) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric Mandel matrix."""
    T = np.asarray(T, dtype=float)
    if not np.allclose(T, T.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(T).max())):
        raise ValueError("stiffness matrix is not symmetric")
    ev = np.linalg.eigvalsh(T)
    return float(ev[0]), float(ev[-1])


def in_stiffness_class(T, alpha_minus: float, alpha_plus: float, rtol: float = 1e-10) -> bool:
    """True if ``alpha_minus |e|^2 <= e:T:e <= alpha_plus |e|^2`` for every strain ``e``."""
    lo, hi = spectral_bounds(T)
    slack = rtol * max(abs(alpha_plus), 1.0)
    return lo >= alpha_minus - slack and hi <= alpha_plus + slack


def mandel_to_voigt_stiffness(C) -> np.ndarray:
    """Mandel stiffness matrix to Voigt (engineering shear) convention."""
    C = np.asarray(C)
    w = mandel_weights(dim_from_size(C.shape[-1]))
    return C / np.outer(w, w)


def voigt_to_mandel_stiffness(C) -> np.ndarray:
    C = np.asarray(C)
    w = mandel_weights(dim_from_size(C.shape[-1]))
    return C * np.outer(w, w)
