"""Explicit ReLU networks for squaring, multiplication and the double contraction.

The square network of depth ``m`` evaluates

    q_m(x) = a - sum_{k=1}^{m} g_k(a) / 4^k,   a = relu(x) + relu(-x),

where ``g_k`` is the k-fold composition of the tent map
``g(x) = 2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 1)``. ``q_m`` is the
piecewise-linear interpolant of ``x^2`` on the dyadic grid ``k / 2^m``.
Products are recovered through the polarization identity and the double
contraction of a Mandel matrix with a clamped Mandel vector is assembled from
``K^2`` such products.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .tensors import mandel_size

_DOMAIN_TOL = 1e-12

# the system TBB is often too old for numba; try it last
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def relu(x):
    return np.maximum(x, 0.0)


def tent(x):
    """Tent map ``2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 1)``."""
    x = np.asarray(x, dtype=float)
    return 2.0 * relu(x) - 4.0 * relu(x - 0.5) + 2.0 * relu(x - 1.0)


def ridge(x, M: float):
    """Clamp to ``[-M, M]``; as a network: ``relu(x + M) - relu(x - M) - M``."""
    if not M > 0:
        raise ValueError(f"cutoff M must be positive, got {M}")
    return np.clip(x, -M, M)


@dataclass(frozen=True)
class SquareNet:
    depth: int

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError(f"depth must be a positive integer, got {self.depth}")

    def __call__(self, x):
        return square_eval(self, x)

    def derivative(self, x):
        """Derivative of ``q_m`` away from breakpoints (one-sided value at breakpoints)."""
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        g = a
        dg = np.ones_like(a)
        dq = np.ones_like(a)
        scale = 1.0
        for _ in range(self.depth):
            dg = np.where(g < 0.5, 2.0, -2.0) * dg
            g = 2.0 * np.minimum(g, 1.0 - g)
            scale *= 0.25
            dq = dq - scale * dg
        return np.sign(x) * dq

    def export(self) -> dict:
        return export_square_weights(self)


def _check_unit_interval(x: np.ndarray):
    if np.any(np.abs(x) > 1.0 + _DOMAIN_TOL):
        raise ValueError("square network input outside [-1, 1]; clamp first")


def square_eval(net: SquareNet, x):
    """Evaluate ``q_m`` on ``[-1, 1]`` (vectorized)."""
    x = np.asarray(x, dtype=float)
    _check_unit_interval(x)
    a = np.minimum(np.abs(x), 1.0)
    g = a
    acc = a.copy() if isinstance(a, np.ndarray) else a
    scale = 1.0
    for _ in range(net.depth):
        # equals tent(g) bit for bit on [0, 1]
        g = 2.0 * np.minimum(g, 1.0 - g)
        scale *= 0.25
        acc = acc - scale * g
    return acc


def mul_eval(net: SquareNet, a, b, M: float):
    """Approximate product ``2M^2 [q((a+b)/2M) - q(a/2M) - q(b/2M)]`` for ``|a|, |b| <= M``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.abs(a) > M * (1 + _DOMAIN_TOL)) or np.any(np.abs(b) > M * (1 + _DOMAIN_TOL)):
        raise ValueError(f"multiplication network arguments must lie in [-{M}, {M}]")
    s = 0.5 / M
    return 2.0 * M * M * (square_eval(net, (a + b) * s) - (square_eval(net, a * s) + square_eval(net, b * s)))


@dataclass(frozen=True)
class ContractionNet:
    """Network ``tau(T, e)_i = sum_j m(T_ij, ridge(e_j))`` on Mandel components."""

    square: SquareNet
    cutoff: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        mandel_size(self.dim)

    @classmethod
    def of_depth(cls, depth: int, cutoff: float = 1.0, dim: int = 3) -> "ContractionNet":
        return cls(SquareNet(depth), cutoff, dim)

    @property
    def depth(self) -> int:
        return self.square.depth

    def __call__(self, T, e):
        return tau_eval(self, T, e)


def tau_eval(net: ContractionNet, T, e) -> np.ndarray:
    """Network double contraction for a matrix ``(..., K, K)`` and vector ``(..., K)``."""
    T = np.asarray(T, dtype=float)
    e = np.asarray(e, dtype=float)
    M = net.cutoff
    if np.any(np.abs(T) > M * (1 + _DOMAIN_TOL)):
        raise ValueError(f"tensor entries exceed the cutoff M={M}")
    r = ridge(e, M)
    return np.sum(mul_eval(net.square, T, r[..., None, :], M), axis=-1)


def _grid_points(depth: int, refine: int) -> np.ndarray:
    n = 2 ** (depth + refine)
    return np.arange(-n, n + 1) / n


def measure_fidelity(net: SquareNet, refine: int = 2) -> tuple[float, float]:
    """Measured ``(sup |q_m - x^2|, ess-sup |q_m' - 2x|)`` on ``[-1, 1]``.

    Sampling uses a dyadic grid ``2^refine`` times finer than the breakpoints,
    which contains every interval midpoint where the sup error is attained.
    The derivative is evaluated at fine-interval midpoints and compared with
    ``2x`` at both interval ends.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1 to hit interval midpoints")
    x = _grid_points(net.depth, refine)
    sup_error = float(np.max(np.abs(square_eval(net, x) - x * x)))
    mid = 0.5 * (x[1:] + x[:-1])
    slope = net.derivative(mid)
    deriv_error = float(max(np.max(np.abs(slope - 2 * x[:-1])), np.max(np.abs(slope - 2 * x[1:]))))
    return sup_error, deriv_error


def sobolev_fidelity(net: SquareNet) -> float:
    """W^{1,inf} distance of ``q_m`` to ``x^2`` on ``[-1, 1]`` (measured)."""
    return max(measure_fidelity(net))


def calibrate_depth(delta0: float, M: float, d: int, max_depth: int = 20) -> int:
    """Smallest depth whose measured W^{1,inf} error is at most ``delta0 / (M d (d+1))``."""
    if not delta0 > 0:
        raise ValueError(f"delta0 must be positive, got {delta0}")
    if M < 1:
        raise ValueError(f"cutoff M must be >= 1, got {M}")
    threshold = delta0 / (M * d * (d + 1))
    for depth in range(1, max_depth + 1):
        if sobolev_fidelity(SquareNet(depth)) <= threshold:
            return depth
    raise ValueError(f"no depth <= {max_depth} reaches fidelity {threshold:.3e}")


def export_square_weights(net: SquareNet) -> dict:
    """Dense layer form of ``q_m``: ReLU hidden layers followed by a linear readout.

    Hidden state after the lifting layers is ``[g, g - 1/2, g - 1, S]`` passed
    through ReLU, where ``S`` accumulates ``a - sum g_k / 4^k`` (always >= 0).
    """
    layers = [
        {"weights": [[1.0], [-1.0]], "biases": [0.0, 0.0]},
        {"weights": [[1.0, 1.0]] * 4, "biases": [0.0, -0.5, -1.0, 0.0]},
    ]
    for k in range(1, net.depth + 1):
        c = 0.25 ** k
        tent_row = [2.0, -4.0, 2.0, 0.0]
        layers.append({
            "weights": [tent_row, tent_row, tent_row, [-2.0 * c, 4.0 * c, -2.0 * c, 1.0]],
            "biases": [0.0, -0.5, -1.0, 0.0],
        })
    return {
        "activation": "relu",
        "depth": net.depth,
        "layer_sizes": [1] + [len(layer["biases"]) for layer in layers] + [1],
        "hidden": layers,
        "readout": {"weights": [[0.0, 0.0, 0.0, 1.0]], "biases": [0.0]},
    }


def forward_weights(spec: dict, x) -> np.ndarray:
    """Run a network exported by :func:`export_square_weights` on scalar inputs."""
    h = np.asarray(x, dtype=float).reshape(1, -1)
    for layer in spec["hidden"]:
        W = np.asarray(layer["weights"])
        b = np.asarray(layer["biases"])[:, None]
        h = relu(W @ h + b)
    W = np.asarray(spec["readout"]["weights"])
    b = np.asarray(spec["readout"]["biases"])[:, None]
    return (W @ h + b).reshape(np.shape(x))


def dump_weights(net: SquareNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(export_square_weights(net), fh, indent=1)


# --- voxel kernel -----------------------------------------------------------

@njit(cache=True, inline="always")
def _q(x, depth):
    a = abs(x)
    g = a
    acc = a
    scale = 1.0
    for _ in range(depth):
        g = 2.0 * min(g, 1.0 - g)
        scale *= 0.25
        acc -= scale * g
    return acc


@njit(cache=True, parallel=True)
def _tau_field_kernel(eps, labels, T, qT, depth, M, out):
    K = eps.shape[0]
    n = eps.shape[1]
    s = 0.5 / M
    pref = 2.0 * M * M
    for v in prange(n):
        p = labels[v]
        r = np.empty(K)
        qr = np.empty(K)
        for j in range(K):
            rj = min(max(eps[j, v], -M), M)
            r[j] = rj
            qr[j] = _q(rj * s, depth)
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += _q((T[p, i, j] + r[j]) * s, depth) - qT[p, i, j] - qr[j]
            out[i, v] = pref * acc


def tau_field(net: ContractionNet, tables: np.ndarray, labels: np.ndarray, eps: np.ndarray,
              out: np.ndarray | None = None) -> np.ndarray:
    """Apply the network voxel-wise.

    ``tables`` holds one Mandel matrix per phase ``(P, K, K)``, ``labels`` the
    phase of each voxel (any shape), ``eps`` a Mandel field ``(K, *grid)``.
    The ``q(T_ij / 2M)`` terms depend only on the phase and are evaluated once.
    """
    M = float(net.cutoff)
    tables = np.ascontiguousarray(tables, dtype=float)
    if np.any(np.abs(tables) > M * (1 + _DOMAIN_TOL)):
        raise ValueError(f"tensor entries exceed the cutoff M={M}")
    K = tables.shape[-1]
    flat = np.ascontiguousarray(eps.reshape(K, -1), dtype=float)
    lab = np.ascontiguousarray(labels.reshape(-1), dtype=np.int64)
    qT = np.ascontiguousarray(square_eval(net.square, np.clip(tables * (0.5 / M), -1.0, 1.0)))
    if out is None:
        out = np.empty_like(flat)
    else:
        out = out.reshape(K, -1)
    _tau_field_kernel(flat, lab, tables, qT, int(net.depth), M, out)
    return out.reshape(eps.shape)
