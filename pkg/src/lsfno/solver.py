"""Basic scheme and its neural variant, parameter selection and homogenization."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .green import gamma_hat_field, green_displacement
from .grid import Cell, FourierGrid, ROTATED, l2_norm
from .relu import ContractionNet, tau_field
from .tensors import dim_from_size, mandel_size, mandel_to_voigt_stiffness, spectral_bounds

EXACT = "exact_fft"
NEURAL = "neural"
MODES = (EXACT, NEURAL)
EQUILIBRIUM = "equilibrium"
INCREMENT = "increment"
CRITERIA = (EQUILIBRIUM, INCREMENT)


class MembershipError(ValueError):
    """Stiffness field outside the admissible class; ``voxels`` lists flat indices."""

    def __init__(self, message: str, voxels: np.ndarray):
        super().__init__(message)
        self.voxels = voxels


@dataclass(frozen=True)
class StiffnessField:
    """Phase-indexed stiffness field: ``tables[labels[x]]`` is the Mandel matrix at voxel ``x``."""

    cell: Cell
    labels: np.ndarray
    tables: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        tables = np.asarray(self.tables, dtype=float)
        if labels.shape != self.cell.resolution:
            raise ValueError(f"labels shape {labels.shape} does not match grid {self.cell.resolution}")
        K = mandel_size(self.cell.dim)
        if tables.ndim != 3 or tables.shape[1:] != (K, K):
            raise ValueError(f"tables must have shape (P, {K}, {K}), got {tables.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= tables.shape[0]):
            raise ValueError("labels reference phases outside the table")
        object.__setattr__(self, "labels", labels.astype(np.int64, copy=False))
        object.__setattr__(self, "tables", tables)

    @classmethod
    def homogeneous(cls, cell: Cell, C) -> "StiffnessField":
        return cls(cell, np.zeros(cell.resolution, dtype=np.int64), np.asarray(C, dtype=float)[None])

    @property
    def n_components(self) -> int:
        return self.tables.shape[1]

    def present_phases(self) -> np.ndarray:
        return np.unique(self.labels)

    def phase_bounds(self) -> np.ndarray:
        return np.array([spectral_bounds(T) for T in self.tables])

    def bounds(self) -> tuple[float, float]:
        """Global ``(alpha_minus, alpha_plus)`` over the phases present in the field."""
        b = self.phase_bounds()[self.present_phases()]
        return float(b[:, 0].min()), float(b[:, 1].max())

    @property
    def contrast(self) -> float:
        lo, hi = self.bounds()
        return hi / lo

    def voxel_matrices(self) -> np.ndarray:
        """Full ``(*grid, K, K)`` array; memory heavy, meant for small grids."""
        return self.tables[self.labels]

    def apply(self, eps: np.ndarray, tables: np.ndarray | None = None) -> np.ndarray:
        """Voxel-wise ``T[label] : eps`` for a Mandel field ``(K, *grid)``."""
        tables = self.tables if tables is None else tables
        K = self.n_components
        flat = eps.reshape(K, -1)
        lab = self.labels.reshape(-1)
        out = np.empty_like(flat)
        for p in self.present_phases():
            idx = np.flatnonzero(lab == p)
            out[:, idx] = tables[p] @ flat[:, idx]
        return out.reshape(eps.shape)

    def tiled(self, reps: int = 2) -> "StiffnessField":
        return StiffnessField(self.cell.tiled(reps), np.tile(self.labels, (reps,) * self.cell.dim), self.tables)


def reference_constants(alpha_minus: float, alpha_plus: float) -> tuple[float, float]:
    """Optimal reference ``alpha0 = (a- + a+)/2`` and contraction ``gamma = (a+ - a-)/(a+ + a-)``."""
    if not 0 < alpha_minus <= alpha_plus:
        raise ValueError(f"need 0 < alpha_minus <= alpha_plus, got ({alpha_minus}, {alpha_plus})")
    return 0.5 * (alpha_minus + alpha_plus), (alpha_plus - alpha_minus) / (alpha_plus + alpha_minus)


@dataclass
class SolverConfig:
    alpha_minus: float
    alpha_plus: float
    alpha0: float | None = None
    tolerance: float = 1e-5
    max_iterations: int = 100_000
    mode: str = EXACT
    neural: ContractionNet | None = None
    layer_count: int | None = None
    discretization: str = ROTATED
    workers: int | None = None
    criterion: str = EQUILIBRIUM

    def __post_init__(self):
        if self.alpha0 is None:
            self.alpha0 = reference_constants(self.alpha_minus, self.alpha_plus)[0]
        else:
            reference_constants(self.alpha_minus, self.alpha_plus)
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == NEURAL:
            if self.neural is None:
                raise ValueError("neural mode requires a ContractionNet")
            if not self.gamma0 < 1:
                raise ValueError(f"neural mode requires gamma0 < 1, got {self.gamma0:.6g}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.layer_count is not None and self.layer_count < 0:
            raise ValueError("layer_count must be >= 0")

    @classmethod
    def for_field(cls, C: StiffnessField, **kwargs) -> "SolverConfig":
        lo, hi = C.bounds()
        return cls(lo, hi, **kwargs)

    @property
    def gamma0(self) -> float:
        a0 = self.alpha0
        return max(abs(self.alpha_plus - a0), abs(self.alpha_minus - a0)) / a0

    @property
    def gamma(self) -> float:
        return reference_constants(self.alpha_minus, self.alpha_plus)[1]


@dataclass
class SolveResult:
    strain: np.ndarray
    displacement: np.ndarray
    iterations: int
    residual_history: list[float]
    wall_time: float
    converged: bool
    eps_bar: np.ndarray
    stress: np.ndarray | None = None
    # |L(eps_bar) - eps_bar| in L2, for a-priori estimates
    first_increment: float = 0.0

    @property
    def mean_stress(self) -> np.ndarray:
        if self.stress is None:
            raise ValueError("stress was not computed for this result")
        return self.stress.reshape(self.stress.shape[0], -1).mean(axis=1)


def check_membership(C: StiffnessField, alpha_minus: float, alpha_plus: float, rtol: float = 1e-10):
    """Raise :class:`MembershipError` if some voxel's stiffness leaves ``M(alpha-, alpha+)``."""
    slack = rtol * max(abs(alpha_plus), 1.0)
    bad = [p for p, (lo, hi) in enumerate(C.phase_bounds())
           if lo < alpha_minus - slack or hi > alpha_plus + slack]
    if not bad:
        return
    voxels = np.flatnonzero(np.isin(C.labels.reshape(-1), bad))
    if voxels.size == 0:
        return
    shown = ", ".join(str(tuple(int(i) for i in np.unravel_index(v, C.cell.resolution))) for v in voxels[:10])
    more = f" (+{voxels.size - 10} more)" if voxels.size > 10 else ""
    raise MembershipError(
        f"{voxels.size} voxels (phases {bad}) violate bounds [{alpha_minus}, {alpha_plus}]: {shown}{more}", voxels)


def _reference_tables(C: StiffnessField, alpha0: float) -> np.ndarray:
    """``T0 = (C - alpha0 I) / alpha0`` per phase."""
    return (C.tables - alpha0 * np.eye(C.n_components)) / alpha0


def polarization(eps: np.ndarray, C: StiffnessField, cfg: SolverConfig, T0: np.ndarray | None = None) -> np.ndarray:
    """Scaled polarization ``(C - C0):eps / alpha0`` or its network surrogate."""
    if T0 is None:
        T0 = _reference_tables(C, cfg.alpha0)
    if cfg.mode == EXACT:
        return C.apply(eps, T0)
    return tau_field(cfg.neural, T0, C.labels, eps)


def _step_from_polarization(tau: np.ndarray, eps_bar: np.ndarray, grid: FourierGrid):
    """Return the next strain and the mean of ``tau``."""
    tau_hat = grid.forward(tau)
    zero = (slice(None),) + (0,) * grid.cell.dim
    tau_mean = tau_hat[zero].real.copy()
    spec = gamma_hat_field(tau_hat, grid)
    spec *= -1.0
    spec[zero] = eps_bar
    return grid.inverse(spec), tau_mean


def basic_scheme_step(eps, eps_bar, C: StiffnessField, cfg: SolverConfig, grid: FourierGrid | None = None) -> np.ndarray:
    """One application of the (neural) Lippmann-Schwinger operator."""
    check_membership(C, cfg.alpha_minus, cfg.alpha_plus)
    grid = grid or FourierGrid(C.cell, cfg.discretization, cfg.workers)
    eps_bar = _as_load(eps_bar, C)
    return _step_from_polarization(polarization(np.asarray(eps, dtype=float), C, cfg), eps_bar, grid)[0]


def convergence_check(eps_next, eps_prev, eps_bar, tol: float) -> bool:
    """Normalized increment test ``|eps_next - eps_prev| <= tol |eps_bar|`` (absolute if ``eps_bar = 0``)."""
    return _increment(eps_next, eps_prev, eps_bar) <= tol


def _increment(eps_next, eps_prev, eps_bar) -> float:
    diff = l2_norm(np.asarray(eps_next) - np.asarray(eps_prev))
    scale = float(np.linalg.norm(eps_bar))
    return diff / scale if scale > 0 else diff


def equilibrium_residual(eps_next, eps_prev, eps_bar, tau_mean) -> float:
    """``|Gamma : sigma(eps_prev)| / |<sigma(eps_prev)>|`` expressed through one step.

    With ``sigma = alpha0 (tau + eps)`` one has ``Gamma : sigma = alpha0 (eps_prev - eps_next)``
    and ``<sigma> = alpha0 (<tau> + eps_bar)``. Absolute if the mean stress vanishes.
    """
    diff = l2_norm(np.asarray(eps_next) - np.asarray(eps_prev))
    scale = float(np.linalg.norm(np.asarray(tau_mean) + np.asarray(eps_bar)))
    return diff / scale if scale > 0 else diff


def _as_load(eps_bar, C: StiffnessField) -> np.ndarray:
    eps_bar = np.asarray(eps_bar, dtype=float).reshape(-1)
    if eps_bar.shape != (C.n_components,):
        raise ValueError(f"macroscopic strain must have {C.n_components} Mandel components")
    return eps_bar


def solve(C: StiffnessField, eps_bar, cfg: SolverConfig, grid: FourierGrid | None = None,
          compute_stress: bool = True) -> SolveResult:
    """Iterate from ``eps = eps_bar`` until converged or ``layer_count + 1`` steps ran.

    ``residual_history[k]`` is the residual of the k-th iterate measured by
    ``cfg.criterion``; the returned strain is the iterate after the last step.
    """
    t0 = time.perf_counter()
    check_membership(C, cfg.alpha_minus, cfg.alpha_plus)
    eps_bar = _as_load(eps_bar, C)
    grid = grid or FourierGrid(C.cell, cfg.discretization, cfg.workers)
    T0 = _reference_tables(C, cfg.alpha0)
    shape = (C.n_components,) + C.cell.resolution
    eps = np.broadcast_to(eps_bar.reshape((-1,) + (1,) * C.cell.dim), shape).copy()

    fixed = cfg.layer_count is not None
    n_steps = cfg.layer_count + 1 if fixed else cfg.max_iterations
    history: list[float] = []
    converged = False
    tau = polarization(eps, C, cfg, T0)
    first_increment = 0.0
    for k in range(n_steps):
        eps_next, tau_mean = _step_from_polarization(tau, eps_bar, grid)
        if k == 0:
            first_increment = l2_norm(eps_next - eps)
        if cfg.criterion == EQUILIBRIUM:
            history.append(equilibrium_residual(eps_next, eps, eps_bar, tau_mean))
        else:
            history.append(_increment(eps_next, eps, eps_bar))
        eps = eps_next
        if not fixed and history[-1] <= cfg.tolerance:
            converged = True
            break
        tau = polarization(eps, C, cfg, T0)
    if fixed:
        converged = True

    # eps = eps_bar - Gamma tau for the last polarization used
    u = green_displacement(tau, grid)
    stress = None
    if compute_stress:
        stress = C.apply(eps) if cfg.mode == EXACT else neural_stress_field(eps, C, cfg, T0)
    return SolveResult(
        strain=eps, displacement=u, iterations=len(history), residual_history=history,
        wall_time=time.perf_counter() - t0, converged=converged, eps_bar=eps_bar, stress=stress,
        first_increment=first_increment,
    )


def neural_stress(e, C_voxel, cfg: SolverConfig) -> np.ndarray:
    """``alpha0 tau((C - C0)/alpha0, e) + C0 : e`` for one voxel; ``C : e`` in exact mode."""
    e = np.asarray(e, dtype=float)
    C_voxel = np.asarray(C_voxel, dtype=float)
    if cfg.mode == EXACT:
        return C_voxel @ e
    T0 = (C_voxel - cfg.alpha0 * np.eye(C_voxel.shape[0])) / cfg.alpha0
    return cfg.alpha0 * cfg.neural(T0, e) + cfg.alpha0 * e


def neural_stress_field(eps: np.ndarray, C: StiffnessField, cfg: SolverConfig, T0: np.ndarray | None = None) -> np.ndarray:
    if T0 is None:
        T0 = _reference_tables(C, cfg.alpha0)
    return cfg.alpha0 * (tau_field(cfg.neural, T0, C.labels, eps) + eps)


@dataclass
class Homogenization:
    mandel: np.ndarray
    results: list[SolveResult]
    magnitude: float

    @property
    def voigt(self) -> np.ndarray:
        return mandel_to_voigt_stiffness(self.mandel)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results)

    @property
    def iterations(self) -> list[int]:
        return [r.iterations for r in self.results]


def effective_stiffness(C: StiffnessField, magnitude: float, cfg: SolverConfig,
                        loads: list[int] | None = None, keep_fields: bool = False) -> Homogenization:
    """Columns ``<sigma(eps*_j)> / magnitude`` for Mandel unit loads ``j`` (all by default).

    Columns of loads that are not computed are left as NaN.
    """
    if not magnitude > 0:
        raise ValueError(f"load magnitude must be positive, got {magnitude}")
    K = C.n_components
    loads = list(range(K)) if loads is None else list(loads)
    grid = FourierGrid(C.cell, cfg.discretization, cfg.workers)
    out = np.full((K, K), np.nan)
    results = []
    for j in loads:
        eps_bar = np.zeros(K)
        eps_bar[j] = magnitude
        res = solve(C, eps_bar, cfg, grid)
        out[:, j] = res.mean_stress / magnitude
        if not keep_fields:
            res.strain = res.displacement = res.stress = None
        results.append(res)
    return Homogenization(out, results, magnitude)


def isotropic_projection(C_eff) -> tuple[float, float]:
    """Closest isotropic ``(E, nu)`` from the bulk and shear invariants of a Mandel matrix."""
    C = np.asarray(C_eff, dtype=float)
    K = C.shape[0]
    d = dim_from_size(K)
    i = np.zeros(K)
    i[:d] = 1.0
    iCi = i @ C @ i
    # C = d*k * P_vol + 2 mu * P_dev, P_vol = i i^T / d, dim(dev) = K - 1
    bulk = iCi / d ** 2
    mu = (np.trace(C) - iCi / d) / (2 * (K - 1))
    if d == 3:
        E = 9 * bulk * mu / (3 * bulk + mu)
        nu = (3 * bulk - 2 * mu) / (2 * (3 * bulk + mu))
    else:
        # plane strain: bulk = lambda + mu
        lam = bulk - mu
        nu = lam / (2 * (lam + mu))
        E = 2 * mu * (1 + nu)
    return float(E), float(nu)


@dataclass(frozen=True)
class ParameterSelection:
    kappa: float
    eps0: float
    delta_target: float
    p: float = 2.1
    C_p: float | None = None
    C: float = 2.0
    C2: float = 1.0

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"exponent p must exceed 2, got {self.p}")
        if not self.kappa >= 1:
            raise ValueError("contrast kappa must be >= 1")
        if not (self.eps0 > 0 and self.delta_target > 0):
            raise ValueError("eps0 and delta_target must be positive")

    @property
    def gamma_theta(self) -> float:
        return 1.0 - 1.0 / (self.kappa + 1.0)

    @property
    def constant_p(self) -> float:
        return self.kappa + 1.0 if self.C_p is None else self.C_p


def select_parameters(sel: ParameterSelection) -> tuple[int, float, float]:
    """Depth ``K``, ReLU fidelity ``delta`` and cutoff ``M`` reaching the target accuracy.

    ``p`` and ``C_p`` are only known to exist; the defaults are guesses and the
    outputs are not certified bounds.
    """
    g = sel.gamma_theta
    budget = sel.delta_target / 3.0 * (1.0 - g)
    K = max(1, math.ceil(math.log(budget / sel.eps0) / math.log(g)))
    delta = min(budget / (sel.C2 * sel.eps0), 1.0 / (sel.kappa + 1.0))
    base = 3.0 * sel.C * sel.constant_p ** (sel.p / 2) * sel.eps0 ** (sel.p / 2) / ((1.0 - g) * sel.delta_target)
    M = max(base ** (2.0 / (sel.p - 2.0)), sel.eps0)
    return K, delta, M
