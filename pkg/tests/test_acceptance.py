"""Acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line and the conftest hook repeats all of them in
the terminal summary. Reference values are the published single-sphere
results at a 32 um cell with a 10 um inclusion.
"""
from functools import lru_cache

import numpy as np
import pytest

from lsfno.bench import moduli, rel_error, sphere_field
from lsfno.green import gamma_apply
from lsfno.grid import ROTATED, SPECTRAL, Cell, FourierGrid, l2_inner, l2_norm
from lsfno.relu import ContractionNet, SquareNet, measure_fidelity, mul_eval, sobolev_fidelity, square_eval, tau_eval
from lsfno.solver import EXACT, NEURAL, SolverConfig, effective_stiffness, solve
from oracles import (
    LEVEL,
    SAMPLES,
    bound_samples,
    dense_solution,
    lipschitz_sample,
    max_entry,
    random_vector,
    rotated_derivatives,
    small_input_sample,
    spectral_derivatives,
    two_phase_random,
)

REPORT: dict[int, str] = {}

MODULI_REF = {12: (5.0083, 1.9884, 2.8770), 96: (5.2376, 2.0465, 2.9822)}
ITER_REF = {12: 92, 24: 181, 48: 360, 96: 716}
C11_RESOLUTION_REF = {32: 5.1309, 64: 5.1036}
DEPTHS = (7, 9, 11)
LOAD_11, LOAD_23 = 0, 3


def report(number: int, title: str, checks: list[tuple[str, bool]]):
    ok = all(passed for _, passed in checks)
    failed = [name for name, passed in checks if not passed]
    detail = "; ".join(name for name, _ in checks)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}"
    if failed:
        line += f" || failing: {'; '.join(failed)}"
    REPORT[number] = line
    print(line)
    assert ok, line


@lru_cache(maxsize=None)
def homogenize(kappa, n, mode, depth, magnitude, loads):
    C = sphere_field(kappa, n)
    net = ContractionNet.of_depth(depth, 1.0, 3) if mode == NEURAL else None
    cfg = SolverConfig.for_field(C, mode=mode, neural=net)
    return effective_stiffness(C, magnitude, cfg, loads=list(loads))


def c11(kappa, n, mode, depth=None, magnitude=1e-3):
    return float(homogenize(kappa, n, mode, depth, magnitude, (LOAD_11,)).mandel[0, 0])


def iterations(kappa, n, mode, depth=None):
    return homogenize(kappa, n, mode, depth, 1e-3, (LOAD_11,)).iterations[0]


def test_criterion_01_effective_moduli():
    checks = []
    for kappa, ref in MODULI_REF.items():
        h = homogenize(kappa, 32, EXACT, None, 1e-3, (LOAD_11, LOAD_23))
        for name, value, r in zip(("C11", "C12", "C44"), moduli(h), ref):
            err = rel_error(value, r)
            checks.append((f"k={kappa} {name}={value:.4f} vs {r} ({100 * err:.2f}%)", err <= 0.01 and h.converged))
    report(1, "effective moduli, exact mode, +-1%", checks)


def test_criterion_02_depth_trend():
    exact = c11(12, 32, EXACT)
    errs = {m: rel_error(c11(12, 32, NEURAL, m), exact) for m in DEPTHS}
    text = ", ".join(f"m={m}: {100 * e:.4f}%" for m, e in errs.items())
    checks = [
        (f"ordered ({text})", errs[11] < errs[9] < errs[7]),
        (f"m=11 {100 * errs[11]:.4f}% <= 0.5%", errs[11] <= 0.005),
        (f"m=7 {100 * errs[7]:.2f}% >= 5%", errs[7] >= 0.05),
    ]
    report(2, "neural C11 error ordered by depth", checks)


def test_criterion_03_iteration_counts():
    checks = []
    for kappa, ref in ITER_REF.items():
        n_exact = iterations(kappa, 32, EXACT)
        n_neural = iterations(kappa, 32, NEURAL, 11)
        checks.append((f"k={kappa} exact {n_exact} vs {ref}", abs(n_exact - ref) <= 0.15 * ref))
        checks.append((f"k={kappa} m=11 {n_neural} vs exact {n_exact}", abs(n_neural - n_exact) <= 0.05 * n_exact))
    report(3, "iteration counts", checks)


def test_criterion_04_resolution():
    checks = []
    for n, ref in C11_RESOLUTION_REF.items():
        v = c11(24, n, EXACT)
        checks.append((f"N={n} C11={v:.4f} vs {ref} ({100 * rel_error(v, ref):.2f}%)", rel_error(v, ref) <= 0.01))
    for m in DEPTHS:
        e = [100 * rel_error(c11(24, n, NEURAL, m), c11(24, n, EXACT)) for n in C11_RESOLUTION_REF]
        checks.append((f"m={m} errors {e[0]:.4f}%/{e[1]:.4f}% spread {abs(e[0] - e[1]):.4f}pp",
                       abs(e[0] - e[1]) < 0.5))
    report(4, "resolution stability, k=24", checks)


def test_criterion_05_magnitude():
    mags = (1e-3, 1e-2, 0.5, 1.0)
    values = [c11(12, 32, EXACT, magnitude=a) for a in mags]
    spread = max(abs(v - values[0]) / abs(values[0]) for v in values)
    checks = [(f"exact C11 spread {spread:.1e}", spread <= 1e-10)]
    for m in DEPTHS:
        e_small = rel_error(c11(12, 32, NEURAL, m, 1e-3), values[0])
        e_half = rel_error(c11(12, 32, NEURAL, m, 0.5), values[2])
        checks.append((f"m={m} error 50% {100 * e_half:.4f}% < 0.1% {100 * e_small:.4f}%", e_half < e_small))
    report(5, "load magnitude", checks)


def test_criterion_06_operator_invariants():
    checks = []
    rng = np.random.default_rng(0)
    for kind in (SPECTRAL, ROTATED):
        grid = FourierGrid(Cell.cube(1.0, 16), kind)
        a, b = rng.normal(size=(2, 6) + grid.cell.resolution)
        ga, gb = gamma_apply(a, grid), gamma_apply(b, grid)
        proj = l2_norm(gamma_apply(ga, grid) - ga) / l2_norm(ga)
        adj = abs(l2_inner(ga, b) - l2_inner(a, gb)) / (l2_norm(a) * l2_norm(b))
        checks.append((f"{kind} projector {proj:.1e} adjoint {adj:.1e}", proj < 1e-10 and adj < 1e-10))
        checks.append((f"{kind} non-expansive", l2_norm(ga) <= (1 + 1e-10) * l2_norm(a)))

    C = two_phase_random(8, 2, 3)
    lo, hi = C.bounds()
    load = np.array([1e-3, 0, 0, 0, 0, 0])
    x = solve(C, load, SolverConfig(lo, hi))
    y = solve(C, load, SolverConfig(lo, hi, alpha0=0.6 * (lo + hi)))
    diff = l2_norm(x.strain - y.strain) / np.linalg.norm(load)
    checks.append((f"alpha0 independence {diff:.1e} <= 5 tol", diff <= 5e-5))

    worst_sqrt, worst_app = 0.0, 0.0
    for kappa in (12, 24, 48, 96):
        Cs = sphere_field(kappa, 16)
        cfg = SolverConfig.for_field(Cs)
        for j in range(6):
            eps_bar = np.zeros(6)
            eps_bar[j] = 1e-3
            res = solve(Cs, eps_bar, cfg, compute_stress=False)
            dev = l2_norm(res.strain - eps_bar[:, None, None, None])
            worst_sqrt = max(worst_sqrt, dev / (np.sqrt(Cs.contrast) * 1e-3))
            worst_app = max(worst_app, dev / (res.first_increment / (1 - cfg.gamma)))
    checks.append((f"sqrt(kappa) bound ratio {worst_sqrt:.3f} <= 1", worst_sqrt <= 1))
    checks.append((f"contraction a-priori bound ratio {worst_app:.3f} <= 1", worst_app <= 1))
    report(6, "operator invariants", checks)


def test_criterion_07_relu_certification():
    checks = []
    sup_ok = all(abs(measure_fidelity(SquareNet(m))[0] - 2.0 ** (-2 * m - 2)) < 1e-12 for m in range(1, 13))
    checks.append(("sup error 2^(-2m-2) for m=1..12", sup_ok))

    dyadic = True
    rng = np.random.default_rng(1)
    for m in range(1, 13):
        n = 2 ** m
        x = np.arange(-n, n + 1) / n
        dyadic &= np.array_equal(square_eval(SquareNet(m), x), x * x)
        h = 2 ** (m - 1)
        a, b = rng.integers(-h, h + 1, size=(2, 500)) / h
        dyadic &= np.array_equal(mul_eval(SquareNet(m), a, b, 1.0), a * b)
        T = rng.integers(-h, h + 1, size=(100, 6, 6)) / h
        e = rng.integers(-h, h + 1, size=(100, 6)) / h
        dyadic &= np.array_equal(tau_eval(ContractionNet.of_depth(m), T, e), np.einsum("nij,nj->ni", T, e))
    checks.append(("dyadic exactness of q, m, tau", bool(dyadic)))

    for m in DEPTHS:
        lhs, T, de, delta, M = lipschitz_sample(m)
        rhs = (np.linalg.norm(T, 2, axis=(1, 2)) + M * delta * LEVEL * max_entry(T)) * de
        bad = int(np.sum(lhs > rhs * (1 + 1e-12)))
        checks.append((f"m={m} Lipschitz bound violations {bad}/{SAMPLES}", bad == 0))

        err, T, ne, delta, M = small_input_sample(m)
        bad = int(np.sum(err > M * delta * LEVEL * max_entry(T) * ne * (1 + 1e-12)))
        checks.append((f"m={m} small-input bound violations {bad}/{SAMPLES}", bad == 0))

        rng_l, net, delta, M, T = bound_samples(m, 30 + m)
        e = random_vector(rng_l, SAMPLES, rng_l.uniform(M, 10 * M, SAMPLES))
        err = np.linalg.norm(tau_eval(net, T, e) - np.einsum("nij,nj->ni", T, e), axis=1)
        rhs = (1 + delta * M * LEVEL) * np.linalg.norm(T, 2, axis=(1, 2)) * np.linalg.norm(e, axis=1)
        bad = int(np.sum(err > rhs * (1 + 1e-12)))
        checks.append((f"m={m} large-input bound violations {bad}/{SAMPLES}", bad == 0))

        rng_s = np.random.default_rng(40 + m)
        c, x, y = rng_s.uniform(-1, 1, (3, SAMPLES))
        d = sobolev_fidelity(SquareNet(m))
        lhs = np.abs(mul_eval(SquareNet(m), c, x, 1.0) - mul_eval(SquareNet(m), c, y, 1.0) - c * (x - y))
        bad = int(np.sum(lhs > 2 * d * np.abs(x - y) * (1 + 1e-12) + 1e-15))
        checks.append((f"m={m} scalar increment bound violations {bad}/{SAMPLES}", bad == 0))
    report(7, "ReLU certification", checks)


def test_criterion_08_dense_oracle():
    checks = []
    n, L = 4, 2.0
    eps_bar = np.array([1e-3, -2e-4, 5e-4, 3e-4, 0.0, 1e-4])
    for seed in (7, 8):
        C = two_phase_random(n, 12, seed, L=L)
        for kind, ops in ((SPECTRAL, spectral_derivatives(n, L / n)), (ROTATED, rotated_derivatives(n, L / n))):
            ref = dense_solution(C, eps_bar, ops)
            res = solve(C, eps_bar, SolverConfig.for_field(C, discretization=kind, tolerance=1e-13))
            err = l2_norm(res.strain - ref) / l2_norm(ref)
            checks.append((f"seed {seed} {kind} {err:.1e}", err <= 1e-8))
    report(8, "dense 4^3 oracle", checks)


def test_criterion_09_tiling():
    C = sphere_field(12, 16)
    load = np.array([1e-3, 0, 0, 0, 0, 0])
    small = solve(C, load, SolverConfig.for_field(C))
    big = C.tiled()
    large = solve(big, load, SolverConfig.for_field(big))
    tiled = np.tile(small.strain, (1, 2, 2, 2))
    err = l2_norm(large.strain - tiled) / l2_norm(tiled)
    report(9, "tiling 16^3 -> 32^3", [(f"relative difference {err:.1e}", err <= 1e-10)])


def test_criterion_10_out_of_scope():
    REPORT[10] = "N/A  criterion 10 (512^3 universality study): out of scope at desk scale; see README"
    pytest.skip("large-scale study is not part of acceptance")
