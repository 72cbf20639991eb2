"""Single-sphere benchmark studies: moduli, iterations, resolution and load magnitude."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .green import von_mises
from .microstructure import assign_materials, export_csv, export_field, gen_sphere, sphere_materials
from .relu import ContractionNet
from .solver import EXACT, NEURAL, Homogenization, SolverConfig, StiffnessField, effective_stiffness, solve

log = logging.getLogger(__name__)

CELL_EDGE = 32.0
RADIUS = 10.0
# Mandel slots needed for C11, C12 (load 11) and C44 (load 23)
MODULI_LOADS = (0, 3)


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".10g")


def sphere_field(kappa: float, resolution: int) -> StiffnessField:
    return assign_materials(gen_sphere(CELL_EDGE, RADIUS, resolution), sphere_materials(kappa))


def make_config(C: StiffnessField, mode: str, depth: int | None = None, tol: float = 1e-5,
                max_iter: int = 100_000, workers: int | None = None) -> SolverConfig:
    net = ContractionNet.of_depth(depth, 1.0, C.cell.dim) if mode == NEURAL else None
    return SolverConfig.for_field(C, mode=mode, neural=net, tolerance=tol, max_iterations=max_iter, workers=workers)


def moduli(h: Homogenization) -> tuple[float, float, float]:
    """``(C11, C12, C44)`` with C44 the Mandel shear entry."""
    return float(h.mandel[0, 0]), float(h.mandel[1, 0]), float(h.mandel[3, 3])


def rel_error(value: float, ref: float) -> float:
    return abs(value - ref) / abs(ref)


@dataclass
class BenchCell:
    mode: str
    depth: int | None
    kappa: float
    resolution: int
    magnitude: float
    homog: Homogenization | None = None
    error: str | None = None
    wall_time: float = 0.0

    @property
    def label(self) -> str:
        return "FFT" if self.mode == EXACT else f"FNO{self.depth}"


def run_cell(kappa, resolution, mode, depth, magnitude, loads, tol=1e-5, max_iter=100_000, workers=None) -> BenchCell:
    cell = BenchCell(mode, depth, kappa, resolution, magnitude)
    t0 = time.perf_counter()
    try:
        C = sphere_field(kappa, resolution)
        cfg = make_config(C, mode, depth, tol, max_iter, workers)
        cell.homog = effective_stiffness(C, magnitude, cfg, loads=loads)
        if not cell.homog.converged:
            cell.error = "not converged"
    except Exception as exc:  # recorded per cell, the sweep continues
        log.exception("benchmark cell failed")
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.wall_time = time.perf_counter() - t0
    return cell


@dataclass
class Study:
    rows: list[list] = field(default_factory=list)
    timing_rows: list[list] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def contrast_study(contrasts, depths, resolution=32, magnitude=1e-3, **kw) -> tuple[Study, Study]:
    """Effective moduli with errors per depth, and iteration counts with runtimes."""
    moduli_study, iter_study = Study(), Study()
    for kappa in contrasts:
        ref = run_cell(kappa, resolution, EXACT, None, magnitude, MODULI_LOADS, **kw)
        cells = [ref] + [run_cell(kappa, resolution, NEURAL, m, magnitude, MODULI_LOADS, **kw) for m in depths]
        for c in cells:
            if c.error:
                moduli_study.failures.append(f"kappa={kappa} {c.label}: {c.error}")
        ref_mod = moduli(ref.homog) if ref.homog is not None else (np.nan,) * 3
        for c in cells:
            mod = moduli(c.homog) if c.homog is not None else (np.nan,) * 3
            errs = [100 * rel_error(v, r) for v, r in zip(mod, ref_mod)]
            moduli_study.rows.append([fmt(kappa), c.label, *map(fmt, mod), *map(fmt, errs), c.error or ""])
            its = c.homog.iterations[0] if c.homog is not None else None
            iter_study.rows.append([fmt(kappa), c.label, fmt(its) if its is not None else ""])
            iter_study.timing_rows.append([fmt(kappa), c.label, fmt(c.wall_time)])
    return moduli_study, iter_study


def single_coefficient_study(kappa, depths, resolutions=(32,), magnitudes=(1e-3,), **kw) -> Study:
    """C11 from a uniaxial load: exact value, neural values and relative errors."""
    study = Study()
    for n in resolutions:
        for mag in magnitudes:
            ref = run_cell(kappa, n, EXACT, None, mag, (0,), **kw)
            cells = [ref] + [run_cell(kappa, n, NEURAL, m, mag, (0,), **kw) for m in depths]
            c_ref = ref.homog.mandel[0, 0] if ref.homog is not None else np.nan
            for c in cells:
                c11 = c.homog.mandel[0, 0] if c.homog is not None else np.nan
                its = c.homog.iterations[0] if c.homog is not None else None
                if c.error:
                    study.failures.append(f"N={n} magnitude={mag} {c.label}: {c.error}")
                study.rows.append([fmt(n), fmt(mag), c.label, fmt(c11), fmt(100 * rel_error(c11, c_ref)),
                                   fmt(its) if its is not None else "", c.error or ""])
                study.timing_rows.append([fmt(n), fmt(mag), c.label, fmt(c.wall_time)])
    return study


def export_error_maps(out: Path, kappa: float, depths, resolution=32, magnitude=1e-3, **kw) -> list[str]:
    """von Mises stress of the exact and neural solutions for a uniaxial load and their difference."""
    C = sphere_field(kappa, resolution)
    eps_bar = np.zeros(C.n_components)
    eps_bar[0] = magnitude
    ref = solve(C, eps_bar, make_config(C, EXACT, **kw))
    vm_ref = von_mises(ref.stress)
    written = []
    name = f"von_mises_k{fmt(kappa)}_N{resolution}"
    export_field(out / f"{name}_FFT.raw", vm_ref[None], C.cell, ["vm"])
    written.append(f"{name}_FFT.raw")
    for m in depths:
        res = solve(C, eps_bar, make_config(C, NEURAL, m, **kw))
        vm = von_mises(res.stress)
        export_field(out / f"{name}_FNO{m}.raw", vm[None], C.cell, ["vm"])
        export_field(out / f"{name}_FNO{m}_abs_error.raw", np.abs(vm - vm_ref)[None], C.cell, ["vm_abs_error"])
        written += [f"{name}_FNO{m}.raw", f"{name}_FNO{m}_abs_error.raw"]
    return written


MODULI_HEADER = ["kappa", "model", "C11", "C12", "C44", "err_C11_pct", "err_C12_pct", "err_C44_pct", "failure"]
ITER_HEADER = ["kappa", "model", "iterations"]
COEFF_HEADER = ["resolution", "magnitude", "model", "C11", "err_C11_pct", "iterations", "failure"]


def write_study(out: Path, name: str, header, study: Study, timing_header) -> None:
    export_csv(out / f"{name}.csv", header, study.rows)
    export_csv(out / f"{name}_runtime.csv", timing_header, study.timing_rows)
