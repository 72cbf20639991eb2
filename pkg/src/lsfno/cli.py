"""Command-line driver.

Exit codes: 0 success, 1 non-convergence, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bench
from .config import ConfigError, RunConfig
from .green import von_mises
from .microstructure import assign_materials, export_csv, export_field, load_field
from .relu import SquareNet, calibrate_depth, measure_fidelity
from .solver import NEURAL, MembershipError, effective_stiffness, isotropic_projection, solve
from .tensors import COMPONENT_NAMES, mandel_to_voigt_stiffness

SUMMARY_SCHEMA_VERSION = 1
EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("lsfno")


def _set_threads(n: int | None):
    if n is None:
        return
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _write_summary(out: Path, summary: dict):
    summary = {"schema_version": SUMMARY_SCHEMA_VERSION, "lsfno_version": __version__, **summary}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _export_solution(out: Path, tag: str, res, cell, d: int):
    names = list(COMPONENT_NAMES[d])
    export_field(out / f"strain_{tag}.raw", res.strain, cell, names)
    export_field(out / f"stress_{tag}.raw", res.stress, cell, names)
    export_field(out / f"displacement_{tag}.raw", res.displacement, cell, [str(i + 1) for i in range(d)])
    export_field(out / f"von_mises_{tag}.raw", von_mises(res.stress)[None], cell, ["vm"])
    export_csv(out / f"residuals_{tag}.csv", ["iteration", "residual"],
               [[k + 1, bench.fmt(r)] for k, r in enumerate(res.residual_history)])


def _setup(args) -> tuple[RunConfig, object, object, Path]:
    rc = RunConfig.build(args.config, mode=args.mode, depth=args.depth, contrast=args.contrast,
                         resolution=args.resolution, tol=args.tol, max_iter=args.max_iter,
                         threads=args.threads, out=args.out)
    _set_threads(rc.threads)
    phases = rc.phase_map()
    try:
        C = assign_materials(phases, rc.materials())
    except KeyError as exc:
        raise ConfigError(f"config error: {exc.args[0]}") from None
    cfg = rc.solver_config(C)
    out = rc.output
    out.mkdir(parents=True, exist_ok=True)
    return rc, C, cfg, out


def cmd_solve(args) -> int:
    rc, C, cfg, out = _setup(args)
    d = C.cell.dim
    loads = rc.loads(d)
    records = []
    ok = True
    for j, eps_bar in enumerate(loads):
        res = solve(C, eps_bar, cfg)
        ok &= res.converged
        if rc.export_fields:
            _export_solution(out, f"load{j}", res, C.cell, d)
        records.append({
            "eps_bar": _floats(eps_bar), "iterations": res.iterations, "converged": res.converged,
            "final_residual": res.residual_history[-1] if res.residual_history else 0.0,
            "mean_stress": _floats(res.mean_stress), "wall_time": res.wall_time,
        })
        log.info("load %d: %d iterations, converged=%s", j, res.iterations, res.converged)
    _write_summary(out, {"command": "solve", "mode": cfg.mode, "depth": rc.depth if cfg.mode == NEURAL else None,
                         "resolution": list(C.cell.resolution), "contrast": C.contrast,
                         "alpha0": cfg.alpha0, "tolerance": cfg.tolerance, "criterion": cfg.criterion,
                         "converged": ok, "loads": records})
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_effective(args) -> int:
    rc, C, cfg, out = _setup(args)
    d = C.cell.dim
    names = list(COMPONENT_NAMES[d])
    h = effective_stiffness(C, rc.magnitude, cfg, keep_fields=rc.export_fields)
    if rc.export_fields:
        for j, res in enumerate(h.results):
            _export_solution(out, f"load{j}", res, C.cell, d)
    export_csv(out / "C_eff_mandel.csv", ["row"] + names, [[n] + [bench.fmt(x) for x in row] for n, row in zip(names, h.mandel)])
    export_csv(out / "C_eff_voigt.csv", ["row"] + names, [[n] + [bench.fmt(x) for x in row] for n, row in zip(names, h.voigt)])
    E, nu = isotropic_projection(h.mandel)
    export_csv(out / "engineering_constants.csv", ["E", "nu"], [[bench.fmt(E), bench.fmt(nu)]])
    export_csv(out / "iterations.csv", ["load", "iterations", "converged"],
               [[n, r.iterations, int(r.converged)] for n, r in zip(names, h.results)])
    _write_summary(out, {"command": "effective", "mode": cfg.mode, "depth": rc.depth if cfg.mode == NEURAL else None,
                         "resolution": list(C.cell.resolution), "contrast": C.contrast, "magnitude": rc.magnitude,
                         "alpha0": cfg.alpha0, "tolerance": cfg.tolerance, "criterion": cfg.criterion,
                         "converged": h.converged, "C_eff_mandel": _floats(h.mandel), "C_eff_voigt": _floats(h.voigt),
                         "E": E, "nu": nu, "iterations": h.iterations,
                         "wall_time": sum(r.wall_time for r in h.results)})
    return EXIT_OK if h.converged else EXIT_NOT_CONVERGED


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def cmd_bench_sphere(args) -> int:
    out = Path(args.out or "bench")
    out.mkdir(parents=True, exist_ok=True)
    _set_threads(args.threads)
    contrasts = args.contrasts or ([args.contrast] if args.contrast else [12, 24, 48, 96])
    depths = args.depths or ([args.depth] if args.depth else [7, 9, 11])
    resolutions = args.resolutions or [32, 64]
    # contrast and magnitude studies run on a single grid
    base = args.resolution or 32
    if max(resolutions + [base]) > 128 and not args.allow_large:
        print("resolutions above 128 need --allow-large", file=sys.stderr)
        return EXIT_CONFIG
    kw = {"tol": args.tol or 1e-5, "max_iter": args.max_iter or 100_000, "workers": args.threads}
    failures = []
    studies = args.study or ["contrast", "resolution", "magnitude", "maps"]
    if "contrast" in studies:
        mod, its = bench.contrast_study(contrasts, depths, resolution=base, **kw)
        bench.write_study(out, "moduli_vs_contrast", bench.MODULI_HEADER, mod, ["kappa", "model", "wall_time_s"])
        bench.write_study(out, "iterations_vs_contrast", bench.ITER_HEADER, its, ["kappa", "model", "wall_time_s"])
        failures += mod.failures
    if "resolution" in studies:
        st = bench.single_coefficient_study(24.0, depths, resolutions=resolutions, **kw)
        bench.write_study(out, "c11_vs_resolution", bench.COEFF_HEADER, st,
                          ["resolution", "magnitude", "model", "wall_time_s"])
        failures += st.failures
    if "magnitude" in studies:
        mags = args.magnitudes or [1e-3, 1e-2, 0.5, 1.0]
        st = bench.single_coefficient_study(12.0, depths, resolutions=(base,), magnitudes=mags, **kw)
        bench.write_study(out, "c11_vs_magnitude", bench.COEFF_HEADER, st,
                          ["resolution", "magnitude", "model", "wall_time_s"])
        failures += st.failures
    if "maps" in studies:
        for kappa in (contrasts[0], contrasts[-1]):
            bench.export_error_maps(out, kappa, depths, resolution=base, **kw)
    export_csv(out / "failures.csv", ["failure"], [[f] for f in failures])
    for f in failures:
        log.warning("%s", f)
    return EXIT_OK if not failures else EXIT_NOT_CONVERGED


def _load_summary(path: Path) -> dict:
    try:
        with open(path / "summary.json") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read result in {path}: {exc}") from None


def compare_results(a: Path, b: Path, out: Path | None = None) -> dict:
    """Errors of result ``a`` relative to reference ``b`` (both output directories)."""
    sa, sb = _load_summary(a), _load_summary(b)
    if sa.get("resolution") != sb.get("resolution"):
        raise ConfigError(f"grid mismatch: {sa.get('resolution')} vs {sb.get('resolution')}")
    report: dict = {"schema_version": SUMMARY_SCHEMA_VERSION, "a": str(a), "b": str(b)}
    if "C_eff_mandel" in sa and "C_eff_mandel" in sb:
        Ca, Cb = np.array(sa["C_eff_mandel"]), np.array(sb["C_eff_mandel"])
        report["coefficient_errors"] = {
            name: abs(Ca[i, j] - Cb[i, j]) / abs(Cb[i, j]) for name, (i, j) in
            (("C11", (0, 0)), ("C12", (1, 0)), ("C44", (3, 3))) if i < len(Cb) and Cb[i, j] != 0}
    fields = []
    for strain_a in sorted(a.glob("strain_load*.raw")):
        strain_b = b / strain_a.name
        if not strain_b.exists():
            continue
        fa, cell_a, names = load_field(strain_a)
        fb, cell_b, _ = load_field(strain_b)
        if cell_a != cell_b:
            raise ConfigError(f"grid mismatch in {strain_a.name}")
        tag = strain_a.stem.removeprefix("strain_")
        va = load_field(a / f"von_mises_{tag}.raw")[0][0]
        vb = load_field(b / f"von_mises_{tag}.raw")[0][0]
        diff = fa - fb
        ref_norm = np.sqrt(np.mean(np.sum(fb ** 2, axis=0)))
        fields.append({"load": tag,
                       "strain_l2_rel_error": float(np.sqrt(np.mean(np.sum(diff ** 2, axis=0))) / ref_norm),
                       "von_mises_max_abs_error": float(np.max(np.abs(va - vb)))})
        if out is not None:
            export_field(out / f"strain_diff_{tag}.raw", diff, cell_a, names)
    report["fields"] = fields
    return report


def cmd_compare(args) -> int:
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = compare_results(Path(args.result_a), Path(args.result_b), out)
    text = json.dumps(report, indent=1, sort_keys=True)
    if out is not None:
        (out / "compare.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    max_depth = args.depth or 12
    rows = []
    for m in range(1, max_depth + 1):
        sup, der = measure_fidelity(SquareNet(m))
        rows.append([m, bench.fmt(sup), bench.fmt(der), bench.fmt(max(sup, der))])
    header = ["depth", "sup_error", "deriv_error", "w1inf_error"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export_csv(out / "relu_fidelity.csv", header, rows)
    print(",".join(header))
    for r in rows:
        print(",".join(str(x) for x in r))
    if args.delta0 is not None:
        try:
            m = calibrate_depth(args.delta0, args.cutoff, args.dim)
        except ValueError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        print(f"calibrated depth for delta0={args.delta0}, M={args.cutoff}, d={args.dim}: {m}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=["exact_fft", "neural"])
    common.add_argument("--depth", type=int, help="ReLU network depth")
    common.add_argument("--contrast", type=float, help="inclusion/matrix Young's modulus ratio")
    common.add_argument("--resolution", type=int, help="voxels per axis")
    common.add_argument("--tol", type=float, help="convergence tolerance")
    common.add_argument("--max-iter", type=int, dest="max_iter")
    common.add_argument("--threads", type=int, help="worker threads for FFT and network kernels")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lsfno", description="FFT and explicit-FNO homogenization")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve cell problems for configured loads").set_defaults(func=cmd_solve)
    sub.add_parser("effective", parents=[common], help="effective stiffness from unit loads").set_defaults(func=cmd_effective)
    b = sub.add_parser("bench-sphere", parents=[common], help="single-sphere benchmark studies")
    b.add_argument("--contrasts", type=_csv_list(float))
    b.add_argument("--depths", type=_csv_list(int))
    b.add_argument("--resolutions", type=_csv_list(int))
    b.add_argument("--magnitudes", type=_csv_list(float))
    b.add_argument("--study", action="append", choices=["contrast", "resolution", "magnitude", "maps"])
    b.add_argument("--allow-large", action="store_true", help="permit resolutions above 128")
    b.set_defaults(func=cmd_bench_sphere)
    c = sub.add_parser("compare", parents=[common], help="compare two result directories")
    c.add_argument("result_a")
    c.add_argument("result_b", help="reference")
    c.set_defaults(func=cmd_compare)
    k = sub.add_parser("calibrate", parents=[common], help="ReLU square-network fidelity table")
    k.add_argument("--delta0", type=float)
    k.add_argument("--cutoff", type=float, default=1.0)
    k.add_argument("--dim", type=int, default=3, choices=[2, 3])
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MembershipError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
