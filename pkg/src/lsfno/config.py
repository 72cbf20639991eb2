"""Run configuration: JSON file plus command-line overrides, validated by schema."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .microstructure import MaterialTable, PhaseMap, gen_sphere, load_phase_map, sphere_materials
from .grid import Cell
from .relu import ContractionNet
from .solver import NEURAL, SolverConfig, StiffnessField
from .tensors import COMPONENT_NAMES, IsotropicMaterial, mandel_size

DEFAULT_SPHERE = {"cell_edge": 32.0, "radius": 10.0, "resolution": 32}
DEFAULT_MAGNITUDE = 1e-3
DEFAULT_DEPTH = 11


class ConfigError(ValueError):
    pass


def schema() -> dict:
    with resources.files("lsfno").joinpath("run_config.schema.json").open() as fh:
        return json.load(fh)


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    if "materials" in raw and "contrast" in raw:
        raise ConfigError("config error: give either 'materials' or 'contrast', not both")


def load_raw(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config error: top level must be an object")
    return raw


def apply_overrides(raw: dict, mode=None, depth=None, contrast=None, resolution=None,
                    tol=None, max_iter=None, threads=None, out=None) -> dict:
    raw = copy.deepcopy(raw)
    solver = raw.setdefault("solver", {})
    for key, value in (("mode", mode), ("depth", depth), ("tolerance", tol), ("max_iterations", max_iter)):
        if value is not None:
            solver[key] = value
    if contrast is not None:
        raw.pop("materials", None)
        raw["contrast"] = contrast
    if resolution is not None:
        micro = raw.setdefault("microstructure", {"sphere": dict(DEFAULT_SPHERE)})
        kind = next(iter(micro), None)
        if kind == "file":
            raise ConfigError("config error: --resolution cannot rescale an imported phase map")
        micro[kind]["resolution"] = resolution
    if threads is not None:
        raw["threads"] = threads
    if out is not None:
        raw["output"] = str(out)
    return raw


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def build(cls, path=None, **overrides) -> "RunConfig":
        raw = apply_overrides(load_raw(path), **overrides)
        validate(raw)
        base = Path(path).resolve().parent if path is not None else Path.cwd()
        return cls(raw, base)

    @property
    def solver_section(self) -> dict:
        return self.raw.get("solver", {})

    @property
    def mode(self) -> str:
        return self.solver_section.get("mode", "exact_fft")

    @property
    def depth(self) -> int:
        return self.solver_section.get("depth", DEFAULT_DEPTH)

    @property
    def threads(self) -> int | None:
        return self.raw.get("threads")

    @property
    def output(self) -> Path:
        return Path(self.raw.get("output", "out"))

    @property
    def magnitude(self) -> float:
        return self.raw.get("magnitude", DEFAULT_MAGNITUDE)

    @property
    def export_fields(self) -> bool:
        return self.raw.get("export_fields", True)

    def phase_map(self) -> PhaseMap:
        micro = self.raw.get("microstructure", {"sphere": DEFAULT_SPHERE})
        kind, params = next(iter(micro.items()))
        if kind == "sphere":
            p = {**DEFAULT_SPHERE, **params}
            return gen_sphere(p["cell_edge"], p["radius"], p["resolution"])
        if kind == "homogeneous":
            d = params.get("dim", 3)
            cell = Cell.cube(params.get("cell_edge", 1.0), params["resolution"], d)
            return PhaseMap(cell, np.zeros(cell.resolution, dtype=np.uint8))
        path = Path(params)
        if not path.is_absolute():
            path = self.base_dir / path
        try:
            return load_phase_map(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"config error: cannot load phase map {path}: {exc}") from None

    def materials(self) -> MaterialTable:
        if "materials" not in self.raw:
            return sphere_materials(self.raw.get("contrast", 12.0))
        entries = []
        for m in self.raw["materials"]:
            try:
                mat = IsotropicMaterial(m["E"], m["nu"]) if "E" in m else np.asarray(m["mandel"], dtype=float)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"config error: material {m['label']}: {exc}") from None
            entries.append((m["label"], mat))
        try:
            return MaterialTable(entries)
        except ValueError as exc:
            raise ConfigError(f"config error: {exc}") from None

    def solver_config(self, C: StiffnessField, mode: str | None = None, depth: int | None = None) -> SolverConfig:
        s = self.solver_section
        mode = mode or self.mode
        net = None
        if mode == NEURAL:
            net = ContractionNet.of_depth(depth or self.depth, s.get("cutoff", 1.0), C.cell.dim)
        lo, hi = C.bounds()
        try:
            return SolverConfig(
                lo, hi, alpha0=s.get("alpha0"), tolerance=s.get("tolerance", 1e-5),
                max_iterations=s.get("max_iterations", 100_000), mode=mode, neural=net,
                layer_count=s.get("layer_count"), discretization=s.get("discretization", "rotated_staggered"),
                workers=self.threads, criterion=s.get("criterion", "equilibrium"),
            )
        except ValueError as exc:
            raise ConfigError(f"config error: {exc}") from None

    def loads(self, d: int) -> list[np.ndarray]:
        """Macroscopic strains; the default is a uniaxial load in the 11 direction."""
        K = mandel_size(d)
        spec = self.raw.get("loads", [{"component": "11"}])
        out = []
        for item in spec:
            if "strain" in item:
                if len(item["strain"]) != K:
                    raise ConfigError(f"config error: load strain needs {K} Mandel components")
                out.append(np.asarray(item["strain"], dtype=float))
                continue
            names = COMPONENT_NAMES[d]
            if item["component"] not in names:
                raise ConfigError(f"config error: component {item['component']} undefined in {d}D")
            e = np.zeros(K)
            e[names.index(item["component"])] = item.get("magnitude", self.magnitude)
            out.append(e)
        return out
