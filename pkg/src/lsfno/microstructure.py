"""Phase maps, material tables and raw field files.

A phase map is stored as raw unsigned bytes (last axis fastest) next to a JSON
sidecar ``<file>.json`` holding ``dims``, ``lengths_um`` and ``labels``. Field
files are raw little-endian float64, component-major, with the same sidecar
plus ``components``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Cell
from .solver import StiffnessField
from .tensors import IsotropicMaterial, isotropic_stiffness, mandel_size

MATRIX_LABEL = 0
INCLUSION_LABEL = 1


@dataclass(frozen=True)
class PhaseMap:
    cell: Cell
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.cell.resolution:
            raise ValueError(f"labels shape {labels.shape} does not match grid {self.cell.resolution}")
        if labels.size and (labels.min() < 0 or labels.max() > 255):
            raise ValueError("phase labels must fit into 8 bits")
        object.__setattr__(self, "labels", labels.astype(np.uint8, copy=False))

    def volume_fraction(self, label: int) -> float:
        return float(np.mean(self.labels == label))

    def tiled(self, reps: int = 2) -> "PhaseMap":
        return PhaseMap(self.cell.tiled(reps), np.tile(self.labels, (reps,) * self.cell.dim))


class MaterialTable:
    """Mapping from phase label to an isotropic material or a raw Mandel matrix."""

    def __init__(self, entries):
        items = list(entries.items()) if isinstance(entries, dict) else list(entries)
        labels = [int(label) for label, _ in items]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in material table: {labels}")
        self.entries = {int(label): mat for label, mat in items}

    def __contains__(self, label) -> bool:
        return int(label) in self.entries

    def labels(self) -> list[int]:
        return sorted(self.entries)

    def stiffness(self, label: int, d: int = 3) -> np.ndarray:
        mat = self.entries[int(label)]
        if isinstance(mat, IsotropicMaterial):
            return isotropic_stiffness(mat, d)
        C = np.asarray(mat, dtype=float)
        K = mandel_size(d)
        if C.shape != (K, K):
            raise ValueError(f"material {label}: expected a {K}x{K} Mandel matrix, got {C.shape}")
        return C


def sphere_materials(kappa: float, matrix=IsotropicMaterial(3.0, 0.3), inclusion_nu: float = 0.22) -> MaterialTable:
    """Matrix with Young's modulus ``E`` and an inclusion with ``kappa * E``."""
    return MaterialTable({
        MATRIX_LABEL: matrix,
        INCLUSION_LABEL: IsotropicMaterial(kappa * matrix.young_modulus, inclusion_nu),
    })


def gen_sphere(cell_edge: float, radius: float, resolution: int, dim: int = 3) -> PhaseMap:
    """Ball of ``radius`` around the cell center; a voxel belongs to it if its center does."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    cell = Cell.cube(cell_edge, resolution, dim)
    h = cell_edge / resolution
    c = (np.arange(resolution) + 0.5) * h - 0.5 * cell_edge
    coords = np.meshgrid(*([c] * dim), indexing="ij", sparse=True)
    r2 = sum(x * x for x in coords)
    labels = np.where(r2 <= radius * radius, INCLUSION_LABEL, MATRIX_LABEL) if radius > 0 \
        else np.full(cell.resolution, MATRIX_LABEL)
    return PhaseMap(cell, labels)


def assign_materials(phases: PhaseMap, table: MaterialTable) -> StiffnessField:
    present = [int(x) for x in np.unique(phases.labels)]
    missing = [label for label in present if label not in table]
    if missing:
        raise KeyError(f"phase label(s) {missing} missing from the material table")
    index = np.zeros(256, dtype=np.int64)
    for i, label in enumerate(present):
        index[label] = i
    tables = np.array([table.stiffness(label, phases.cell.dim) for label in present])
    return StiffnessField(phases.cell, index[phases.labels], tables)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _write_sidecar(path, header: dict):
    with open(sidecar_path(path), "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)


def _read_sidecar(path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        raise FileNotFoundError(f"missing sidecar header {side}")
    with open(side) as fh:
        return json.load(fh)


def save_phase_map(phases: PhaseMap, path) -> None:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(phases.labels, dtype=np.uint8).tobytes())
    _write_sidecar(path, {
        "dims": list(phases.cell.resolution),
        "lengths_um": list(phases.cell.lengths),
        "labels": [int(x) for x in np.unique(phases.labels)],
    })


def load_phase_map(path) -> PhaseMap:
    path = Path(path)
    header = _read_sidecar(path)
    dims = tuple(int(n) for n in header["dims"])
    payload = path.read_bytes()
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise ValueError(f"{path}: header dims {dims} need {expected} bytes, file has {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()
    return PhaseMap(Cell(tuple(header["lengths_um"]), dims), labels)


def export_field(path, field: np.ndarray, cell: Cell, components) -> None:
    field = np.asarray(field, dtype=float)
    components = [str(c) for c in components]
    if field.shape != (len(components),) + cell.resolution:
        raise ValueError(f"field shape {field.shape} does not match {len(components)} components on {cell.resolution}")
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(field, dtype="<f8").tobytes())
    _write_sidecar(path, {
        "dims": list(cell.resolution),
        "lengths_um": list(cell.lengths),
        "components": components,
        "dtype": "<f8",
    })


def load_field(path) -> tuple[np.ndarray, Cell, list[str]]:
    path = Path(path)
    header = _read_sidecar(path)
    dims = tuple(int(n) for n in header["dims"])
    components = list(header["components"])
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    if data.size != len(components) * int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match header")
    return data.reshape((len(components),) + dims).astype(float), Cell(tuple(header["lengths_um"]), dims), components


def export_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
