"""Full-factorial sweep driver, record serialization, and evaluation metrics.

A sweep enumerates (objective, V_f, r_min) combinations, optimizes each from
a shared initial grid, and writes one dgrid + JSON sidecar per converged run
plus a JSON manifest. Record bytes are independent of worker count.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ShapeMismatchError
from .grids import DensityGrid, read_dgrid, relative_density, write_dgrid
from .topopt import Objective, OptimizationResult, TopOptConfig, optimize, result_sidecar

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DoeSpec:
    """Factorial grid over volume fraction and filter radius."""

    vf_min: float = 0.25
    vf_max: float = 0.45
    vf_step: float = 0.01
    rmin_min: float = 1.20
    rmin_max: float = 2.50
    rmin_step: float = 0.01
    objectives: tuple[Objective, ...] = (Objective.BULK, Objective.SHEAR)

    def vf_values(self) -> list[float]:
        return _inclusive_range(self.vf_min, self.vf_max, self.vf_step)

    def rmin_values(self) -> list[float]:
        return _inclusive_range(self.rmin_min, self.rmin_max, self.rmin_step)


def _inclusive_range(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if hi < lo:
        raise ValueError(f"range end {hi} below start {lo}")
    n = int(round((hi - lo) / step)) + 1
    vals = [round(lo + i * step, 10) for i in range(n)]
    if vals[-1] > hi + 1e-9:
        vals.pop()
    return vals


def enumerate_doe(spec: DoeSpec, template: TopOptConfig) -> dict[Objective, list[TopOptConfig]]:
    """Ordered configs per objective: V_f outer loop, r_min inner loop.

    Point 1 of each table is (vf_min, rmin_min); the r_min index moves fastest.
    """
    vfs = spec.vf_values()
    rmins = spec.rmin_values()
    if not vfs or not rmins:
        raise ValueError("empty DoE grid")
    out: dict[Objective, list[TopOptConfig]] = {}
    for obj in spec.objectives:
        out[Objective(obj)] = [
            replace(template, objective=Objective(obj), volume_fraction=vf, r_min=rm)
            for vf in vfs
            for rm in rmins
        ]
    return out


@dataclass
class DatasetRecord:
    objective_id: int
    vf: float
    rmin: float
    grid: DensityGrid | None
    objective_value: float | None
    converged: bool
    run_seconds: float = 0.0
    error: str | None = None


def record_stem(objective_id: int, vf: float, rmin: float) -> str:
    return f"rec_obj{objective_id}_vf{vf:.4f}_rmin{rmin:.4f}"


def _run_one(payload: tuple) -> dict:
    """Worker: run one optimization and write its files atomically."""
    config, grid_bytes, out_dir = payload
    out_dir = Path(out_dir)
    initial = _grid_from_bytes(grid_bytes)
    stem = record_stem(int(config.objective), config.volume_fraction, config.r_min)
    t0 = time.perf_counter()
    entry = {
        "objective_id": int(config.objective),
        "vf": config.volume_fraction,
        "rmin": config.r_min,
    }
    try:
        result = optimize(config, initial)
    except Exception as exc:  # a failing run never aborts the sweep
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}", converged=False)
        return entry
    entry.update(
        status="ok",
        converged=result.converged,
        objective_value=result.objective_value,
        achieved_volume=result.achieved_volume,
        iterations=result.iterations_used,
    )
    sidecar = result_sidecar(result, config)
    _atomic_write_text(out_dir / f"{stem}.json", json.dumps(sidecar, sort_keys=True, separators=(",", ":")) + "\n")
    if result.converged:
        tmp = out_dir / f"{stem}.dgrid.tmp"
        write_dgrid(result.final_grid, tmp)
        tmp.rename(out_dir / f"{stem}.dgrid")
        entry["file"] = f"{stem}.dgrid"
    entry["sidecar"] = f"{stem}.json"
    entry["run_seconds"] = time.perf_counter() - t0
    return entry


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.rename(path)


def _grid_to_bytes(grid: DensityGrid) -> bytes:
    import io

    from . import grids as g

    buf = io.BytesIO()
    # reuse the dgrid writer through a temp path-free round trip
    ex, ey, ez = grid.resolution
    lx, ly, lz = grid.cell_lengths
    buf.write(g._HEADER.pack(g.DGRID_MAGIC, g.DGRID_VERSION, ex, ey, ez, lx, ly, lz))
    buf.write(grid.densities.astype("<f4").tobytes())
    return buf.getvalue()


def _grid_from_bytes(data: bytes) -> DensityGrid:
    from . import grids as g

    head = g._HEADER.unpack(data[: g._HEADER.size])
    _, _, ex, ey, ez, lx, ly, lz = head
    dens = np.frombuffer(data[g._HEADER.size :], dtype="<f4").astype(np.float64)
    return DensityGrid((ex, ey, ez), dens, (lx, ly, lz))


def run_dataset(
    configs: list[TopOptConfig],
    initial_grid: DensityGrid,
    out_dir,
    parallelism: int = 1,
    resume: bool = True,
) -> dict:
    """Execute a sweep; returns the manifest dict (also written to disk).

    Entries keep enumeration order regardless of worker scheduling. Existing
    valid records are skipped when resume is on.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        if tuple(cfg.resolution) != tuple(initial_grid.resolution):
            raise ValueError("all configs must share the initial grid resolution")
    grid_bytes = _grid_to_bytes(initial_grid)

    entries: list[dict | None] = [None] * len(configs)
    todo = []
    for idx, cfg in enumerate(configs):
        existing = _load_existing(out_dir, cfg) if resume else None
        if existing is not None:
            entries[idx] = existing
        else:
            todo.append(idx)
    if todo:
        payloads = [(configs[i], grid_bytes, str(out_dir)) for i in todo]
        if parallelism <= 1:
            results = [_run_one(p) for p in payloads]
        else:
            with ProcessPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(_run_one, payloads))
        for idx, entry in zip(todo, results):
            entries[idx] = entry

    manifest = _build_manifest(configs, entries, initial_grid.resolution)
    _atomic_write_text(out_dir / "manifest.json", _manifest_text(manifest))
    return manifest


def _load_existing(out_dir: Path, cfg: TopOptConfig) -> dict | None:
    stem = record_stem(int(cfg.objective), cfg.volume_fraction, cfg.r_min)
    sidecar_path = out_dir / f"{stem}.json"
    if not sidecar_path.exists():
        return None
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError:
        return None
    entry = {
        "objective_id": int(cfg.objective),
        "vf": cfg.volume_fraction,
        "rmin": cfg.r_min,
        "status": "ok",
        "converged": bool(sidecar["converged"]),
        "objective_value": sidecar["objective_value"],
        "achieved_volume": sidecar["achieved_volume"],
        "iterations": sidecar["iterations"],
        "sidecar": f"{stem}.json",
    }
    if sidecar["converged"]:
        grid_path = out_dir / f"{stem}.dgrid"
        if not grid_path.exists():
            return None
        entry["file"] = f"{stem}.dgrid"
    return entry


def _build_manifest(configs, entries, resolution) -> dict:
    per_objective: dict[str, int] = {}
    converged = discarded = errored = 0
    records = []
    for cfg, entry in zip(configs, entries):
        rec = dict(entry)
        rec.pop("run_seconds", None)  # wall time must not affect manifest bytes
        records.append(rec)
        key = str(int(cfg.objective))
        per_objective[key] = per_objective.get(key, 0) + 1
        if rec.get("status") == "error":
            errored += 1
        elif rec.get("converged"):
            converged += 1
        else:
            discarded += 1
    return {
        "format_version": MANIFEST_VERSION,
        "resolution": list(resolution),
        "records_per_objective": per_objective,
        "converged": converged,
        "discarded": discarded,
        "errors": errored,
        "records": records,
    }


def _manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n"


def split_dataset(manifest: dict, fractions=(0.9, 0.05, 0.05), seed: int = 0) -> dict:
    """Assign train/val/test labels over all converged records, shuffled by seed."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    manifest = json.loads(json.dumps(manifest))  # deep copy
    idx = [i for i, r in enumerate(manifest["records"]) if r.get("converged")]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(idx))
    n = len(idx)
    n_train = int(round(fractions[0] * n))
    n_val = int(round((fractions[0] + fractions[1]) * n)) - n_train
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    for pos, lab in zip(order, labels):
        manifest["records"][idx[pos]]["split"] = lab
    manifest["split"] = {"fractions": list(fractions), "seed": seed}
    return manifest


def _check_pairs(pred: list[DensityGrid], truth: list[DensityGrid]) -> None:
    if len(pred) != len(truth):
        raise ShapeMismatchError(f"{len(pred)} predictions vs {len(truth)} truths")
    if not pred:
        raise ShapeMismatchError("empty grid lists")
    for p, t in zip(pred, truth):
        if tuple(p.resolution) != tuple(t.resolution):
            raise ShapeMismatchError(f"resolution mismatch {p.resolution} vs {t.resolution}")


def mse(pred: list[DensityGrid], truth: list[DensityGrid]) -> float:
    """Mean squared voxel error over all datapoints and voxels."""
    _check_pairs(pred, truth)
    total = 0.0
    for p, t in zip(pred, truth):
        total += float(((p.densities - t.densities) ** 2).mean())
    return total / len(pred)


def dice(pred: list[DensityGrid], truth: list[DensityGrid], threshold: float = 0.5) -> float:
    """Mean Dice coefficient of the solid sets binarized at the threshold.

    Empty-vs-empty counts as a perfect match.
    """
    _check_pairs(pred, truth)
    total = 0.0
    for p, t in zip(pred, truth):
        a = p.densities >= threshold
        b = t.densities >= threshold
        denom = int(a.sum()) + int(b.sum())
        total += 1.0 if denom == 0 else 2.0 * int((a & b).sum()) / denom
    return total / len(pred)


def volume_deviation(pred: list[DensityGrid], truth: list[DensityGrid]) -> tuple[float, float, int]:
    """Absolute volume error per record in percent: (mean, max, argmax index)."""
    _check_pairs(pred, truth)
    devs = [abs(relative_density(p) - relative_density(t)) * 100.0 for p, t in zip(pred, truth)]
    arg = int(np.argmax(devs))
    return float(np.mean(devs)), float(devs[arg]), arg


@dataclass
class EvalReport:
    mse: float
    dsc: float
    volume_deviation_mean: float
    volume_deviation_max: float

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "dsc": self.dsc,
            "volume_deviation_mean_pct": self.volume_deviation_mean,
            "volume_deviation_max_pct": self.volume_deviation_max,
        }


def evaluate(pred: list[DensityGrid], truth: list[DensityGrid], threshold: float = 0.5) -> EvalReport:
    vd_mean, vd_max, _ = volume_deviation(pred, truth)
    return EvalReport(mse(pred, truth), dice(pred, truth, threshold), vd_mean, vd_max)


def convergence_study(kind: str, levels: list[int], solver: str = "auto") -> list[dict]:
    """Density or stiffness convergence tables for the unoptimized shape.

    kind "isosurface-mesh": relative density of the 32^3 voxelization vs
    sampling resolution. kind "voxel-resolution": homogenized objectives of
    the binary shape vs voxel count per axis.
    """
    from . import tpms
    from .homogenize import Homogenizer, bulk_objective, shear_objective

    if not levels:
        raise ValueError("levels must be nonempty")
    rows = []
    if kind == "isosurface-mesh":
        for mp in levels:
            grid = tpms.voxelized_gyroid(mesh_points=int(mp))
            rows.append({"mesh_points": int(mp), "relative_density": relative_density(grid)})
    elif kind == "voxel-resolution":
        for res in levels:
            grid = tpms.voxelized_gyroid(resolution=(int(res),) * 3)
            hom = Homogenizer(grid.resolution, grid.cell_lengths, solver=solver)
            tensor = hom.homogenize(np.maximum(grid.densities, 1e-6)).tensor
            rows.append(
                {
                    "resolution": int(res),
                    "relative_density": relative_density(grid),
                    "bulk_objective": bulk_objective(tensor),
                    "shear_objective": shear_objective(tensor),
                }
            )
    else:
        raise ValueError(f"unknown study kind {kind!r}")
    return rows


def study_csv(rows: list[dict]) -> str:
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def load_records(dir_path) -> tuple[dict, list[dict]]:
    """Read a sweep directory: manifest plus records with loaded grids."""
    dir_path = Path(dir_path)
    manifest = json.loads((dir_path / "manifest.json").read_text())
    loaded = []
    for rec in manifest["records"]:
        entry = dict(rec)
        if rec.get("file"):
            entry["grid"] = read_dgrid(dir_path / rec["file"])
        loaded.append(entry)
    return manifest, loaded
