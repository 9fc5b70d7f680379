"""Command-line interface: voxelize, optimize, sweep, evaluate, study, export, serve.

Numeric results go to stdout as key=value lines (or the requested file
format); progress and prose go to stderr. Exit codes: 0 success (including
non-converged optimizations), 2 bad flags/arguments, 3 I/O failure, 4
solver/optimizer failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# honor the thread override before numpy initializes its thread pools
_threads = os.environ.get("GYROX_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

import numpy as np

from . import dataset as ds
from . import grids, homogenize, topopt, tpms
from .errors import (
    BisectionFailedError,
    FormatError,
    GyroxError,
    NoSurfaceError,
    ShapeMismatchError,
    SolverDivergedError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SOLVER = 4


def _parse_triple(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        v = int(parts[0])
        return (v, v, v)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected N or N,N,N, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected a:b:s, got {text!r}")
    a, b, s = (float(p) for p in parts)
    if s <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    return a, b, s


def _parse_objectives(text: str) -> tuple[topopt.Objective, ...]:
    names = {"bulk": topopt.Objective.BULK, "shear": topopt.Objective.SHEAR}
    out = []
    for token in text.split(","):
        token = token.strip().lower()
        if token not in names:
            raise argparse.ArgumentTypeError(f"unknown objective {token!r}")
        out.append(names[token])
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gyrox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="generate and voxelize the gyroid surface")
    p.add_argument("--c", type=float, default=0.0, help="level-set constant")
    p.add_argument("--cell-length", type=float, default=1.0, help="cell edge length (cm)")
    p.add_argument("--mesh-points", type=int, default=tpms.DEFAULT_MESH_POINTS)
    p.add_argument("--resolution", type=_parse_triple, default=(32, 32, 32))
    p.add_argument("--radius", type=float, default=tpms.DEFAULT_EDGE_RADIUS,
                   help="edge tube radius (cm); 0 = exact box contact")
    p.add_argument("--out", required=True)

    p = sub.add_parser("optimize", help="run one topology optimization")
    p.add_argument("--objective", choices=["bulk", "shear"], required=True)
    p.add_argument("--vf", type=float, required=True, help="target volume fraction")
    p.add_argument("--rmin", type=float, required=True, help="filter radius (elements)")
    p.add_argument("--init", default="gyroid", help="dgrid path or 'gyroid'")
    p.add_argument("--resolution", type=_parse_triple, default=(32, 32, 32),
                   help="voxel resolution when --init gyroid")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--out", required=True, help="output path stem (.dgrid/.json)")

    p = sub.add_parser("sweep", help="factorial sweep over vf and rmin")
    p.add_argument("--vf-range", type=_parse_range, default=(0.25, 0.45, 0.01))
    p.add_argument("--rmin-range", type=_parse_range, default=(1.20, 2.50, 0.01))
    p.add_argument("--objectives", type=_parse_objectives, default=(topopt.Objective.BULK, topopt.Objective.SHEAR))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--resolution", type=_parse_triple, default=(32, 32, 32))
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--split", type=str, default="0.9,0.05,0.05")
    p.add_argument("--volume-step", type=float, default=topopt.VOLUME_STEP,
                   help="max per-iteration move of the volume target")

    p = sub.add_parser("evaluate", help="metrics between two record directories")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--truth-dir", required=True)

    p = sub.add_parser("study", help="convergence studies")
    p.add_argument("--kind", choices=["mesh", "voxel"], required=True)
    p.add_argument("--levels", required=True, help="comma-separated levels")
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")

    p = sub.add_parser("export", help="convert a dgrid file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["vtk"], default="vtk")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _emit(line: str) -> None:
    print(line)


def _initial_grid(args) -> grids.DensityGrid:
    if args.init == "gyroid":
        return tpms.voxelized_gyroid(resolution=tuple(args.resolution))
    return grids.read_dgrid(args.init)


def cmd_voxelize(args) -> int:
    spec = tpms.TpmsSpec(args.c, (args.cell_length,) * 3, args.mesh_points)
    field = tpms.sample_level_set(spec)
    mesh = tpms.extract_isosurface(field)
    grid = tpms.voxelize_surface(mesh, tuple(args.resolution), args.radius)
    grids.write_dgrid(grid, args.out)
    _emit(f"relative_density={grids.relative_density(grid):.6f}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    if not (0.0 < args.vf < 1.0):
        raise UsageError(f"--vf must be in (0,1), got {args.vf}")
    initial = _initial_grid(args)
    config = topopt.TopOptConfig(
        objective=topopt.Objective.BULK if args.objective == "bulk" else topopt.Objective.SHEAR,
        volume_fraction=args.vf,
        r_min=args.rmin,
        max_iterations=args.max_iter,
        resolution=tuple(initial.resolution),
    )
    result = topopt.optimize(config, initial)
    stem = args.out[:-6] if args.out.endswith(".dgrid") else args.out
    topopt.save_result(result, config, stem + ".dgrid", stem + ".json")
    _emit(
        f"objective={result.objective_value:.6f} volume={result.achieved_volume:.6f} "
        f"converged={'true' if result.converged else 'false'} iters={result.iterations_used}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = ds.DoeSpec(
        vf_min=args.vf_range[0], vf_max=args.vf_range[1], vf_step=args.vf_range[2],
        rmin_min=args.rmin_range[0], rmin_max=args.rmin_range[1], rmin_step=args.rmin_range[2],
        objectives=tuple(args.objectives),
    )
    fractions = tuple(float(t) for t in args.split.split(","))
    template = topopt.TopOptConfig(
        resolution=tuple(args.resolution),
        max_iterations=args.max_iter,
        volume_step=args.volume_step,
    )
    per_objective = ds.enumerate_doe(spec, template)
    configs = [cfg for obj in spec.objectives for cfg in per_objective[obj]]
    print(f"sweep: {len(configs)} runs on {args.jobs} workers", file=sys.stderr)
    initial = tpms.voxelized_gyroid(resolution=tuple(args.resolution))
    manifest = ds.run_dataset(configs, initial, args.out_dir, parallelism=args.jobs, resume=args.resume)
    manifest = ds.split_dataset(manifest, fractions, args.seed)
    # final manifest includes the split labels
    ds._atomic_write_text(Path(args.out_dir) / "manifest.json", ds._manifest_text(manifest))
    _emit(f"records={len(manifest['records'])} converged={manifest['converged']} discarded={manifest['discarded']}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, pred = ds.load_records(args.pred_dir)
    _, truth = ds.load_records(args.truth_dir)
    pred_map = {r["sidecar"]: r for r in pred if "grid" in r}
    truth_map = {r["sidecar"]: r for r in truth if "grid" in r}
    if set(pred_map) != set(truth_map):
        raise ShapeMismatchError(
            f"record sets differ: {sorted(set(pred_map) ^ set(truth_map))[:4]} ..."
        )
    keys = sorted(pred_map)
    report = ds.evaluate([pred_map[k]["grid"] for k in keys], [truth_map[k]["grid"] for k in keys])
    _emit(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_study(args) -> int:
    kind = {"mesh": "isosurface-mesh", "voxel": "voxel-resolution"}[args.kind]
    levels = [int(t) for t in args.levels.split(",")]
    csv_text = ds.study_csv(ds.convergence_study(kind, levels))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_export(args) -> int:
    grid = grids.read_dgrid(args.input)
    if args.format == "vtk":
        grids.write_vtk(grid, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


class UsageError(GyroxError):
    pass


_HANDLERS = {
    "voxelize": cmd_voxelize,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "study": cmd_study,
    "export": cmd_export,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (UsageError, ValueError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoSurfaceError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverDivergedError, BisectionFailedError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, FormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
