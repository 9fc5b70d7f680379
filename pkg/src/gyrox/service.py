"""FastAPI service wrapping the core engine.

Quick computations (voxelize, homogenize, metrics, DoE, studies) answer
inline; optimizations run as background jobs polled by id.
"""
from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

from . import dataset as ds
from . import schemas as sm
from . import topopt, tpms
from .errors import GyroxError, NoSurfaceError, ShapeMismatchError
from .grids import relative_density
from .homogenize import Homogenizer, MaterialModel, bulk_objective, shear_objective

app = FastAPI(title="gyrox", description="Gyroid unit-cell topology optimization service")

_jobs: dict[str, sm.JobStatus] = {}
_jobs_lock = threading.Lock()


def _material(spec: sm.MaterialSpec) -> MaterialModel:
    return MaterialModel(spec.e0, spec.e_min, spec.nu, spec.penal)


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/voxelize", response_model=sm.VoxelizeResponse)
def voxelize(req: sm.VoxelizeRequest) -> sm.VoxelizeResponse:
    try:
        spec = tpms.TpmsSpec(req.c, (req.cell_length,) * 3, req.mesh_points)
        field = tpms.sample_level_set(spec)
        mesh = tpms.extract_isosurface(field)
        grid = tpms.voxelize_surface(mesh, tuple(req.resolution), req.radius)
    except NoSurfaceError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return sm.VoxelizeResponse(
        relative_density=relative_density(grid), grid=sm.GridPayload.from_grid(grid)
    )


@app.post("/homogenize", response_model=sm.HomogenizeResponse)
def homogenize_grid(req: sm.HomogenizeRequest) -> sm.HomogenizeResponse:
    try:
        grid = req.grid.to_grid()
        hom = Homogenizer(grid.resolution, grid.cell_lengths, _material(req.material))
        result = hom.homogenize(grid.densities)
    except (ValueError, GyroxError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    t = result.tensor
    return sm.HomogenizeResponse(
        tensor=sm.TensorPayload(
            voigt_order="11,22,33,12,23,31",
            entries=[[float(v) for v in row] for row in t.entries],
        ),
        bulk_objective=bulk_objective(t),
        shear_objective=shear_objective(t),
    )


def _run_job(job_id: str, config: topopt.TopOptConfig, initial) -> None:
    try:
        result = topopt.optimize(config, initial)
        status = sm.JobStatus(
            job_id=job_id,
            status="done",
            result=sm.OptimizeResult(
                objective_value=result.objective_value,
                achieved_volume=result.achieved_volume,
                converged=result.converged,
                iterations=result.iterations_used,
                grid=sm.GridPayload.from_grid(result.final_grid),
            ),
        )
    except Exception as exc:  # surfaced through the job status
        status = sm.JobStatus(job_id=job_id, status="failed", error=f"{type(exc).__name__}: {exc}")
    with _jobs_lock:
        _jobs[job_id] = status


@app.post("/optimize", response_model=sm.JobSubmitted, status_code=202)
def submit_optimize(req: sm.OptimizeRequest) -> sm.JobSubmitted:
    try:
        initial = (
            req.initial_grid.to_grid()
            if req.initial_grid is not None
            else tpms.voxelized_gyroid(resolution=tuple(req.resolution))
        )
        extra = {} if req.volume_step is None else {"volume_step": req.volume_step}
        config = topopt.TopOptConfig(
            objective=topopt.Objective.BULK if req.objective == "bulk" else topopt.Objective.SHEAR,
            volume_fraction=req.volume_fraction,
            r_min=req.r_min,
            material=_material(req.material),
            max_iterations=req.max_iterations,
            resolution=tuple(initial.resolution),
            **extra,
        )
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    job_id = uuid.uuid4().hex
    with _jobs_lock:
        _jobs[job_id] = sm.JobStatus(job_id=job_id, status="running")
    thread = threading.Thread(target=_run_job, args=(job_id, config, initial), daemon=True)
    thread.start()
    return sm.JobSubmitted(job_id=job_id)


@app.get("/jobs/{job_id}", response_model=sm.JobStatus)
def job_status(job_id: str) -> sm.JobStatus:
    with _jobs_lock:
        status = _jobs.get(job_id)
    if status is None:
        raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
    return status


@app.post("/evaluate", response_model=sm.EvaluateResponse)
def evaluate_pairs(req: sm.EvaluateRequest) -> sm.EvaluateResponse:
    try:
        pred = [p.pred.to_grid() for p in req.pairs]
        truth = [p.truth.to_grid() for p in req.pairs]
        report = ds.evaluate(pred, truth, req.threshold)
    except (ShapeMismatchError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return sm.EvaluateResponse(**report.to_dict())


@app.post("/doe", response_model=sm.DoeResponse)
def doe(req: sm.DoeRequest) -> sm.DoeResponse:
    names = {"bulk": topopt.Objective.BULK, "shear": topopt.Objective.SHEAR}
    try:
        objectives = tuple(names[o] for o in req.objectives)
    except KeyError as exc:
        raise HTTPException(status_code=400, detail=f"unknown objective {exc}")
    spec = ds.DoeSpec(
        req.vf_min, req.vf_max, req.vf_step, req.rmin_min, req.rmin_max, req.rmin_step, objectives
    )
    per_obj = ds.enumerate_doe(spec, topopt.TopOptConfig())
    points = []
    count = 0
    for obj in objectives:
        for i, cfg in enumerate(per_obj[obj], start=1):
            points.append(
                sm.DoePoint(index=i, objective_id=int(obj), vf=cfg.volume_fraction, rmin=cfg.r_min)
            )
        count = len(per_obj[obj])
    return sm.DoeResponse(count_per_objective=count, points=points)


@app.post("/study", response_model=sm.StudyResponse)
def study(req: sm.StudyRequest) -> sm.StudyResponse:
    try:
        rows = ds.convergence_study(req.kind, req.levels)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return sm.StudyResponse(csv=ds.study_csv(rows))
