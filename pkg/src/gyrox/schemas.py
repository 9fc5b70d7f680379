"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, Field

from .grids import DensityGrid


class GridPayload(BaseModel):
    """Density grid on the wire: f32 little-endian voxel data, x fastest."""

    resolution: tuple[int, int, int]
    cell_lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)
    data_b64: str

    @classmethod
    def from_grid(cls, grid: DensityGrid) -> "GridPayload":
        return cls(
            resolution=grid.resolution,
            cell_lengths=grid.cell_lengths,
            data_b64=base64.b64encode(grid.densities.astype("<f4").tobytes()).decode("ascii"),
        )

    def to_grid(self) -> DensityGrid:
        raw = base64.b64decode(self.data_b64)
        dens = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        return DensityGrid(tuple(self.resolution), dens, tuple(self.cell_lengths))


class VoxelizeRequest(BaseModel):
    c: float = 0.0
    cell_length: float = 1.0
    mesh_points: int = 15
    resolution: tuple[int, int, int] = (32, 32, 32)
    radius: float = 0.1


class VoxelizeResponse(BaseModel):
    relative_density: float
    grid: GridPayload


class MaterialSpec(BaseModel):
    e0: float = 1.0
    e_min: float = 1e-9
    nu: float = 0.3
    penal: float = 5.0


class HomogenizeRequest(BaseModel):
    grid: GridPayload
    material: MaterialSpec = MaterialSpec()


class TensorPayload(BaseModel):
    voigt_order: str
    entries: list[list[float]]
    units: str = "GPa"


class HomogenizeResponse(BaseModel):
    tensor: TensorPayload
    bulk_objective: float
    shear_objective: float


class OptimizeRequest(BaseModel):
    objective: str = Field(pattern="^(bulk|shear)$")
    volume_fraction: float
    r_min: float
    resolution: tuple[int, int, int] = (32, 32, 32)
    max_iterations: int = 1000
    material: MaterialSpec = MaterialSpec()
    initial_grid: GridPayload | None = None
    volume_step: float | None = None


class JobSubmitted(BaseModel):
    job_id: str


class OptimizeResult(BaseModel):
    objective_value: float
    achieved_volume: float
    converged: bool
    iterations: int
    grid: GridPayload


class JobStatus(BaseModel):
    job_id: str
    status: str  # queued | running | done | failed
    error: str | None = None
    result: OptimizeResult | None = None


class EvaluatePair(BaseModel):
    pred: GridPayload
    truth: GridPayload


class EvaluateRequest(BaseModel):
    pairs: list[EvaluatePair]
    threshold: float = 0.5


class EvaluateResponse(BaseModel):
    mse: float
    dsc: float
    volume_deviation_mean_pct: float
    volume_deviation_max_pct: float


class DoeRequest(BaseModel):
    vf_min: float = 0.25
    vf_max: float = 0.45
    vf_step: float = 0.01
    rmin_min: float = 1.20
    rmin_max: float = 2.50
    rmin_step: float = 0.01
    objectives: list[str] = ["bulk", "shear"]


class DoePoint(BaseModel):
    index: int
    objective_id: int
    vf: float
    rmin: float


class DoeResponse(BaseModel):
    count_per_objective: int
    points: list[DoePoint]


class StudyRequest(BaseModel):
    kind: str = Field(pattern="^(isosurface-mesh|voxel-resolution)$")
    levels: list[int]


class StudyResponse(BaseModel):
    csv: str
