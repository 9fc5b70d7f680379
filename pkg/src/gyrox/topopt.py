"""SIMP optimization loop: density filter, Heaviside projection with
beta-continuation, adjoint sensitivities, and optimality-criteria updates.

Design variables eta live per voxel; the filtered field rho = W eta is
projected to the physical field rho_H, which drives the homogenization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .errors import BisectionFailedError
from .grids import DensityGrid, write_dgrid
from .homogenize import (
    Homogenizer,
    HomogenizationResult,
    MaterialModel,
    bulk_objective,
    shear_objective,
)

VOID_FLOOR = 0.01  # multiplicative updates cannot lift an exact zero

# Commitment guards for the continuation loop. Once a design variable is
# essentially 1 and its filtered density is deep enough into the projection's
# saturated range (slope ratio below COMMIT_SLOPE_RATIO), first-order
# information about it is gone; the loop then pins it at 1 instead of letting
# the volume multiplier shave it. When the volume target is unreachable
# without touching pinned material, the least-sensitive committed voxels are
# handed back to the optimizer in small chunks.
COMMIT_SLOPE_RATIO = 0.08
COMMIT_ETA = 0.9
RELEASE_CHUNK = 0.02
VOLUME_STEP = 0.005  # max per-iteration move of the volume target
DOUBLING_VOLUME_TOL = 0.01  # beta doubles only near the volume target
CONVERGED_VOLUME_TOL = 1e-3


class Objective(IntEnum):
    BULK = 1
    SHEAR = 2


@dataclass
class FilterOperator:
    """Row-normalized cone weights over periodic centroid distances."""

    resolution: tuple[int, int, int]
    r_min: float
    weights: sp.csr_matrix

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        return self.weights.T @ x


def build_filter(resolution: tuple[int, int, int], r_min: float) -> FilterOperator:
    """Linear (cone) filter w_ij = max(0, r_min - d_ij), rows normalized to 1.

    Distances are measured between voxel centroids in element-edge units and
    wrap periodically across the cell faces, matching the periodic unit cell.
    """
    if r_min < 0:
        raise ValueError(f"r_min must be >= 0, got {r_min}")
    ex, ey, ez = (int(v) for v in resolution)
    n = ex * ey * ez

    def axis_offsets(e: int) -> list[tuple[int, float]]:
        # one entry per residue class mod e, at its minimum-image distance
        return [(r, float(min(r, e - r))) for r in range(e)]

    combos = []
    for dx, ax in axis_offsets(ex):
        if ax >= r_min:
            continue
        for dy, ay in axis_offsets(ey):
            if np.hypot(ax, ay) >= r_min:
                continue
            for dz, az in axis_offsets(ez):
                d = float(np.sqrt(ax * ax + ay * ay + az * az))
                if d < r_min:
                    combos.append((dx, dy, dz, r_min - d))
    ix, iy, iz = np.meshgrid(np.arange(ex), np.arange(ey), np.arange(ez), indexing="ij")
    ix = ix.ravel(order="F")
    iy = iy.ravel(order="F")
    iz = iz.ravel(order="F")
    rows = np.arange(n)
    all_rows = np.empty(n * len(combos), dtype=np.int64)
    all_cols = np.empty(n * len(combos), dtype=np.int64)
    all_w = np.empty(n * len(combos))
    for t, (dx, dy, dz, w) in enumerate(combos):
        cols = (ix + dx) % ex + ex * ((iy + dy) % ey + ey * ((iz + dz) % ez))
        all_rows[t * n : (t + 1) * n] = rows
        all_cols[t * n : (t + 1) * n] = cols
        all_w[t * n : (t + 1) * n] = w
    mat = sp.coo_matrix((all_w, (all_rows, all_cols)), shape=(n, n)).tocsr()
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / row_sums)
    return FilterOperator((ex, ey, ez), float(r_min), (inv @ mat).tocsr())


def heaviside_project(rho: np.ndarray, beta: float) -> np.ndarray:
    """Smoothed projection 1 - exp(-beta rho) + rho exp(-beta)."""
    rho = np.asarray(rho)
    return 1.0 - np.exp(-beta * rho) + rho * np.exp(-beta)


def heaviside_derivative(rho: np.ndarray, beta: float) -> np.ndarray:
    """Elementwise derivative beta exp(-beta rho) + exp(-beta); strictly positive."""
    rho = np.asarray(rho)
    return beta * np.exp(-beta * rho) + np.exp(-beta)


@dataclass(frozen=True)
class ContinuationSchedule:
    beta_initial: float = 1.0
    beta_max: float = 512.0
    double_every: int = 50
    change_threshold: float = 0.01

    def __post_init__(self):
        if self.beta_initial > self.beta_max:
            raise ValueError("beta_initial must be <= beta_max")


@dataclass(frozen=True)
class TopOptConfig:
    objective: Objective = Objective.BULK
    volume_fraction: float = 0.35
    r_min: float = 1.5
    material: MaterialModel = MaterialModel()
    schedule: ContinuationSchedule = ContinuationSchedule()
    max_iterations: int = 1000
    change_tolerance: float = 0.01
    move_limit: float = 0.2
    resolution: tuple[int, int, int] = (32, 32, 32)
    solver: str = "auto"
    volume_step: float = VOLUME_STEP

    def __post_init__(self):
        if not (0.0 < self.volume_fraction < 1.0):
            raise ValueError(f"volume_fraction must be in (0,1), got {self.volume_fraction}")
        if self.r_min < 1.0:
            raise ValueError(f"r_min must be >= 1 element unit, got {self.r_min}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))


@dataclass
class DesignState:
    eta: np.ndarray
    rho: np.ndarray
    rho_h: np.ndarray
    beta: float
    iteration: int


@dataclass
class TraceEntry:
    objective: float
    volume: float
    change: float
    beta: float


@dataclass
class OptimizationResult:
    final_grid: DensityGrid
    objective_value: float
    achieved_volume: float
    converged: bool
    iterations_used: int
    trace: list[TraceEntry] = field(default_factory=list)


def objective_value(tensor, objective: Objective) -> float:
    if Objective(objective) is Objective.BULK:
        return bulk_objective(tensor)
    return shear_objective(tensor)


def objective_and_sensitivities(
    state: DesignState,
    config: TopOptConfig,
    homogenizer: Homogenizer,
    filt: FilterOperator,
) -> tuple[float, np.ndarray, np.ndarray, HomogenizationResult]:
    """Objective at the current physical densities and its chain-rule gradients.

    Returns (f, df/deta, dV/deta, homogenization result). The stiffness
    derivative is the adjoint expression p rho^(p-1) (E0 - Emin) q_e / |Y|
    evaluated at rho_H, chained through the projection slope and the filter
    transpose.
    """
    mat = config.material
    res = homogenizer.homogenize(state.rho_h)
    f_val = objective_value(res.tensor, config.objective)
    qe0 = res.unit_mutual_energies
    if config.objective is Objective.BULK:
        q_obj = qe0[:, :3, :3].sum(axis=(1, 2))
    else:
        q_obj = qe0[:, 3, 3] + qe0[:, 4, 4] + qe0[:, 5, 5]
    df_drho_h = (
        mat.penal
        * np.asarray(state.rho_h) ** (mat.penal - 1.0)
        * (mat.e0 - mat.e_min)
        * q_obj
        / homogenizer.cell_volume
    )
    slope = heaviside_derivative(state.rho, state.beta)
    df_deta = filt.apply_transpose(slope * df_drho_h)
    dv_deta = filt.apply_transpose(slope) / state.rho.size
    return f_val, df_deta, dv_deta, res


def _projected_volume(eta: np.ndarray, filt: FilterOperator, beta: float) -> float:
    return float(heaviside_project(filt.apply(eta), beta).mean())


def oc_update(
    eta: np.ndarray,
    df_deta: np.ndarray,
    dv_deta: np.ndarray,
    target_vf: float,
    move_limit: float,
    filt: FilterOperator,
    beta: float,
    hold: np.ndarray | None = None,
) -> np.ndarray:
    """Optimality-criteria update with bisected volume multiplier.

    The multiplier targets the physical volume mean(rho_H(W eta')). When the
    move limit makes the target unreachable this iteration, the update ramps
    maximally toward it instead of failing; feasibility is then restored over
    the next iterations. Elements flagged in ``hold`` keep their value.
    """
    s = np.maximum(df_deta, 1e-10)
    v = np.asarray(dv_deta)
    lo = np.clip(eta - move_limit, 0.0, 1.0)
    hi = np.clip(eta + move_limit, 0.0, 1.0)
    live = np.ones(eta.shape, dtype=bool) if hold is None else ~hold

    def candidate(lam: float) -> np.ndarray:
        out = eta.copy()
        out[live] = np.clip(eta[live] * np.sqrt(s[live] / (lam * v[live])), lo[live], hi[live])
        return out

    l1, l2 = 1e-9, 1e9
    vol_hi = _projected_volume(candidate(l1), filt, beta)  # smallest lambda: largest volume
    vol_lo = _projected_volume(candidate(l2), filt, beta)
    if target_vf >= vol_hi:
        return candidate(l1)
    if target_vf <= vol_lo:
        return candidate(l2)
    eta_new = None
    for _ in range(200):
        lmid = 0.5 * (l1 + l2)
        eta_new = candidate(lmid)
        vol = _projected_volume(eta_new, filt, beta)
        if abs(vol - target_vf) <= 1e-6:
            return eta_new
        if vol > target_vf:
            l1 = lmid
        else:
            l2 = lmid
    vol = _projected_volume(eta_new, filt, beta)
    if abs(vol - target_vf) > 1e-4:
        raise BisectionFailedError(
            f"volume multiplier search missed target {target_vf} (got {vol:.6f})"
        )
    return eta_new


def binarization_fraction(grid: DensityGrid) -> float:
    """Fraction of voxels with density strictly inside (0.05, 0.95)."""
    d = grid.densities
    return float(((d > 0.05) & (d < 0.95)).mean())


def _commit_and_release(
    eta: np.ndarray,
    rho: np.ndarray,
    beta: float,
    df_deta: np.ndarray,
    target: float,
    move_limit: float,
    filt: FilterOperator,
) -> tuple[np.ndarray, np.ndarray]:
    """Pin projection-saturated solid voxels; release the weakest when the
    volume target needs material the live set cannot give up."""
    committed = (np.exp(-beta * rho) <= COMMIT_SLOPE_RATIO) & (eta >= COMMIT_ETA)
    eta = eta.copy()
    eta[committed] = 1.0
    lo = np.clip(eta - move_limit, 0.0, 1.0)

    def min_reachable(live_mask: np.ndarray) -> float:
        probe = eta.copy()
        probe[live_mask] = lo[live_mask]
        return _projected_volume(probe, filt, beta)

    chunk = max(1, int(RELEASE_CHUNK * eta.size))
    while committed.any() and target < min_reachable(~committed):
        order = np.argsort(np.where(committed, df_deta, np.inf), kind="stable")
        release = order[:chunk]
        release = release[committed[release]]
        if release.size == 0:
            break
        committed[release] = False
    return eta, committed


def optimize(config: TopOptConfig, initial: DensityGrid) -> OptimizationResult:
    """Run the full continuation loop from an initial density grid.

    Per iteration: filter, project, homogenize, adjoint sensitivities, OC
    update, then beta continuation (double every `double_every` iterations or
    when the design change drops under the schedule threshold, capped at
    beta_max; doubling waits until the volume sits at the target). The
    per-iteration volume target walks toward the constraint in bounded steps,
    and projection-saturated solid voxels are pinned so sharpening cannot
    trade walls for spray. Converged means beta reached beta_max, the design
    change fell below the change tolerance, and the volume constraint is met;
    hitting max_iterations is flagged, not raised.
    """
    if tuple(initial.resolution) != tuple(config.resolution):
        raise ValueError(
            f"initial grid resolution {initial.resolution} != config resolution {config.resolution}"
        )
    homogenizer = Homogenizer(
        config.resolution, initial.cell_lengths, config.material, config.solver
    )
    filt = build_filter(config.resolution, config.r_min)
    eta = np.clip(initial.densities, VOID_FLOOR, 1.0)
    beta = config.schedule.beta_initial
    iters_since_double = 0
    trace: list[TraceEntry] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        rho = filt.apply(eta)
        rho_h = heaviside_project(rho, beta)
        volume = float(rho_h.mean())
        state = DesignState(eta, rho, rho_h, beta, iteration)
        f_val, df_deta, dv_deta, _ = objective_and_sensitivities(
            state, config, homogenizer, filt
        )
        if volume > config.volume_fraction:
            target = max(config.volume_fraction, volume - config.volume_step)
        else:
            target = min(config.volume_fraction, volume + config.volume_step)
        eta_pinned, committed = _commit_and_release(
            eta, rho, beta, df_deta, target, config.move_limit, filt
        )
        eta_new = oc_update(
            eta_pinned, df_deta, dv_deta, target, config.move_limit, filt, beta,
            hold=committed,
        )
        change = float(np.abs(eta_new - eta).max())
        eta = eta_new
        trace.append(TraceEntry(f_val, volume, change, beta))
        iters_since_double += 1
        at_target = abs(volume - config.volume_fraction) <= DOUBLING_VOLUME_TOL
        if beta >= config.schedule.beta_max:
            if (
                change < config.change_tolerance
                and abs(volume - config.volume_fraction) <= CONVERGED_VOLUME_TOL
            ):
                converged = True
                break
        elif at_target and (
            iters_since_double >= config.schedule.double_every
            or change < config.schedule.change_threshold
        ):
            beta = min(2.0 * beta, config.schedule.beta_max)
            iters_since_double = 0

    rho_h = heaviside_project(filt.apply(eta), beta)
    final_grid = DensityGrid(config.resolution, rho_h, initial.cell_lengths)
    final_tensor = homogenizer.homogenize(rho_h).tensor
    return OptimizationResult(
        final_grid=final_grid,
        objective_value=objective_value(final_tensor, config.objective),
        achieved_volume=float(rho_h.mean()),
        converged=converged,
        iterations_used=iteration,
        trace=trace,
    )


def result_sidecar(result: OptimizationResult, config: TopOptConfig) -> dict:
    """JSON-serializable sidecar describing one optimization run."""
    return {
        "objective_id": int(config.objective),
        "vf": config.volume_fraction,
        "rmin": config.r_min,
        "objective_value": result.objective_value,
        "achieved_volume": result.achieved_volume,
        "converged": result.converged,
        "iterations": result.iterations_used,
        "trace": [
            {"objective": t.objective, "volume": t.volume, "change": t.change, "beta": t.beta}
            for t in result.trace
        ],
    }


def save_result(result: OptimizationResult, config: TopOptConfig, grid_path, sidecar_path) -> None:
    write_dgrid(result.final_grid, grid_path)
    with open(sidecar_path, "w") as fh:
        json.dump(result_sidecar(result, config), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
