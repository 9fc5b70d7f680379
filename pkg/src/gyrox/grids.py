"""Voxel density grids and their on-disk formats (dgrid binary, legacy VTK)."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

DGRID_MAGIC = b"DGRD"
DGRID_VERSION = 1
_HEADER = struct.Struct("<4sI3I3d")


@dataclass
class DensityGrid:
    """Per-voxel densities in [0, 1] over one rectangular unit cell.

    ``densities`` is flat with x fastest, then y, then z:
    index = ix + e_x * (iy + e_y * iz).
    """

    resolution: tuple[int, int, int]
    densities: np.ndarray
    cell_lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.resolution = tuple(int(n) for n in self.resolution)
        self.cell_lengths = tuple(float(v) for v in self.cell_lengths)
        if any(n < 1 for n in self.resolution):
            raise ValueError(f"resolution must be >= 1 per axis, got {self.resolution}")
        if any(v <= 0 for v in self.cell_lengths):
            raise ValueError(f"cell lengths must be positive, got {self.cell_lengths}")
        self.densities = np.ascontiguousarray(self.densities, dtype=np.float64).ravel()
        n = self.num_voxels
        if self.densities.size != n:
            raise ValueError(f"expected {n} densities, got {self.densities.size}")
        lo, hi = float(self.densities.min(initial=0.0)), float(self.densities.max(initial=0.0))
        if lo < -1e-9 or hi > 1.0 + 1e-9:
            raise ValueError(f"densities outside [0,1]: min={lo}, max={hi}")
        np.clip(self.densities, 0.0, 1.0, out=self.densities)

    @property
    def num_voxels(self) -> int:
        ex, ey, ez = self.resolution
        return ex * ey * ez

    @property
    def voxel_size(self) -> tuple[float, float, float]:
        return tuple(L / n for L, n in zip(self.cell_lengths, self.resolution))

    def as_array(self) -> np.ndarray:
        """3D view indexed [ix, iy, iz]."""
        return self.densities.reshape(self.resolution, order="F")

    def replace_densities(self, densities: np.ndarray) -> "DensityGrid":
        return DensityGrid(self.resolution, densities, self.cell_lengths)


def relative_density(grid: DensityGrid) -> float:
    """Mean voxel density (solid volume over cell volume)."""
    return float(grid.densities.mean())


def write_dgrid(grid: DensityGrid, path) -> None:
    """Write the binary dgrid format (f32 little-endian payload, x fastest)."""
    ex, ey, ez = grid.resolution
    lx, ly, lz = grid.cell_lengths
    payload = grid.densities.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DGRID_MAGIC, DGRID_VERSION, ex, ey, ez, lx, ly, lz))
        fh.write(payload)


def read_dgrid(path) -> DensityGrid:
    """Read a dgrid file written by :func:`write_dgrid`."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, ex, ey, ez, lx, ly, lz = _HEADER.unpack(head)
        if magic != DGRID_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != DGRID_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        n = ex * ey * ez
        payload = fh.read(4 * n)
        if len(payload) != 4 * n:
            raise FormatError(f"{path}: truncated payload ({len(payload)} bytes, wanted {4 * n})")
    dens = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return DensityGrid((ex, ey, ez), dens, (lx, ly, lz))


def quantize_to_storage(grid: DensityGrid) -> DensityGrid:
    """Round densities to the f32 values the dgrid format stores.

    Records built from a quantized grid round-trip through read/write exactly.
    """
    return grid.replace_densities(grid.densities.astype("<f4").astype(np.float64))


def write_vtk(grid: DensityGrid, path, title: str = "gyrox density grid") -> None:
    """Legacy ASCII VTK STRUCTURED_POINTS export with a per-voxel 'density' scalar."""
    ex, ey, ez = grid.resolution
    hx, hy, hz = grid.voxel_size
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {ex + 1} {ey + 1} {ez + 1}",
        "ORIGIN 0 0 0",
        f"SPACING {hx:.9g} {hy:.9g} {hz:.9g}",
        f"CELL_DATA {grid.num_voxels}",
        "SCALARS density float 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(f"{v:.9g}" for v in grid.densities)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
