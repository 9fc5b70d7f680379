"""Gyroid unit-cell homogenization, topology optimization, and dataset tooling."""

from .errors import (
    BisectionFailedError,
    FormatError,
    GyroxError,
    NoSurfaceError,
    ShapeMismatchError,
    SolverDivergedError,
)
from .grids import DensityGrid, read_dgrid, relative_density, write_dgrid, write_vtk
from .homogenize import (
    ElasticityTensor6,
    Homogenizer,
    HomogenizationResult,
    MaterialModel,
    bulk_objective,
    homogenized_tensor,
    shear_objective,
)
from .topopt import (
    ContinuationSchedule,
    Objective,
    OptimizationResult,
    TopOptConfig,
    binarization_fraction,
    build_filter,
    heaviside_derivative,
    heaviside_project,
    optimize,
)
from .tpms import (
    TpmsSpec,
    TriangleMesh,
    extract_isosurface,
    sample_level_set,
    voxelize_surface,
    voxelized_gyroid,
)

__version__ = "0.1.0"
