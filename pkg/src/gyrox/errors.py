"""Exception types shared across the package."""


class GyroxError(Exception):
    """Base class for all gyrox-specific failures."""


class NoSurfaceError(GyroxError):
    """The sampled level-set field has uniform sign, so no isosurface exists."""


class SolverDivergedError(GyroxError):
    """The equilibrium solver failed to reach its residual tolerance."""


class BisectionFailedError(GyroxError):
    """The volume-constraint multiplier search could not hit the target."""


class FormatError(GyroxError):
    """A file does not conform to its declared binary/text format."""


class ShapeMismatchError(GyroxError):
    """Two grids (or grid collections) have incompatible shapes."""
