"""Energy-based homogenization of a voxel unit cell under periodic BCs.

Each voxel is one trilinear hexahedral element. Six unit test strains
(normal 11/22/33 and engineering shears 12/23/31) are applied through
their force equivalents F = sum_e k_e u0_e; the periodic fluctuation
fields solve K U = F, and the homogenized 6x6 stiffness follows from the
element mutual energies of u0_e - U_e.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverDivergedError
from .grids import DensityGrid

VOIGT_ORDER = "11,22,33,12,23,31"

# direct factorization below this many reduced DOFs, AMG-preconditioned CG above
_DIRECT_DOF_LIMIT = 3000


@dataclass(frozen=True)
class MaterialModel:
    """SIMP material: solid/void moduli (GPa), Poisson ratio, penalization."""

    e0: float = 1.0
    e_min: float = 1e-9
    nu: float = 0.3
    penal: float = 5.0

    def __post_init__(self):
        if not (0.0 < self.e_min < self.e0):
            raise ValueError(f"need 0 < e_min < e0, got e_min={self.e_min}, e0={self.e0}")
        if not (0.0 <= self.nu < 0.5):
            raise ValueError(f"need 0 <= nu < 0.5, got {self.nu}")
        if self.penal < 1.0:
            raise ValueError(f"need penal >= 1, got {self.penal}")

    def young(self, densities: np.ndarray) -> np.ndarray:
        """Power-law interpolated element modulus E_min + (E0 - E_min) rho^p."""
        return self.e_min + (self.e0 - self.e_min) * np.asarray(densities) ** self.penal


@dataclass
class ElementModel:
    """Unit-modulus 24x24 hexahedral stiffness and the six affine test fields."""

    k0: np.ndarray  # (24, 24)
    u0: np.ndarray  # (24, 6)
    element_size: tuple[float, float, float]


@dataclass
class PeriodicDofMap:
    """Node identification across opposite faces/edges/corners of the cell."""

    resolution: tuple[int, int, int]
    master_of_node: np.ndarray  # node index -> representative node index
    node_class: np.ndarray  # node index -> periodic class in [0, n_classes)
    n_free: int


@dataclass
class ElasticityTensor6:
    """Homogenized 6x6 stiffness in Voigt order 11,22,33,12,23,31 (GPa)."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64).reshape(6, 6)

    def to_json(self) -> str:
        return json.dumps(
            {
                "voigt_order": VOIGT_ORDER,
                "entries": [[float(v) for v in row] for row in self.entries],
                "units": "GPa",
            },
            sort_keys=True,
        )


@dataclass
class HomogenizationResult:
    tensor: ElasticityTensor6
    displacement_fields: np.ndarray  # (n_free, 6) periodic fluctuations
    cell_volume: float
    unit_mutual_energies: np.ndarray = field(repr=False, default=None)  # (n_elem, 6, 6)


def isotropic_stiffness(e: float, nu: float) -> np.ndarray:
    """6x6 isotropic elasticity matrix, engineering-shear convention."""
    f = e / ((1.0 + nu) * (1.0 - 2.0 * nu))
    c = np.zeros((6, 6))
    c[:3, :3] = f * nu
    np.fill_diagonal(c[:3, :3], f * (1.0 - nu))
    g = e / (2.0 * (1.0 + nu))
    c[3, 3] = c[4, 4] = c[5, 5] = g
    return c


# local node order: x fastest on the bottom face counter-clockwise, then top
_NODE_SIGNS = np.array(
    [
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
    ],
    dtype=np.float64,
)


def _b_matrix(xi: np.ndarray, h: tuple[float, float, float]) -> np.ndarray:
    """Strain-displacement matrix at local point xi in [-1,1]^3."""
    hx, hy, hz = h
    dN = np.zeros((3, 8))
    for i, (sx, sy, sz) in enumerate(_NODE_SIGNS):
        dN[0, i] = sx * (1 + sy * xi[1]) * (1 + sz * xi[2]) / 8.0 * (2.0 / hx)
        dN[1, i] = sy * (1 + sx * xi[0]) * (1 + sz * xi[2]) / 8.0 * (2.0 / hy)
        dN[2, i] = sz * (1 + sx * xi[0]) * (1 + sy * xi[1]) / 8.0 * (2.0 / hz)
    b = np.zeros((6, 24))
    for i in range(8):
        c = 3 * i
        b[0, c + 0] = dN[0, i]
        b[1, c + 1] = dN[1, i]
        b[2, c + 2] = dN[2, i]
        b[3, c + 0] = dN[1, i]
        b[3, c + 1] = dN[0, i]
        b[4, c + 1] = dN[2, i]
        b[4, c + 2] = dN[1, i]
        b[5, c + 0] = dN[2, i]
        b[5, c + 2] = dN[0, i]
    return b


def element_stiffness(nu: float, element_size: tuple[float, float, float]) -> ElementModel:
    """Unit-modulus stiffness (2x2x2 Gauss) and affine unit-strain node fields."""
    if not (0.0 <= nu < 0.5):
        raise ValueError(f"need 0 <= nu < 0.5, got {nu}")
    if any(v <= 0 for v in element_size):
        raise ValueError(f"element sizes must be positive, got {element_size}")
    hx, hy, hz = element_size
    c = isotropic_stiffness(1.0, nu)
    k0 = np.zeros((24, 24))
    g = 1.0 / np.sqrt(3.0)
    det_j = hx * hy * hz / 8.0
    for sx, sy, sz in _NODE_SIGNS:  # Gauss points share the corner sign pattern
        b = _b_matrix(np.array([sx * g, sy * g, sz * g]), element_size)
        k0 += b.T @ c @ b * det_j
    k0 = (k0 + k0.T) / 2.0

    # affine fields u = eps_bar . x at the nodes, element-centered coordinates
    coords = _NODE_SIGNS * np.array([hx, hy, hz]) / 2.0
    u0 = np.zeros((24, 6))
    for i, (x, y, z) in enumerate(coords):
        c3 = 3 * i
        u0[c3 + 0, 0] = x
        u0[c3 + 1, 1] = y
        u0[c3 + 2, 2] = z
        u0[c3 + 0, 3] = y / 2.0
        u0[c3 + 1, 3] = x / 2.0
        u0[c3 + 1, 4] = z / 2.0
        u0[c3 + 2, 4] = y / 2.0
        u0[c3 + 0, 5] = z / 2.0
        u0[c3 + 2, 5] = x / 2.0
    return ElementModel(k0, u0, tuple(float(v) for v in element_size))


def build_periodic_dof_map(resolution: tuple[int, int, int]) -> PeriodicDofMap:
    """Identify nodes across opposite faces; one master per interior lattice point."""
    ex, ey, ez = (int(v) for v in resolution)
    if min(ex, ey, ez) < 1:
        raise ValueError(f"resolution must be >= 1 per axis, got {resolution}")
    nx, ny, nz = ex + 1, ey + 1, ez + 1
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(order="F"), j.ravel(order="F"), k.ravel(order="F")
    im, jm, km = i % ex, j % ey, k % ez
    master_of_node = im + nx * (jm + ny * km)
    node_class = im + ex * (jm + ey * km)
    return PeriodicDofMap((ex, ey, ez), master_of_node, node_class, 3 * ex * ey * ez)


def _element_dof_table(dof_map: PeriodicDofMap) -> np.ndarray:
    """(n_elem, 24) reduced DOF indices; element order x fastest."""
    ex, ey, ez = dof_map.resolution
    a, b, c = np.meshgrid(np.arange(ex), np.arange(ey), np.arange(ez), indexing="ij")
    a = a.ravel(order="F")
    b = b.ravel(order="F")
    c = c.ravel(order="F")
    cls = dof_map.node_class.reshape((ex + 1, ey + 1, ez + 1), order="F")
    offsets = ((_NODE_SIGNS + 1) / 2).astype(int)
    edof = np.empty((ex * ey * ez, 24), dtype=np.int64)
    for ln, (da, db, dc) in enumerate(offsets):
        nodes = cls[a + da, b + db, c + dc]
        for d in range(3):
            edof[:, 3 * ln + d] = 3 * nodes + d
    return edof


class Homogenizer:
    """Reusable assembly/solve context for one resolution + material.

    Keeps the previous load-case solutions as warm starts for iterative
    solves, which the optimization loop exploits heavily.
    """

    def __init__(
        self,
        resolution: tuple[int, int, int],
        cell_lengths: tuple[float, float, float] = (1.0, 1.0, 1.0),
        material: MaterialModel = MaterialModel(),
        solver: str = "auto",
    ):
        self.resolution = tuple(int(v) for v in resolution)
        self.cell_lengths = tuple(float(v) for v in cell_lengths)
        self.material = material
        if solver not in ("auto", "direct", "amg", "jacobi"):
            raise ValueError(f"unknown solver {solver!r}")
        self.solver = solver
        h = tuple(L / n for L, n in zip(self.cell_lengths, self.resolution))
        self.element = element_stiffness(material.nu, h)
        self.dof_map = build_periodic_dof_map(self.resolution)
        self.edof = _element_dof_table(self.dof_map)
        self.n_elem = self.edof.shape[0]
        self._ik = np.repeat(self.edof, 24, axis=1).ravel()
        self._jk = np.tile(self.edof, (1, 24)).ravel()
        self._f0 = self.element.k0 @ self.element.u0  # (24, 6) unit-modulus forces
        self._warm: np.ndarray | None = None

    @property
    def cell_volume(self) -> float:
        lx, ly, lz = self.cell_lengths
        return lx * ly * lz

    def _method(self) -> str:
        if self.solver != "auto":
            return self.solver
        return "direct" if self.dof_map.n_free <= _DIRECT_DOF_LIMIT else "amg"

    def assemble(self, young: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
        """Reduced-periodic stiffness matrix and the six force vectors."""
        n = self.dof_map.n_free
        sk = (young[:, None] * self.element.k0.ravel()[None, :]).ravel()
        k = sp.coo_matrix((sk, (self._ik, self._jk)), shape=(n, n)).tocsr()
        f = np.zeros((n, 6))
        fe = young[:, None, None] * self._f0[None, :, :]
        for ln in range(24):
            np.add.at(f, self.edof[:, ln], fe[:, ln, :])
        return k, f

    def solve_cases(self, densities: np.ndarray) -> np.ndarray:
        """Periodic fluctuation fields for all six unit strains, (n_free, 6)."""
        young = self.material.young(densities)
        k, f = self.assemble(young)
        u = np.zeros_like(f)
        pin = 3  # master node 0 fixed: removes the three rigid translations
        kff = k[pin:, :][:, pin:]
        ff = f[pin:, :]
        method = self._method()
        if method == "direct":
            uf = self._direct(kff, ff)
        else:
            try:
                uf = self._iterative(kff, ff, method)
            except SolverDivergedError:
                uf = self._direct(kff, ff)
        u[pin:, :] = uf
        self._check_residual(k, f, u)
        self._warm = uf.copy()
        return u

    def _direct(self, kff, ff) -> np.ndarray:
        lu = spla.splu(kff.tocsc(), permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        return lu.solve(ff)

    def _iterative(self, kff, ff, method: str) -> np.ndarray:
        n = kff.shape[0]
        if method == "amg":
            import pyamg

            ml = pyamg.smoothed_aggregation_solver(
                kff.tocsr(), B=self._rigid_modes(n), max_coarse=300
            )
            precond = ml.aspreconditioner(cycle="V")
        else:
            inv_diag = 1.0 / kff.diagonal()
            precond = spla.LinearOperator((n, n), matvec=lambda x: inv_diag * x)
        uf = np.zeros_like(ff)
        cap = 10 * self.dof_map.n_free
        for case in range(6):
            b = ff[:, case]
            x0 = self._warm[:, case] if self._warm is not None and self._warm.shape[0] == n else None
            x, info = spla.cg(kff, b, x0=x0, rtol=1e-8, atol=0.0, maxiter=cap, M=precond)
            if info != 0:
                raise SolverDivergedError(f"CG failed for load case {case + 1} (info={info})")
            uf[:, case] = x
        return uf

    def _rigid_modes(self, n: int) -> np.ndarray:
        modes = np.zeros((n, 3))
        for d in range(3):
            modes[d::3, d] = 1.0
        return modes

    def _check_residual(self, k, f, u) -> None:
        kscale = float(np.abs(k.diagonal()).max())
        for case in range(6):
            fn = np.linalg.norm(f[:, case])
            if fn <= 1e-12 * kscale:
                continue  # zero-load case (homogeneous medium): nothing to check
            res = np.linalg.norm(k @ u[:, case] - f[:, case]) / fn
            if res > 1e-6:
                raise SolverDivergedError(f"load case {case + 1} residual {res:.2e}")

    def homogenize(self, densities: np.ndarray) -> HomogenizationResult:
        """Homogenized tensor plus per-element unit-modulus mutual energies."""
        densities = np.asarray(densities, dtype=np.float64).ravel()
        if densities.size != self.n_elem:
            raise ValueError(f"expected {self.n_elem} densities, got {densities.size}")
        u = self.solve_cases(densities)
        u_ea = self.element.u0[None, :, :] - u[self.edof, :]  # (n_elem, 24, 6)
        ku = np.matmul(self.element.k0, u_ea)
        qe0 = np.matmul(u_ea.transpose(0, 2, 1), ku)  # unit-modulus mutual energies
        young = self.material.young(densities)
        eh = np.tensordot(young, qe0, axes=(0, 0)) / self.cell_volume
        return HomogenizationResult(ElasticityTensor6(eh), u, self.cell_volume, qe0)


def solve_load_case(
    grid: DensityGrid,
    mat: MaterialModel,
    elem: ElementModel,
    dof_map: PeriodicDofMap,
    case: int,
    solver: str = "auto",
) -> np.ndarray:
    """Fluctuation displacement field for one unit test strain (case 1..6)."""
    if not 1 <= case <= 6:
        raise ValueError(f"case must be in 1..6, got {case}")
    hom = Homogenizer(grid.resolution, grid.cell_lengths, mat, solver)
    return hom.solve_cases(grid.densities)[:, case - 1]


def homogenized_tensor(
    grid: DensityGrid,
    mat: MaterialModel = MaterialModel(),
    solver: str = "auto",
) -> HomogenizationResult:
    """Homogenized 6x6 stiffness of a density grid."""
    hom = Homogenizer(grid.resolution, grid.cell_lengths, mat, solver)
    return hom.homogenize(grid.densities)


def bulk_objective(t: ElasticityTensor6) -> float:
    """Sum of the nine normal-block entries (equals 9K for isotropy)."""
    return float(t.entries[:3, :3].sum())


def shear_objective(t: ElasticityTensor6) -> float:
    """Trace of the shear block: E_1212 + E_2323 + E_3131."""
    return float(t.entries[3, 3] + t.entries[4, 4] + t.entries[5, 5])
