"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a PASS line on success so the suite doubles as a checklist:
    pytest tests/test_acceptance.py -v -s
The 32^3 validation runs are excluded from the default run (marked slow).
"""
import time

import numpy as np
import pytest

from gyrox.dataset import (
    DoeSpec,
    dice,
    enumerate_doe,
    mse,
    run_dataset,
)
from gyrox.grids import DensityGrid, relative_density
from gyrox.homogenize import (
    Homogenizer,
    MaterialModel,
    bulk_objective,
    homogenized_tensor,
    isotropic_stiffness,
    shear_objective,
)
from gyrox.topopt import (
    ContinuationSchedule,
    DesignState,
    Objective,
    TopOptConfig,
    binarization_fraction,
    build_filter,
    heaviside_project,
    objective_and_sensitivities,
    objective_value,
    optimize,
)
from gyrox.tpms import voxelized_gyroid


def report(name, detail):
    print(f"\nACCEPTANCE PASS: {name} ({detail})")


@pytest.fixture(scope="module")
def gyroid16():
    return voxelized_gyroid(resolution=(16, 16, 16))


@pytest.fixture(scope="module")
def optimized16(gyroid16):
    """Shared desk-scale run: bulk, V_f=0.35, r_min=1.5 at 16^3."""
    config = TopOptConfig(
        objective=Objective.BULK,
        volume_fraction=0.35,
        r_min=1.5,
        resolution=(16, 16, 16),
        max_iterations=1000,
    )
    t0 = time.time()
    result = optimize(config, gyroid16)
    return config, result, time.time() - t0


def run16(objective, vf, rmin, gyroid16):
    config = TopOptConfig(
        objective=objective,
        volume_fraction=vf,
        r_min=rmin,
        resolution=(16, 16, 16),
        max_iterations=1000,
    )
    return optimize(config, gyroid16)


class TestGyroidDensity:
    def test_reference_density_within_band(self):
        t0 = time.time()
        grid = voxelized_gyroid()  # c=0, L=1, mesh_points=15, 32^3
        elapsed = time.time() - t0
        rho = relative_density(grid)
        assert abs(rho - 0.587) <= 0.010
        assert elapsed < 5.0
        report("gyroid density", f"rho={rho:.4f}, {elapsed:.2f}s")


class TestSolidCellOracle:
    def test_homogenization_matches_analytic(self):
        t0 = time.time()
        grid = DensityGrid((16, 16, 16), np.ones(16**3))
        res = homogenized_tensor(grid, MaterialModel())
        elapsed = time.time() - t0
        expected = isotropic_stiffness(1.0, 0.3)
        scale = np.abs(expected).max()
        rel = np.abs(res.tensor.entries - expected).max() / scale
        assert rel <= 1e-4
        fb = bulk_objective(res.tensor)
        fs = shear_objective(res.tensor)
        assert fb == pytest.approx(7.5, abs=1e-4)
        assert fs == pytest.approx(1.15385, abs=1e-4)
        assert elapsed < 60.0
        report("solid-cell oracle", f"rel_err={rel:.2e}, f_b={fb:.5f}, f_s={fs:.5f}, {elapsed:.1f}s")


class TestTensorSymmetry:
    def test_twenty_random_grids(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(20):
            grid = DensityGrid((8, 8, 8), rng.uniform(0.0, 1.0, 512))
            t = homogenized_tensor(grid).tensor.entries
            worst = max(worst, np.abs(t - t.T).max() / np.abs(t).max())
        assert worst <= 1e-8
        report("tensor symmetry", f"worst asymmetry {worst:.2e}")


class TestGradientCheck:
    def test_adjoint_vs_central_differences(self):
        t0 = time.time()
        rng = np.random.default_rng(7)
        res = (4, 4, 4)
        filt = build_filter(res, 1.5)
        h = 1e-5
        worst = 0.0
        for objective in (Objective.BULK, Objective.SHEAR):
            config = TopOptConfig(objective=objective, volume_fraction=0.4, r_min=1.5, resolution=res)
            hom = Homogenizer(res, material=config.material, solver="direct")

            def objective_of(e, beta=4.0):
                return objective_value(
                    hom.homogenize(heaviside_project(filt.apply(e), beta)).tensor,
                    config.objective,
                )

            for _ in range(3):
                eta = rng.uniform(0.1, 0.9, 64)
                beta = 4.0
                rho = filt.apply(eta)
                state = DesignState(eta, rho, heaviside_project(rho, beta), beta, 0)
                _, df, _, _ = objective_and_sensitivities(state, config, hom, filt)
                for idx in rng.choice(64, 5, replace=False):
                    ep, em = eta.copy(), eta.copy()
                    ep[idx] += h
                    em[idx] -= h
                    fd = (objective_of(ep) - objective_of(em)) / (2 * h)
                    worst = max(worst, abs(df[idx] - fd) / abs(fd))
        elapsed = time.time() - t0
        assert worst <= 1e-3
        assert elapsed < 600.0
        report("gradient check", f"worst rel err {worst:.2e}, {elapsed:.0f}s")


class TestHeavisideFilterIdentities:
    def test_identities(self):
        rho = np.linspace(0.0, 1.0, 101)
        assert np.abs(heaviside_project(rho, 0.0) - rho).max() <= 1e-12
        for beta in (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0):
            assert heaviside_project(np.array([1.0]), beta)[0] == pytest.approx(1.0, abs=1e-12)
            assert heaviside_project(np.array([0.0]), beta)[0] == 0.0
        f1 = build_filter((5, 5, 5), 1.0)
        assert np.allclose(f1.weights.toarray(), np.eye(125), atol=1e-15)
        f2 = build_filter((6, 6, 6), 2.0)
        const = np.full(216, 0.42)
        assert np.abs(f2.apply(const) - 0.42).max() <= 1e-12
        report("heaviside/filter identities", "beta=0 identity, endpoints, r_min=1 identity, constant fixed point")


class TestEndToEndDeskScale:
    def test_optimize_16cubed(self, optimized16):
        config, result, elapsed = optimized16
        assert result.converged, f"not converged in {result.iterations_used} iterations"
        assert result.iterations_used <= 1000
        assert abs(result.achieved_volume - 0.35) <= 0.005
        bf = binarization_fraction(result.final_grid)
        assert bf <= 0.05
        report(
            "end-to-end desk scale",
            f"converged in {result.iterations_used} iters, vol={result.achieved_volume:.4f}, "
            f"binfrac={bf:.4f}, obj={result.objective_value:.4f}, {elapsed/60:.1f} min",
        )


@pytest.fixture(scope="module")
def wide16(gyroid16):
    """Shared run at the widest filter radius: bulk, V_f=0.40, r_min=2.5."""
    return run16(Objective.BULK, 0.40, 2.5, gyroid16)


class TestTrendReproduction:
    def test_bulk_objective_increases_with_volume(self, gyroid16, optimized16):
        _, mid, _ = optimized16
        lo = run16(Objective.BULK, 0.25, 1.5, gyroid16)
        hi = run16(Objective.BULK, 0.45, 1.5, gyroid16)
        assert hi.objective_value > mid.objective_value > lo.objective_value
        report(
            "volume-fraction trend",
            f"f_b: {lo.objective_value:.4f} < {mid.objective_value:.4f} < {hi.objective_value:.4f}",
        )

    def test_large_filter_radius_reduces_objective(self, gyroid16, wide16):
        tight = run16(Objective.BULK, 0.40, 1.5, gyroid16)
        assert tight.objective_value > wide16.objective_value
        report(
            "filter-radius trend",
            f"f_b(rmin=1.5)={tight.objective_value:.4f} > f_b(rmin=2.5)={wide16.objective_value:.4f}",
        )

    def test_wide_filter_leaves_no_isolated_solids(self, wide16):
        solid = wide16.final_grid.as_array() > 0.5
        # periodic face-neighbor count per voxel
        neighbors = np.zeros_like(solid, dtype=int)
        for axis in range(3):
            for shift in (1, -1):
                neighbors += np.roll(solid, shift, axis=axis)
        isolated = solid & (neighbors == 0)
        assert not isolated.any()
        report("filter smoothing", f"{int(solid.sum())} solid voxels, none isolated")


class TestMetricValues:
    def test_exact_metric_identities(self):
        n = 32**3
        truth = DensityGrid((32, 32, 32), np.zeros(n))
        flipped = np.zeros(n)
        flipped[999] = 1.0
        pred = DensityGrid((32, 32, 32), flipped)
        assert mse([pred], [truth]) == 1.0 / 32768.0

        big = np.zeros(1000)
        big[:200] = 1.0
        sub = np.zeros(1000)
        sub[:100] = 1.0
        d = dice([DensityGrid((10, 10, 10), sub)], [DensityGrid((10, 10, 10), big)])
        assert d == 2.0 / 3.0

        g = DensityGrid((4, 4, 4), (np.arange(64) % 2).astype(float))
        assert mse([g], [g]) == 0.0
        assert dice([g], [g]) == 1.0
        report("metric values", "1/32768 exact, 2/3 exact, identity metrics exact")


class TestSweepDeterminism:
    def test_parallel_sweep_bytes(self, tmp_path):
        schedule = ContinuationSchedule(double_every=10)
        template = TopOptConfig(
            resolution=(6, 6, 6), max_iterations=250, schedule=schedule, volume_step=0.02
        )
        spec = DoeSpec(
            vf_min=0.38, vf_max=0.42, vf_step=0.02,
            rmin_min=1.10, rmin_max=1.20, rmin_step=0.05,
            objectives=(Objective.BULK, Objective.SHEAR),
        )
        per_obj = enumerate_doe(spec, template)
        configs = [cfg for obj in spec.objectives for cfg in per_obj[obj]]
        assert len(configs) == 3 * 3 * 2
        initial = voxelized_gyroid(resolution=(6, 6, 6))
        d1, d4 = tmp_path / "p1", tmp_path / "p4"
        run_dataset(configs, initial, d1, parallelism=1)
        run_dataset(configs, initial, d4, parallelism=4)
        names1 = sorted(p.name for p in d1.iterdir())
        names4 = sorted(p.name for p in d4.iterdir())
        assert names1 == names4
        for name in names1:
            assert (d1 / name).read_bytes() == (d4 / name).read_bytes(), name
        report("sweep determinism", f"{len(configs)} runs, {len(names1)} files byte-identical")


class TestDoeEnumeration:
    def test_default_grid_matches_reference_table(self):
        spec = DoeSpec()
        per_obj = enumerate_doe(spec, TopOptConfig())
        for obj in (Objective.BULK, Objective.SHEAR):
            configs = per_obj[obj]
            assert len(configs) == 2751
            points = {
                1: (0.25, 1.20),
                131: (0.25, 2.50),
                132: (0.26, 1.20),
                2621: (0.45, 1.20),
                2751: (0.45, 2.50),
            }
            for idx, (vf, rmin) in points.items():
                cfg = configs[idx - 1]
                assert cfg.volume_fraction == pytest.approx(vf, abs=1e-12)
                assert cfg.r_min == pytest.approx(rmin, abs=1e-12)
        report("doe enumeration", "2751 per objective; corners 1/131/132/2621/2751 match")


@pytest.mark.slow
class TestPaperScaleSpotCheck:
    """Paper-scale 32^3 validation; hours of runtime, excluded from CI."""

    def test_optimize_32cubed_bulk(self):
        initial = voxelized_gyroid(resolution=(32, 32, 32))
        config = TopOptConfig(
            objective=Objective.BULK,
            volume_fraction=0.35,
            r_min=1.5,
            resolution=(32, 32, 32),
            max_iterations=1000,
        )
        result = optimize(config, initial)
        assert result.converged
        assert abs(result.achieved_volume - 0.35) <= 0.005
        assert binarization_fraction(result.final_grid) <= 0.05
        report(
            "32^3 spot check",
            f"converged in {result.iterations_used}, vol={result.achieved_volume:.4f}",
        )
