import numpy as np
import pytest

from gyrox.grids import DensityGrid
from gyrox.homogenize import Homogenizer, MaterialModel
from gyrox.topopt import (
    ContinuationSchedule,
    DesignState,
    Objective,
    TopOptConfig,
    binarization_fraction,
    build_filter,
    heaviside_derivative,
    heaviside_project,
    objective_and_sensitivities,
    objective_value,
    oc_update,
    optimize,
)


def brute_force_filter(resolution, r_min):
    """Independent cone-weight construction by direct pair enumeration."""
    ex, ey, ez = resolution
    n = ex * ey * ez
    coords = np.array(
        [(i, j, k) for k in range(ez) for j in range(ey) for i in range(ex)], dtype=float
    )
    w = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            d = np.abs(coords[a] - coords[b])
            d = np.minimum(d, np.array(resolution) - d)  # periodic wrap
            dist = np.sqrt((d**2).sum())
            if dist < r_min:
                w[a, b] = r_min - dist
    return w / w.sum(axis=1, keepdims=True)


class TestBuildFilter:
    def test_rmin_one_is_identity(self):
        f = build_filter((4, 4, 4), 1.0)
        dense = f.weights.toarray()
        assert np.allclose(dense, np.eye(64), atol=1e-15)

    def test_rows_sum_to_one(self):
        f = build_filter((5, 4, 3), 1.8)
        sums = np.asarray(f.weights.sum(axis=1)).ravel()
        assert np.abs(sums - 1.0).max() < 1e-12

    def test_matches_brute_force_enumeration(self):
        for res, rmin in (((4, 4, 4), 1.5), ((4, 3, 5), 2.2), ((4, 4, 4), 2.6)):
            got = build_filter(res, rmin).weights.toarray()
            want = brute_force_filter(res, rmin)
            assert np.allclose(got, want, atol=1e-12), (res, rmin)

    def test_constant_field_is_fixed_point(self):
        f = build_filter((6, 6, 6), 2.0)
        x = np.full(216, 0.37)
        assert np.abs(f.apply(x) - 0.37).max() < 1e-12

    def test_neighbor_weights_follow_cone(self):
        # rmin=1.5 couples self, face neighbors (d=1), and edge diagonals (d=sqrt 2)
        f = build_filter((6, 6, 6), 1.5)
        row = f.weights.getrow(0).toarray().ravel()
        nnz = (row > 0).sum()
        assert nnz == 19
        total = 1.5 + 6 * 0.5 + 12 * (1.5 - np.sqrt(2))
        assert row[0] == pytest.approx(1.5 / total, rel=1e-12)


class TestHeaviside:
    def test_beta_zero_is_identity(self):
        rho = np.linspace(0, 1, 11)
        assert np.abs(heaviside_project(rho, 0.0) - rho).max() <= 1e-12

    def test_endpoints_fixed_for_all_beta(self):
        for beta in (1.0, 2.0, 8.0, 64.0, 512.0):
            assert heaviside_project(np.array([0.0]), beta)[0] == 0.0
            assert heaviside_project(np.array([1.0]), beta)[0] == pytest.approx(1.0, abs=1e-15)

    def test_half_density_saturates_at_high_beta(self):
        v = heaviside_project(np.array([0.5]), 512.0)[0]
        assert v == pytest.approx(1.0, abs=1e-12)

    def test_output_in_unit_interval(self):
        rho = np.linspace(0, 1, 101)
        for beta in (0.0, 1.0, 32.0, 512.0):
            h = heaviside_project(rho, beta)
            assert h.min() >= 0.0 and h.max() <= 1.0 + 1e-15

    def test_derivative_beta_zero_is_one(self):
        rho = np.linspace(0, 1, 7)
        assert np.allclose(heaviside_derivative(rho, 0.0), 1.0, atol=1e-15)

    def test_derivative_matches_finite_difference(self):
        h = 1e-6
        for rho in (0.1, 0.5, 0.9):
            for beta in (1.0, 8.0, 64.0):
                fd = (
                    heaviside_project(np.array([rho + h]), beta)[0]
                    - heaviside_project(np.array([rho - h]), beta)[0]
                ) / (2 * h)
                an = heaviside_derivative(np.array([rho]), beta)[0]
                assert abs(an - fd) <= 1e-6

    def test_derivative_value_at_zero(self):
        assert heaviside_derivative(np.array([0.0]), 8.0)[0] == pytest.approx(
            8.0 + np.exp(-8.0), rel=1e-12
        )

    def test_derivative_strictly_positive(self):
        rho = np.linspace(0, 1, 33)
        for beta in (0.0, 1.0, 512.0):
            assert heaviside_derivative(rho, beta).min() > 0.0


class TestSensitivities:
    @pytest.mark.parametrize("objective", [Objective.BULK, Objective.SHEAR])
    def test_adjoint_matches_central_differences(self, objective):
        rng = np.random.default_rng(17)
        res = (4, 4, 4)
        config = TopOptConfig(objective=objective, volume_fraction=0.4, r_min=1.5, resolution=res)
        filt = build_filter(res, config.r_min)
        hom = Homogenizer(res, material=config.material, solver="direct")
        eta = rng.uniform(0.1, 0.9, 64)
        beta = 4.0

        def objective_of(e):
            rho_h = heaviside_project(filt.apply(e), beta)
            return objective_value(hom.homogenize(rho_h).tensor, config.objective)

        rho = filt.apply(eta)
        state = DesignState(eta, rho, heaviside_project(rho, beta), beta, 0)
        _, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
        h = 1e-5
        for idx in rng.choice(64, 5, replace=False):
            ep, em = eta.copy(), eta.copy()
            ep[idx] += h
            em[idx] -= h
            fd = (objective_of(ep) - objective_of(em)) / (2 * h)
            assert abs(df[idx] - fd) / abs(fd) <= 1e-3

    def test_uniform_grid_gives_uniform_sensitivities(self):
        res = (4, 4, 4)
        config = TopOptConfig(volume_fraction=0.4, r_min=1.5, resolution=res)
        filt = build_filter(res, config.r_min)
        hom = Homogenizer(res, material=config.material, solver="direct")
        eta = np.full(64, 0.5)
        rho = filt.apply(eta)
        state = DesignState(eta, rho, heaviside_project(rho, 2.0), 2.0, 0)
        _, df, dv, _ = objective_and_sensitivities(state, config, hom, filt)
        assert np.abs(df - df[0]).max() <= 1e-9 * abs(df[0])
        assert np.abs(dv - dv[0]).max() <= 1e-12 * abs(dv[0])

    def test_bulk_sensitivities_nonnegative_on_gyroid(self):
        from gyrox.tpms import voxelized_gyroid

        res = (8, 8, 8)
        config = TopOptConfig(volume_fraction=0.4, r_min=1.5, resolution=res)
        filt = build_filter(res, config.r_min)
        hom = Homogenizer(res, material=config.material)
        eta = np.clip(voxelized_gyroid(resolution=res).densities, 0.01, 1.0)
        rho = filt.apply(eta)
        state = DesignState(eta, rho, heaviside_project(rho, 1.0), 1.0, 0)
        _, df, _, _ = objective_and_sensitivities(state, config, hom, filt)
        assert df.min() >= 0.0


class TestOcUpdate:
    def test_uniform_fixed_point(self):
        res = (4, 4, 4)
        filt = build_filter(res, 1.5)
        eta = np.full(64, 0.5)
        df = np.full(64, 2.0)
        dv = np.full(64, 1.0 / 64)
        beta = 0.0
        target = float(heaviside_project(filt.apply(eta), beta).mean())
        eta_new = oc_update(eta, df, dv, target, 0.2, filt, beta)
        assert np.abs(eta_new - eta).max() < 1e-3

    def test_volume_hit_within_tolerance(self):
        rng = np.random.default_rng(3)
        res = (4, 4, 4)
        filt = build_filter(res, 1.5)
        eta = rng.uniform(0.2, 0.8, 64)
        df = rng.uniform(0.5, 2.0, 64)
        dv = np.full(64, 1.0 / 64)
        beta = 2.0
        vol0 = float(heaviside_project(filt.apply(eta), beta).mean())
        target = vol0 - 0.03  # reachable within the move limit
        eta_new = oc_update(eta, df, dv, target, 0.2, filt, beta)
        vol = float(heaviside_project(filt.apply(eta_new), beta).mean())
        assert abs(vol - target) <= 1e-4

    def test_move_limit_respected(self):
        rng = np.random.default_rng(4)
        res = (4, 4, 4)
        filt = build_filter(res, 1.5)
        eta = rng.uniform(0.2, 0.8, 64)
        df = rng.uniform(0.1, 10.0, 64)
        dv = np.full(64, 1.0 / 64)
        eta_new = oc_update(eta, df, dv, 0.4, 0.2, filt, 1.0)
        assert np.abs(eta_new - eta).max() <= 0.2 + 1e-12

    def test_bounds_respected(self):
        rng = np.random.default_rng(5)
        res = (4, 4, 4)
        filt = build_filter(res, 1.2)
        eta = rng.uniform(0.0, 1.0, 64)
        df = rng.uniform(0.1, 10.0, 64)
        dv = np.full(64, 1.0 / 64)
        eta_new = oc_update(eta, df, dv, 0.5, 0.2, filt, 4.0)
        assert eta_new.min() >= 0.0 and eta_new.max() <= 1.0

    def test_unreachable_target_ramps_maximally(self):
        res = (4, 4, 4)
        filt = build_filter(res, 1.5)
        eta = np.full(64, 0.9)
        df = np.full(64, 1.0)
        dv = np.full(64, 1.0 / 64)
        eta_new = oc_update(eta, df, dv, 0.05, 0.1, filt, 0.0)
        # best effort: every element at its lower move bound
        assert np.allclose(eta_new, 0.8, atol=1e-12)


class TestBinarizationFraction:
    def test_binary_grid_is_zero(self):
        g = DensityGrid((2, 2, 2), np.array([0, 1, 1, 0, 0, 1, 0, 1], dtype=float))
        assert binarization_fraction(g) == 0.0

    def test_all_half_grid_is_one(self):
        g = DensityGrid((2, 2, 2), np.full(8, 0.5))
        assert binarization_fraction(g) == 1.0

    def test_band_edges_excluded(self):
        g = DensityGrid((2, 2, 2), np.array([0.05, 0.95, 0.0500001, 0.9499999, 0, 1, 0, 1]))
        assert binarization_fraction(g) == 0.25


class TestOptimizeSmall:
    """Fast end-to-end runs at coarse resolution: contracts, not quality."""

    @pytest.fixture(scope="class")
    def result6(self):
        from gyrox.tpms import voxelized_gyroid

        initial = voxelized_gyroid(resolution=(6, 6, 6))
        config = TopOptConfig(
            objective=Objective.BULK,
            volume_fraction=0.4,
            r_min=1.1,
            resolution=(6, 6, 6),
            max_iterations=250,
            schedule=ContinuationSchedule(double_every=10),
            volume_step=0.02,
        )
        return config, optimize(config, initial)

    def test_volume_constraint_met(self, result6):
        config, res = result6
        assert abs(res.achieved_volume - config.volume_fraction) <= 1e-3

    def test_densities_in_unit_interval(self, result6):
        _, res = result6
        assert res.final_grid.densities.min() >= 0.0
        assert res.final_grid.densities.max() <= 1.0

    def test_beta_nondecreasing_and_capped(self, result6):
        _, res = result6
        betas = [t.beta for t in res.trace]
        assert all(b2 >= b1 for b1, b2 in zip(betas, betas[1:]))
        assert max(betas) <= 512.0

    def test_trace_length_matches_iterations(self, result6):
        _, res = result6
        assert len(res.trace) == res.iterations_used

    def test_determinism(self, result6):
        from gyrox.tpms import voxelized_gyroid

        config, res = result6
        rerun = optimize(config, voxelized_gyroid(resolution=(6, 6, 6)))
        assert np.array_equal(rerun.final_grid.densities, res.final_grid.densities)
        assert rerun.objective_value == res.objective_value
        assert [t.objective for t in rerun.trace] == [t.objective for t in res.trace]

    def test_resolution_mismatch_rejected(self):
        from gyrox.tpms import voxelized_gyroid

        config = TopOptConfig(resolution=(8, 8, 8))
        with pytest.raises(ValueError):
            optimize(config, voxelized_gyroid(resolution=(6, 6, 6)))
