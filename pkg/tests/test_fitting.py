import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slfcodec.basis import BasisSpec, basis_matrix
from slfcodec.errors import InvalidArgument, NumericalFailure
from slfcodec.fitting import (FitConfig, check_coefficients, fit_ridge, fit_smoothed, neighbor_average,
                              neighbor_table, point_objective, solve_slf)
from slfcodec.mapping import ObservationSet, PointCloud
from slfcodec.renderer import reconstruct_colors

from oracles import compare, oracle_neighbors, oracle_normal_equations, oracle_solve_slf


def _rel(got, want):
    return float(np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-300))


class TestFitRidge:
    def test_zero_colors(self):
        G = np.random.default_rng(0).normal(size=(6, 4))
        assert np.all(fit_ridge(np.zeros(6), G, 0.8) == 0)

    def test_identity_system(self):
        c = np.array([1.0, -2.0, 3.5, 0.25])
        assert np.allclose(fit_ridge(c, np.eye(4), 0.0), c, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_normal_equations(self, seed):
        rng = np.random.default_rng(seed)
        G = rng.normal(size=(6, 4))
        c = rng.normal(size=6)
        assert _rel(fit_ridge(c, G, 0.5), oracle_normal_equations(c, G, 0.5)) < 1e-8

    def test_underdetermined_with_lambda(self):
        rng = np.random.default_rng(1)
        G = rng.normal(size=(3, 8))
        c = rng.normal(size=3)
        assert _rel(fit_ridge(c, G, 0.8), oracle_normal_equations(c, G, 0.8)) < 1e-8

    def test_singular(self):
        G = np.ones((5, 2))
        with pytest.raises(NumericalFailure):
            fit_ridge(np.ones(5), G, 0.0)
        with pytest.raises(NumericalFailure):
            fit_ridge(np.ones(1), np.ones((1, 2)), 0.0)

    def test_oracle_also_rejects_singular(self):
        with pytest.raises(NumericalFailure):
            oracle_normal_equations(np.ones(5), np.ones((5, 2)), 0.0)

    def test_multichannel(self):
        rng = np.random.default_rng(2)
        G = rng.normal(size=(9, 5))
        C = rng.normal(size=(9, 3))
        out = fit_ridge(C, G, 0.8)
        for ch in range(3):
            assert _rel(out[:, ch], oracle_normal_equations(C[:, ch], G, 0.8)) < 1e-8

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            fit_ridge(np.ones(3), np.ones((4, 2)), 0.5)
        with pytest.raises(InvalidArgument):
            fit_ridge(np.ones(4), np.ones((4, 2)), -1.0)

    @given(st.integers(1, 12), st.integers(1, 6), st.floats(0.05, 10), st.integers(0, 2 ** 31))
    @settings(max_examples=80, deadline=None)
    def test_norm_bound(self, m, n, lam, seed):
        rng = np.random.default_rng(seed)
        G = rng.normal(size=(m, n))
        c = rng.normal(size=m) * 50
        a = fit_ridge(c, G, lam)
        assert np.linalg.norm(a) <= np.linalg.norm(G.T @ c) / lam * (1 + 1e-9) + 1e-12


class TestFitSmoothed:
    def test_beta_zero_is_ridge(self):
        rng = np.random.default_rng(3)
        G = rng.normal(size=(6, 4))
        c = rng.normal(size=6)
        a = fit_smoothed(c, G, 0.8, 0.0, rng.normal(size=4))
        assert np.abs(a - fit_ridge(c, G, 0.8)).max() < 1e-12

    def test_no_observations(self):
        bar = np.array([1.0, -2.0, 0.5])
        a = fit_smoothed(np.zeros(0), np.zeros((0, 3)), 0.8, 1.3, bar)
        assert np.allclose(a, 1.3 / 2.1 * bar, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_normal_equations(self, seed):
        rng = np.random.default_rng(100 + seed)
        G = rng.normal(size=(6, 4))
        c = rng.normal(size=6)
        bar = rng.normal(size=4)
        want = oracle_normal_equations(c, G, 0.8, 1.3, bar)
        assert _rel(fit_smoothed(c, G, 0.8, 1.3, bar), want) < 1e-8

    def test_is_minimizer(self):
        rng = np.random.default_rng(4)
        G = rng.normal(size=(7, 4))
        c = rng.normal(size=7)
        bar = rng.normal(size=4)
        a = fit_smoothed(c, G, 0.8, 1.3, bar)
        f0 = point_objective(c, G, a, 0.8, 1.3, bar)
        for _ in range(20):
            assert point_objective(c, G, a + 1e-3 * rng.normal(size=4), 0.8, 1.3, bar) > f0

    def test_bad_alpha_bar(self):
        with pytest.raises(InvalidArgument):
            fit_smoothed(np.ones(4), np.ones((4, 2)), 0.8, 1.3, np.zeros(3))


class TestNeighbors:
    def test_line(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0], [3.5, 0, 0], [10, 0, 0.0]])
        coeffs = np.arange(5 * 3 * 2, dtype=float).reshape(5, 3, 2)
        nb = oracle_neighbors(pts, 2)
        assert nb[2].tolist() == [3, 1]
        got = neighbor_average(PointCloud(pts), coeffs, 2, 2)
        assert np.array_equal(got, (coeffs[3] + coeffs[1]) / 2)

    def test_k1_returns_nearest(self):
        pts = np.random.default_rng(5).normal(size=(10, 3))
        coeffs = np.random.default_rng(6).normal(size=(10, 3, 4))
        nb = oracle_neighbors(pts, 1)
        for p in range(10):
            assert np.array_equal(neighbor_average(PointCloud(pts), coeffs, p, 1), coeffs[nb[p, 0]])

    def test_shared_vector(self):
        v = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        coeffs = np.broadcast_to(v, (6, 3, 2))
        pts = np.random.default_rng(7).normal(size=(6, 3))
        assert np.allclose(neighbor_average(PointCloud(pts), coeffs, 0, 4), v)

    def test_ties_to_lower_index(self):
        # grid: many equal distances
        g = np.array([[x, y, 0.0] for x in range(4) for y in range(4)])
        assert np.array_equal(neighbor_table(g, 4), oracle_neighbors(g, 4))

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_exhaustive_sort(self, seed):
        pts = np.round(np.random.default_rng(seed).uniform(0, 3, (80, 3)))  # duplicates and ties
        assert np.array_equal(neighbor_table(pts, 8), oracle_neighbors(pts, 8))

    def test_k_too_large(self):
        with pytest.raises(InvalidArgument):
            neighbor_table(np.zeros((3, 3)), 3)


def _dense_directions(side_t=32, side_g=16):
    u = (np.arange(side_t) + 0.5) / side_t
    v = (np.arange(side_g) + 0.5) / side_g
    uu, vv = np.meshgrid(u, v)
    return np.column_stack([uu.ravel() * 2 * math.pi - math.pi, vv.ravel() * 2 - 1])


def _random_observations(rng, positions, per_point, spec_count_hint=8):
    rows = []
    for p in range(len(positions)):
        m = per_point[p]
        d = np.column_stack([rng.uniform(-math.pi, math.pi, m), rng.uniform(-1, 1, m)])
        rows.append((np.full(m, p), d, rng.uniform(0, 255, (m, 3))))
    idx = np.concatenate([r[0] for r in rows])
    return ObservationSet(len(positions), idx, np.concatenate([r[1] for r in rows]),
                          np.concatenate([r[2] for r in rows]), np.arange(idx.size))


class TestSolveSlf:
    spec = BasisSpec(2, 2, 1)

    def _scene(self, seed=0, points=3, per=40):
        rng = np.random.default_rng(seed)
        pos = rng.normal(size=(points, 3))
        obs = _random_observations(rng, pos, [per] * points)
        return PointCloud(pos), obs

    def test_zero_iterations_is_ridge(self):
        cloud, obs = self._scene()
        a = solve_slf(obs, cloud, self.spec, FitConfig(max_iters=0))
        for p in range(len(cloud)):
            s = obs.for_point(p)
            want = fit_ridge(obs.colors[s], basis_matrix(self.spec, obs.directions[s]), 0.8).T
            assert np.array_equal(a[p], want)

    def test_no_observations_no_beta(self):
        cloud = PointCloud(np.random.default_rng(0).normal(size=(5, 3)))
        a = solve_slf(ObservationSet.empty(5), cloud, self.spec, FitConfig(beta=0.0, neighbors=2))
        assert a.shape == (5, 3, self.spec.count) and np.all(a == 0)

    def test_matches_reference_iteration(self):
        cloud, obs = self._scene(points=3, per=60)
        blocks = []
        for p in range(3):
            s = obs.for_point(p)
            blocks.append((basis_matrix(self.spec, obs.directions[s]), obs.colors[s]))
        want = oracle_solve_slf(blocks, cloud.positions, self.spec.count, 0.8, 1.3, 10, 2)
        cfg = FitConfig(max_iters=10, neighbors=2, convergence_tol=1e-300)
        got = solve_slf(obs, cloud, self.spec, cfg)
        assert compare("slf", got, want, 1e-8, relative=True).passed

    def test_point_without_observations_gets_pulled(self):
        rng = np.random.default_rng(9)
        pos = rng.normal(size=(6, 3))
        obs = _random_observations(rng, pos, [30, 30, 30, 30, 30, 0])
        a = solve_slf(obs, PointCloud(pos), self.spec, FitConfig(max_iters=3, neighbors=2))
        assert np.abs(a[5]).max() > 0

    def test_frozen_objective_nonincreasing(self):
        cloud, obs = self._scene(seed=1, points=12, per=25)
        systems = []
        for p in range(len(cloud)):
            s = obs.for_point(p)
            systems.append((basis_matrix(self.spec, obs.directions[s]), obs.colors[s]))
        diffs = []

        def cb(k, prev, bar, new):
            for p, (G, c) in enumerate(systems):
                before = point_objective(c, G, prev[p].T, 0.8, 1.3, bar[p].T)
                after = point_objective(c, G, new[p].T, 0.8, 1.3, bar[p].T)
                diffs.append(after - before)

        solve_slf(obs, cloud, self.spec, FitConfig(max_iters=5, neighbors=3), callback=cb)
        assert diffs and max(diffs) <= 1e-9

    def test_order_independent_and_thread_independent(self):
        cloud, obs = self._scene(seed=2, points=30, per=20)
        cfg = FitConfig(max_iters=4, neighbors=4)
        a = solve_slf(obs, cloud, self.spec, cfg, threads=1)
        b = solve_slf(obs, cloud, self.spec, cfg, threads=4)
        assert np.array_equal(a, b)

    def test_dc_dominance_constant_color(self):
        spec = BasisSpec()
        d = _dense_directions()
        v = np.array([200.0, 120.0, 40.0])
        obs = ObservationSet(1, np.zeros(len(d), dtype=int), d, np.tile(v, (len(d), 1)), np.arange(len(d)))
        a = solve_slf(obs, PointCloud(np.zeros((1, 3))), spec, FitConfig(max_iters=0))
        grid = _dense_directions(64, 32)
        colors = reconstruct_colors(np.broadcast_to(a, (len(grid),) + a.shape[1:]), spec, grid, clamp=False)
        assert np.abs(colors - v).max() < 0.01 * v.min()

    def test_singular_reports_point(self):
        cloud, obs = self._scene(points=3, per=2)
        with pytest.raises(NumericalFailure) as info:
            solve_slf(obs, cloud, self.spec, FitConfig(lam=0.0, max_iters=0))
        assert info.value.point_index == 0

    def test_point_count_mismatch(self):
        cloud, obs = self._scene()
        with pytest.raises(InvalidArgument):
            solve_slf(obs, PointCloud(np.zeros((2, 3))), self.spec)


class TestFitConfig:
    @pytest.mark.parametrize("kw", [dict(lam=-1), dict(beta=-0.1), dict(max_iters=-1), dict(neighbors=0),
                                    dict(convergence_tol=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgument):
            FitConfig(**kw)

    def test_defaults(self):
        cfg = FitConfig()
        assert (cfg.lam, cfg.beta, cfg.max_iters, cfg.neighbors) == (0.8, 1.3, 10, 8)


def test_check_coefficients():
    spec = BasisSpec(2, 1, 0)
    check_coefficients(np.zeros((4, 3, 2)), spec, 4)
    with pytest.raises(InvalidArgument):
        check_coefficients(np.zeros((4, 3, 3)), spec)
    with pytest.raises(InvalidArgument):
        check_coefficients(np.full((1, 3, 2), np.nan), spec)
