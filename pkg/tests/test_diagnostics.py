import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levycl.diagnostics import (bv_expectation_curve, ensemble_stats, entropy_residual,
                                kruzkov_levels, moment_supremum, report_json, time_continuity_fit)
from levycl.ensemble import mean_and_se, run_paths, solve_seed, tree_mean, tree_sum
from levycl.errors import InvalidParameterError
from levycl.flux import make_entropy_pair, make_flux
from levycl.grid import Boundary, Grid1D, norm_lp, project_initial
from levycl.noise import LevyMeasureSpec, sample_path
from levycl.scenarios import Box, Gaussian, Riemann, default_scenario
from levycl.solver import SchemeConfig, solve_path


def deterministic(cfg, grid, u0, copies=2):
    dtm = cfg.T / math.ceil(cfg.T / cfg.dt_max(grid) - 1e-12)
    tr = solve_path(cfg, grid, project_initial(u0, grid), sample_path(LevyMeasureSpec(), cfg.T, dtm, 0))
    return [tr] * copies


@pytest.fixture(scope="module")
def noisy():
    scen = default_scenario(record_times=None)
    g = scen.grid(64)
    trs = run_paths(solve_seed, [(scen.config, g, scen.u0, s) for s in range(40)])
    return scen, trs


FROZEN = SchemeConfig(make_flux("zero"), 0.5)
BURGERS = make_flux("burgers", u_bound=2.0)


class TestReductions:
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    def test_tree_sum_close_to_fsum(self, xs):
        assert tree_sum(np.array(xs)) == pytest.approx(math.fsum(xs), rel=1e-12, abs=1e-6)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.randoms())
    def test_mean_and_se_order_invariant(self, xs, r):
        ys = list(xs)
        r.shuffle(ys)
        m1, s1 = mean_and_se(np.array(xs))
        m2, s2 = mean_and_se(np.array(ys))
        assert m1.tobytes() == m2.tobytes() and s1.tobytes() == s2.tobytes()
        assert float(m1) == pytest.approx(np.mean(xs), rel=1e-12, abs=1e-9)
        assert float(s1) == pytest.approx(np.std(xs, ddof=1) / math.sqrt(len(xs)), rel=1e-9, abs=1e-9)

    def test_tree_mean_axis(self, rng):
        a = rng.normal(size=(7, 3))
        np.testing.assert_allclose(tree_mean(a, axis=0), a.mean(axis=0), rtol=1e-14)

    def test_needs_two_paths(self):
        g = Grid1D(0.0, 1.0, 8)
        trs = deterministic(FROZEN, g, Box(0.2, 0.6), copies=1)
        with pytest.raises(InvalidParameterError):
            ensemble_stats(trs)


class TestEnsembleStats:
    def test_std_error_definition(self, noisy):
        _, trs = noisy
        stats = ensemble_stats(trs, {"config_hash": "x"})
        mass = np.array([tr.diagnostics["mass"] for tr in trs])
        np.testing.assert_allclose(stats.mean("mass"), mass.mean(axis=0), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(stats.se("mass"), mass.std(axis=0, ddof=1) / math.sqrt(40),
                                   rtol=1e-9, atol=1e-15)
        assert stats.metadata["seeds"] == list(range(40))
        json.loads(report_json(stats.to_dict()))

    def test_invariant_under_path_reordering(self, noisy):
        _, trs = noisy
        a = ensemble_stats(trs).to_dict()
        b = ensemble_stats(trs[::-1]).to_dict()
        assert a["stats"] == b["stats"]

    def test_thread_count_invariance(self):
        scen = default_scenario(record_times=None)
        g = scen.grid(32)
        tasks = [(scen.config, g, scen.u0, s) for s in range(6)]
        one = ensemble_stats(run_paths(solve_seed, tasks, 1)).to_dict()
        two = ensemble_stats(run_paths(solve_seed, tasks, 2)).to_dict()
        assert report_json(one) == report_json(two)


class TestMoments:
    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_frozen_dynamics(self, p):
        g = Grid1D(0.0, 1.0, 32)
        cfg = SchemeConfig(make_flux("zero"), 0.5, record_times=(0.0, 0.25, 0.5))
        trs = deterministic(cfg, g, Gaussian(0.5, 0.1))
        val, se, _ = moment_supremum(trs, p)
        assert val == norm_lp(trs[0].snapshots[0], p) ** p or val == pytest.approx(
            norm_lp(trs[0].snapshots[0], p) ** p, rel=1e-14)
        assert se == 0.0

    def test_l1_non_increasing_for_deterministic_burgers(self):
        g = Grid1D(0.0, 3.0, 512)
        trs = deterministic(SchemeConfig(BURGERS, 1.0), g, Box(0.5, 1.0))
        l1 = g.dx * np.abs(trs[0].values()).sum(axis=1)
        assert np.all(np.diff(l1) <= 1e-12)
        assert moment_supremum(trs, 1)[0] == pytest.approx(l1[0], abs=1e-12)

    def test_refinement_stable(self):
        scen = default_scenario(record_times=(0.0, 0.25, 0.5))
        for p in (1, 2, 4):
            out = []
            for n in (64, 128):
                trs = run_paths(solve_seed, [(scen.config, scen.grid(n), scen.u0, s) for s in range(60)])
                out.append(moment_supremum(trs, p))
            (m1, s1, _), (m2, s2, _) = out
            assert abs(m1 - m2) <= 3 * math.hypot(s1, s2)


class TestBV:
    def test_deterministic_non_increasing(self):
        g = Grid1D(0.0, 2.0, 128)
        curve = bv_expectation_curve(deterministic(SchemeConfig(BURGERS, 0.5), g, Box(0.5, 1.0)))
        assert np.all(np.diff(curve["mean"]) <= 1e-12)
        assert curve["ratio"][0] == 1.0

    def test_constant_zero(self):
        g = Grid1D(0.0, 2.0, 32, Boundary.PERIODIC)
        from levycl.scenarios import Constant
        curve = bv_expectation_curve(deterministic(SchemeConfig(BURGERS, 0.5), g, Constant(0.7)))
        assert np.all(curve["mean"] == 0.0)

    def test_noisy_mean_below_initial(self, noisy):
        _, trs = noisy
        c = bv_expectation_curve(trs)
        assert c["mean"][-1] <= c["mean"][0] + 3 * c["std_error"][-1]


class TestEntropyResidual:
    def test_frozen_is_exactly_zero(self):
        g = Grid1D(0.0, 1.0, 32)
        trs = deterministic(FROZEN, g, Box(0.3, 0.6))
        rep = entropy_residual(trs, FROZEN, make_entropy_pair(0.1), 0.5)
        assert np.all(rep.mean_residual == 0.0) and rep.violation_rate == 0.0

    def test_smooth_advection_dissipation_vanishes(self):
        # residual <= 0 within rounding; total dissipation dx * sum is O(dx)
        totals = []
        for n in (64, 128, 256):
            g = Grid1D(0.0, 2.0, n)
            cfg = SchemeConfig(make_flux("linear", c=1.0), 0.5)
            trs = deterministic(cfg, g, Gaussian(0.6, 0.1))
            rep = entropy_residual(trs, cfg, make_entropy_pair(0.05), 0.3)
            assert rep.violation_rate == 0.0
            assert rep.mean_residual.max() <= 1e-12
            totals.append(-g.dx * rep.mean_residual.sum())
        assert totals[0] > totals[1] > totals[2] > 0
        assert totals[2] < 0.6 * totals[1] < 0.36 * totals[0]

    def test_shock_cell_dissipates(self):
        g = Grid1D(-1.0, 2.0, 128, Boundary.EXTRAPOLATE)
        cfg = SchemeConfig(BURGERS, 0.5)
        trs = deterministic(cfg, g, Riemann(1.0, 0.0, 0.0))
        rep = entropy_residual(trs, cfg, make_entropy_pair(0.05), 0.5)
        last = rep.mean_residual[-1]
        j = int(np.argmin(last))
        assert last[j] < -1e-3
        assert abs(g.centers[j] - 0.25) < 2 * g.dx  # shock at x = t/2
        assert rep.violation_rate == 0.0

    @pytest.mark.parametrize("xi", [0.05, 0.1])
    def test_noisy_violation_rate(self, noisy, xi):
        scen, trs = noisy
        for k in kruzkov_levels(trs, 3):
            rep = entropy_residual(trs, scen.config, make_entropy_pair(xi), k)
            assert 0.0 <= rep.violation_rate <= 0.01
            assert rep.n_tests == rep.mean_residual.size
            assert set(rep.to_dict()) >= {"xi", "k", "violation_rate", "quantiles", "n_paths"}

    def test_needs_every_step(self):
        scen = default_scenario()
        trs = run_paths(solve_seed, [(scen.config, scen.grid(32), scen.u0, s) for s in range(2)])
        with pytest.raises(InvalidParameterError):
            entropy_residual(trs, scen.config, make_entropy_pair(0.1), 0.5)


def test_kruzkov_levels(noisy):
    _, trs = noisy
    levels = kruzkov_levels(trs, 5)
    assert len(levels) == 5 and levels == sorted(levels)
    assert kruzkov_levels(trs, 1)[0] == pytest.approx(float(np.median(
        np.concatenate([t.values().ravel() for t in trs])[np.concatenate(
            [t.values().ravel() for t in trs]) != 0])))


class TestTimeContinuity:
    def test_frozen(self):
        g = Grid1D(0.0, 1.0, 64)
        trs = deterministic(FROZEN, g, Box(0.2, 0.5))
        assert time_continuity_fit(trs, (0.0, 1.0)) == (0.0, 0.0, 0.0)

    def test_transport_is_linear_in_gap(self):
        g = Grid1D(0.0, 2.0, 256, Boundary.PERIODIC)
        cfg = SchemeConfig(make_flux("linear", c=0.25), 0.5)
        trs = deterministic(cfg, g, lambda x: np.sin(np.pi * x))
        c1, c2, resid = time_continuity_fit(trs, (0.0, 2.0))
        assert c1 > 0 and abs(c2) < 0.05 * c1 * math.sqrt(0.5)
        assert resid < 0.01

    def test_noisy_fit(self, noisy):
        _, trs = noisy
        c1, c2, resid = time_continuity_fit(trs, (0.0, 2.0))
        assert c2 > 0 and resid < 0.2

    def test_needs_eight_times(self):
        g = Grid1D(0.0, 1.0, 16)
        cfg = SchemeConfig(BURGERS, 0.5, record_times=(0.0, 0.25, 0.5))
        with pytest.raises(InvalidParameterError):
            time_continuity_fit(deterministic(cfg, g, Box(0.2, 0.5)), (0.0, 1.0))
