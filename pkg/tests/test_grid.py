import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from levycl.errors import DimensionMismatchError, InvalidInitialDataError
from levycl.grid import (Boundary, Grid1D, LatticeState, bv_seminorm, l1_distance, norm_lp,
                         project_initial, read_csv, reconstruct, restrict, to_csv, write_csv)


def state(values, x_min=0.0, x_max=1.0, boundary=Boundary.ZERO):
    return LatticeState(np.asarray(values, float), Grid1D(x_min, x_max, len(values), boundary))


class TestGrid:
    def test_geometry(self):
        g = Grid1D(0.0, 2.0, 8)
        assert g.dx == 0.25
        np.testing.assert_allclose(g.centers, 0.125 + 0.25 * np.arange(8))
        np.testing.assert_allclose(g.edges[[0, -1]], [0.0, 2.0])

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1), (1.0, 1.0, 4), (1.0, 0.0, 4)])
    def test_rejects_degenerate(self, args):
        with pytest.raises(ValueError):
            Grid1D(*args)

    def test_state_checks(self):
        g = Grid1D(0.0, 1.0, 4)
        with pytest.raises(DimensionMismatchError):
            LatticeState(np.zeros(3), g)
        with pytest.raises(ValueError):
            LatticeState(np.array([0.0, np.nan, 0.0, 0.0]), g)

    def test_state_is_immutable(self):
        s = state([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 5.0


class TestProjection:
    def test_constant(self):
        s = project_initial(lambda x: 3.5 + 0 * x, Grid1D(-1.0, 3.0, 7))
        np.testing.assert_allclose(s.values, 3.5, rtol=0, atol=1e-15)
        assert s.time == 0.0

    def test_linear(self):
        s = project_initial(lambda x: x, Grid1D(0.0, 1.0, 4))
        np.testing.assert_allclose(s.values, [0.125, 0.375, 0.625, 0.875], atol=1e-15)

    def test_aligned_indicator(self):
        s = project_initial(lambda x: np.where(x < 0.5, 1.0, 0.0), Grid1D(0.0, 1.0, 4))
        np.testing.assert_array_equal(s.values, [1.0, 1.0, 0.0, 0.0])

    def test_scalar_only_callable(self):
        s = project_initial(lambda x: math.sin(x), Grid1D(0.0, math.pi, 4))
        exact = (np.cos(s.grid.edges[:-1]) - np.cos(s.grid.edges[1:])) / s.grid.dx
        np.testing.assert_allclose(s.values, exact, atol=1e-12)

    def test_non_finite(self):
        with pytest.raises(InvalidInitialDataError):
            project_initial(lambda x: np.full_like(x, np.inf), Grid1D(0.0, 1.0, 4))

    @given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
    def test_exact_on_degree_8(self, coeffs):
        # Oracle: antiderivative of the polynomial evaluated at the cell edges.
        p = np.polynomial.Polynomial(coeffs)
        g = Grid1D(-1.0, 1.5, 5)
        exact = np.diff(p.integ()(g.edges)) / g.dx
        np.testing.assert_allclose(project_initial(p, g).values, exact, rtol=0, atol=1e-12)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([2, 4, 8]))
    def test_restrict_commutes_with_projection(self, a, b, factor):
        lo, hi = min(a, b), max(a, b)
        u0 = lambda x: np.where((x >= lo) & (x < hi), 1.0, 0.0) * np.cos(3 * x)  # noqa: E731
        coarse = Grid1D(0.0, 1.0, 8)
        fine = coarse.refine(factor)
        lhs = restrict(project_initial(u0, fine, subdivisions=64), factor).values
        rhs = project_initial(u0, coarse, subdivisions=64 * factor).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestReconstruct:
    def test_examples(self):
        s = state([1.0, 2.0])
        assert reconstruct(s, 0.3) == 1.0
        assert reconstruct(s, 0.5) == 2.0
        assert reconstruct(s, -5.0) == 0.0
        assert reconstruct(s, 1.0) == 0.0

    def test_periodic_wraps(self):
        s = state([1.0, 2.0], boundary=Boundary.PERIODIC)
        assert reconstruct(s, 1.3) == 1.0
        assert reconstruct(s, -0.2) == 2.0


class TestNorms:
    def test_examples(self):
        assert norm_lp(state([2.0] * 5), 1) == pytest.approx(2.0)
        assert norm_lp(state([3.0, -4.0]), math.inf) == 4.0
        assert norm_lp(state([1.0] * 4), 2) == pytest.approx(1.0)

    def test_bv_examples(self):
        assert bv_seminorm(state([2.0, 2.0, 2.0], boundary=Boundary.PERIODIC)) == 0.0
        assert bv_seminorm(state([0.0, 1.0, 0.0])) == 2.0
        assert bv_seminorm(state([1.0, 1.0], boundary=Boundary.PERIODIC)) == 0.0
        assert bv_seminorm(state([1.0, 3.0], boundary=Boundary.PERIODIC)) == 4.0

    def test_l1_examples(self):
        a = state([1.0, 0.0])
        assert l1_distance(a, a) == 0.0
        assert l1_distance(a, state([0.0, 1.0])) == 1.0
        assert l1_distance(state([1.0] * 4), state([0.0] * 4)) == 1.0
        with pytest.raises(DimensionMismatchError):
            l1_distance(a, state([0.0, 0.0, 0.0]))

    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=32).filter(lambda v: len(v) % 2 == 0),
           st.lists(st.floats(-10, 10), min_size=32, max_size=32), st.floats(-5, 5),
           st.sampled_from([1, 2, 3.5, math.inf]))
    def test_norm_homogeneous_and_triangle(self, a, b, c, p):
        sa, sb = state(a), state(b[:len(a)])
        assert norm_lp(sa.with_values(c * sa.values), p) == pytest.approx(
            abs(c) * norm_lp(sa, p), rel=1e-12, abs=1e-12)
        lhs = norm_lp(sa.with_values(sa.values + sb.values), p)
        assert lhs <= norm_lp(sa, p) + norm_lp(sb, p) + 1e-9

    @given(st.lists(st.floats(-10, 10), min_size=16, max_size=16),
           st.sampled_from([Boundary.ZERO, Boundary.PERIODIC]), st.sampled_from([2, 4, 8]))
    def test_restrict_is_tv_non_increasing(self, v, bc, factor):
        fine = state(v, boundary=bc)
        assert bv_seminorm(restrict(fine, factor)) <= bv_seminorm(fine) + 1e-12

    def test_restrict_examples(self):
        np.testing.assert_array_equal(restrict(state([1.0, 1.0, 3.0, 3.0]), 2).values, [1.0, 3.0])
        np.testing.assert_array_equal(restrict(state([0.0, 2.0, 4.0, 6.0]), 2).values, [1.0, 5.0])
        np.testing.assert_array_equal(restrict(state([7.0] * 8), 4).values, [7.0, 7.0])
        with pytest.raises(DimensionMismatchError):
            restrict(state([1.0, 2.0, 3.0]), 2)


def test_csv_round_trip(tmp_path):
    s = project_initial(lambda x: np.exp(-x) / 3, Grid1D(0.0, 1.0, 16))
    text = to_csv(s)
    assert text.splitlines()[0] == "x,u" and len(text.splitlines()) == 17
    path = tmp_path / "s.csv"
    write_csv(s, path, comment="hash=abc")
    x, u = read_csv(path)
    np.testing.assert_array_equal(x, s.grid.centers)
    np.testing.assert_array_equal(u, s.values)
