import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phinehari.errors import ConfigError
from phinehari.grid import (
    Field,
    Weight,
    average_transpose,
    build_grid,
    cell_average,
    cell_gradient,
    cell_gradients,
    gradient_matrices,
    gradient_transpose,
    integrate,
    lp_integral,
    luxemburg_norm,
    sobolev_norm,
)
from phinehari.nfunction import power, sumpower

PLASTIC = 1.3247179572447460  # real root of k^3 = k + 1


def _sinsin(grid):
    coords = grid.node_coords()
    return Field(grid, np.prod([np.sin(np.pi * c) for c in coords], axis=0))


class TestGrid:
    def test_counts_2d(self):
        g = build_grid(2, 5)
        assert (g.n_nodes, g.n_cells, g.interior_mask().sum()) == (25, 16, 9)
        assert g.h == 0.25 and g.cell_volume == 0.0625

    def test_counts_3d(self):
        g = build_grid(3, 4)
        assert g.shape == (4, 4, 4) and g.cell_shape == (3, 3, 3)
        assert g.boundary_mask().sum() == 64 - 8

    @pytest.mark.parametrize("dim,n", [(0, 5), (4, 5), (2, 2), (2, 4.5)])
    def test_rejects_bad_sizes(self, dim, n):
        with pytest.raises(ConfigError):
            build_grid(dim, n)

    def test_cell_centres(self):
        x, = build_grid(1, 5).cell_centers()
        np.testing.assert_allclose(x, [0.125, 0.375, 0.625, 0.875])


class TestFieldWeight:
    def test_boundary_zeroed_and_readonly(self):
        g = build_grid(2, 5)
        u = Field(g, np.ones(g.shape))
        assert u.values[0].sum() == 0 and u.values[2, 2] == 1
        with pytest.raises(ValueError):
            u.values[2, 2] = 3.0

    def test_shape_checked(self):
        with pytest.raises(ConfigError):
            Field(build_grid(2, 5), np.ones((4, 4)))

    def test_weight_finite(self):
        g = build_grid(2, 5)
        with pytest.raises(ConfigError):
            Weight(g, np.full(g.cell_shape, np.inf))
        w = Weight(g, -2.0)
        assert w.sup_norm() == 2.0 and w.positive_part().max() == 0.0

    def test_arithmetic(self):
        g = build_grid(1, 5)
        u = Field(g, [0, 1, -2, 3, 0])
        np.testing.assert_array_equal((2 * u - u).values, u.values)
        np.testing.assert_array_equal(abs(-u).values, [0, 1, 2, 3, 0])


class TestOperators:
    def test_gradient_of_linear_field(self):
        g = build_grid(2, 6)
        x, y = g.node_coords()
        grads = cell_gradients(g, 2 * x - 3 * y)
        np.testing.assert_allclose(grads[0], 2.0)
        np.testing.assert_allclose(grads[1], -3.0)

    def test_hat_gradient_pattern(self):
        g = build_grid(2, 5)
        vals = np.zeros(g.shape)
        vals[2, 2] = 1.0
        gx, gy = cell_gradients(g, vals)
        np.testing.assert_allclose([gx.sum(), gy.sum()], 0.0, atol=1e-15)
        np.testing.assert_array_equal(gx, -gx[::-1, :])
        np.testing.assert_array_equal(gy, -gy[:, ::-1])
        np.testing.assert_array_equal(gx, gy.T)
        # the four cells touching the peak carry slope +-1/(2h)
        np.testing.assert_allclose(np.abs(gx[1:3, 1:3]), 2.0)
        assert np.count_nonzero(gx) == 4

    def test_single_cell(self):
        g = build_grid(2, 5)
        u = _sinsin(g)
        np.testing.assert_allclose(cell_gradient(u, (1, 2)), cell_gradients(g, u)[:, 1, 2])

    @pytest.mark.parametrize("dim,n", [(1, 9), (2, 7), (3, 5)])
    def test_sparse_matrices_match(self, dim, n):
        g = build_grid(dim, n)
        u = np.random.default_rng(dim).standard_normal(g.shape)
        mats = gradient_matrices(g)
        grads = cell_gradients(g, u)
        assert len(mats) == dim
        for i in range(dim):
            np.testing.assert_allclose(mats[i] @ u.ravel(), grads[i].ravel(), atol=1e-12)

    def test_midpoint_integral_is_tensor_trapezoid(self):
        # averaging corners turns the midpoint rule into the trapezoid rule
        g = build_grid(2, 65)
        ref = (1.0 / np.tan(np.pi / 128) / 64) ** 2
        np.testing.assert_allclose(integrate(g, cell_average(g, _sinsin(g))), ref, rtol=1e-14)

    @given(arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)),
           arrays(np.float64, (2, 5, 5), elements=st.floats(-1e3, 1e3)))
    @settings(max_examples=50, deadline=None)
    def test_gradient_transpose_is_adjoint(self, u, flux):
        g = build_grid(2, 6)
        lhs = np.sum(cell_gradients(g, u) * flux)
        rhs = np.sum(u * gradient_transpose(g, flux))
        assert abs(lhs - rhs) <= 1e-9 * (1 + np.abs(u).sum() * np.abs(flux).sum())

    @given(arrays(np.float64, (5, 5, 5), elements=st.floats(-1e3, 1e3)),
           arrays(np.float64, (4, 4, 4), elements=st.floats(-1e3, 1e3)))
    @settings(max_examples=30, deadline=None)
    def test_average_transpose_is_adjoint(self, u, c):
        g = build_grid(3, 5)
        lhs = np.sum(cell_average(g, u) * c)
        rhs = np.sum(u * average_transpose(g, c))
        assert abs(lhs - rhs) <= 1e-9 * (1 + np.abs(u).sum() * np.abs(c).sum())


class TestNorms:
    def test_luxemburg_two_three_constant(self):
        g = build_grid(2, 9)
        k = luxemburg_norm(sumpower(2, 3), np.ones(g.cell_shape), g)
        np.testing.assert_allclose(k, PLASTIC, rtol=1e-14)

    def test_zero_field(self):
        g = build_grid(2, 5)
        assert luxemburg_norm(power(2), Field(g, np.zeros(g.shape))) == 0.0

    def test_raw_cells_need_grid(self):
        with pytest.raises(ConfigError):
            luxemburg_norm(power(2), np.ones(4))

    @given(st.floats(1.1, 5.0), arrays(np.float64, (4, 4), elements=st.floats(1e-3, 1e3)))
    @settings(max_examples=40, deadline=None)
    def test_power_norm_is_lp(self, p, vals):
        g = build_grid(2, 5)
        ref = (np.sum(vals**p) * g.cell_volume) ** (1 / p)
        np.testing.assert_allclose(luxemburg_norm(power(p), vals, g), ref, rtol=1e-10)

    @given(st.floats(1e-3, 1e3))
    @settings(max_examples=30, deadline=None)
    def test_homogeneous(self, c):
        g = build_grid(2, 9)
        u = _sinsin(g)
        f = sumpower(1.5, 2.5)
        for kind in ("sum", "gradient"):
            np.testing.assert_allclose(sobolev_norm(f, c * u, kind), c * sobolev_norm(f, u, kind), rtol=1e-9)

    def test_gradient_norm_for_laplacian(self):
        g = build_grid(2, 17)
        u = _sinsin(g)
        grads = cell_gradients(g, u)
        ref = np.sqrt(np.sum(grads**2) * g.cell_volume)
        np.testing.assert_allclose(sobolev_norm(power(2), u, "gradient"), ref, rtol=1e-12)

    def test_unknown_kind(self):
        g = build_grid(2, 5)
        with pytest.raises(ConfigError):
            sobolev_norm(power(2), _sinsin(g), "max")

    def test_lp_integral(self):
        g = build_grid(1, 3)
        u = Field(g, [0.0, 2.0, 0.0])
        # both cells average to 1
        assert lp_integral(u, Weight.constant(g, 3.0), 2.5) == pytest.approx(3.0)
        with pytest.raises(ConfigError):
            lp_integral(u, Weight.constant(g, 1.0), 1.0)
