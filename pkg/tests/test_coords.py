"""Tests for the conformal chart, the discrete operators and the weighted Neumann trace."""

import math

import numpy as np
import pytest

from carleman_lab.core.coords import (
    ConformalChart,
    apply_cartesian_operator,
    apply_conformal_operator,
    bulk_residual,
    chart_integral,
    dirichlet_energy,
    from_conformal,
    neumann_trace,
    to_conformal,
    u_to_v,
    v_to_u,
)
from carleman_lab.core.errors import ExtrapolationError, GridDomainError, ParameterError
from carleman_lab.core.extension import homogeneous_solution
from carleman_lab.core.grid import Chart, FractionalParams, GridFunction, HalfPlaneGrid

ORDERS = [0.3, 0.5, 0.75]


def _box(s: float, size: int = 65) -> HalfPlaneGrid:
    return HalfPlaneGrid.box(1.0, 1.0, size, FractionalParams(s))


class TestCartesianOperator:
    @pytest.mark.parametrize("s", ORDERS)
    def test_weighted_harmonic_power(self, s):
        # div(y2^(1-2s) grad y2^(2s)) = 0 and the harmonic face weights reproduce it
        grid = _box(s)
        w = GridFunction.from_function(grid, lambda y1, y2: np.ones_like(y1) * y2 ** (2 * s))
        residual = apply_cartesian_operator(w)
        assert np.abs(residual.values).max() <= 1e-9

    def test_harmonic_quadratic(self):
        grid = _box(0.5)
        w = homogeneous_solution(2, 0.5, grid)
        assert np.abs(apply_cartesian_operator(w).values).max() <= 1e-7

    def test_interior_shape(self):
        grid = _box(0.5, 17)
        w = GridFunction.from_function(grid, lambda y1, y2: y1 * y2)
        assert apply_cartesian_operator(w).values.shape == (15, 15)

    def test_bulk_residual_masks_boundary(self):
        grid = _box(0.5, 17)
        values = np.zeros(grid.shape)
        values[:, 0] = 5.0
        f = GridFunction(grid=grid, values=values)
        assert bulk_residual(f) == 0.0


class TestNeumannTrace:
    @pytest.mark.parametrize("s", ORDERS)
    def test_weighted_flux_of_power(self, s):
        grid = _box(s)
        w = GridFunction.from_function(grid, lambda y1, y2: (1.0 + y1**2) * y2 ** (2 * s) + y2**2)
        trace = neumann_trace(w)
        np.testing.assert_allclose(trace.values, 2 * s * (1.0 + grid.y1**2), rtol=1e-8)
        assert trace.converged.all()

    def test_even_function_has_no_flux(self):
        grid = _box(0.3)
        w = GridFunction.from_function(grid, lambda y1, y2: np.cos(y1) * (1.0 + y2**2))
        np.testing.assert_allclose(neumann_trace(w).values, 0.0, atol=1e-10)

    def test_strict_mode(self):
        grid = _box(0.5, 33)
        w = GridFunction.from_function(grid, lambda y1, y2: np.ones_like(y1) * np.sin(400.0 * y2))
        with pytest.raises(ExtrapolationError):
            neumann_trace(w, strict=True)

    def test_needs_boundary_layer(self):
        grid = _box(0.5, 17).interior()
        w = GridFunction(grid=grid, values=np.zeros(grid.shape))
        with pytest.raises(GridDomainError):
            neumann_trace(w)


class TestDirichletEnergy:
    @pytest.mark.parametrize("s", ORDERS)
    def test_linear_in_y1(self, s):
        grid = _box(s)
        a = 1 - 2 * s
        w = GridFunction.from_function(grid, lambda y1, y2: y1 + 0 * y2)
        assert dirichlet_energy(w) == pytest.approx(2.0 / (a + 1), rel=1e-12)

    @pytest.mark.parametrize("s", ORDERS)
    def test_weighted_harmonic_power(self, s):
        # int_0^1 y^(1-2s) (2s y^(2s-1))^2 dy = 2s over a width-2 box
        grid = _box(s)
        w = GridFunction.from_function(grid, lambda y1, y2: np.ones_like(y1) * y2 ** (2 * s))
        assert dirichlet_energy(w) == pytest.approx(2.0 * 2 * s, rel=1e-10)

    def test_multiplier(self):
        grid = _box(0.5)
        w = GridFunction.from_function(grid, lambda y1, y2: y1 + 0 * y2)
        half = dirichlet_energy(w, multiplier=lambda y1, y2: 0.5 * np.ones_like(y1))
        assert half == pytest.approx(0.5 * dirichlet_energy(w))


class TestConformalChart:
    def test_build(self):
        chart = ConformalChart.build(-2.0, 0.0, 41, 80, FractionalParams(0.3))
        assert chart.theta[0] == 0.0
        assert chart.theta[-1] == pytest.approx(math.pi)
        assert chart.shape == (41, chart.theta.size)
        assert chart.endpoint_layers.sum() == 2

    def test_rejects_nodes(self):
        with pytest.raises(ParameterError):
            ConformalChart(t=np.array([0.0, -1.0]), theta=np.array([0.0, math.pi]), params=FractionalParams(0.5))

    def test_shift_of_homogeneous_solution(self):
        # u = e^((1-2s)t/2) |y|^k P_k = e^((k + (1-2s)/2) t) P_k(cos theta)
        s, k = 0.3, 2
        grid = _box(s, 129)
        chart = ConformalChart.build(-2.0, -0.1, 41, 60, grid.params)
        u = to_conformal(homogeneous_solution(k, s, grid), chart)
        assert u.chart is Chart.CONFORMAL
        tt, th = chart.mesh()
        w_on_chart = homogeneous_solution(k, s, grid).evaluate(np.exp(tt) * np.cos(th), np.exp(tt) * np.sin(th))
        np.testing.assert_allclose(u.values, np.exp((0.5 - s) * tt) * w_on_chart, rtol=1e-12, atol=1e-14)

    def test_chart_leaves_grid(self):
        grid = _box(0.5, 17)
        chart = ConformalChart.build(-1.0, 1.0, 11, 20, grid.params)
        w = GridFunction.from_function(grid, lambda y1, y2: y1 + y2)
        with pytest.raises(GridDomainError):
            to_conformal(w, chart)

    def test_back_to_cartesian(self):
        grid = HalfPlaneGrid(y1=np.linspace(0.3, 0.6, 7), y2=np.linspace(0.1, 0.3, 5), params=FractionalParams(0.5))
        chart = ConformalChart.build(math.log(0.05), 0.0, 61, 120, grid.params)
        source = _box(0.5, 33)
        w = homogeneous_solution(1, 0.5, source)
        back = from_conformal(to_conformal(w, chart), grid)
        np.testing.assert_allclose(back.values, w.evaluate(*grid.mesh()), rtol=1e-10)
        assert back.chart is Chart.CARTESIAN

    def test_outside_annulus_needs_fill(self):
        chart = ConformalChart.build(-1.0, 0.0, 11, 20, FractionalParams(0.5))
        u = GridFunction.from_function(chart, lambda t, th: np.ones_like(t), chart=Chart.CONFORMAL)
        grid = _box(0.5, 9)
        with pytest.raises(GridDomainError):
            from_conformal(u, grid)
        filled = from_conformal(u, grid, fill_value=0.0)
        assert filled.values[4, 0] == 0.0


class TestChainConsistency:
    """The Cartesian operator equals r^((1-2s)/2 - 2) times the conformal one."""

    @pytest.mark.parametrize("s", [0.3, 0.75])
    def test_same_operator(self, s):
        grid = _box(s, 129)
        a = grid.params.weight_exponent
        w = GridFunction.from_function(grid, lambda y1, y2: y1**2 * y2**2)

        def exact(y1, y2):
            # div(y2^a grad(y1^2 y2^2))
            return y2**a * (2.0 * y2**2 + 2.0 * (1.0 + a) * y1**2)

        cartesian = apply_cartesian_operator(w)
        y1, y2 = cartesian.grid.mesh()
        away = y2 >= 0.2
        reference = exact(y1, y2)[away]
        assert np.abs(cartesian.values[away] - reference).max() <= 1e-2 * np.abs(reference).max()

        chart = ConformalChart.build(math.log(0.2), math.log(0.9), 201, 200, grid.params)
        conformal = apply_conformal_operator(to_conformal(w, chart))
        tt, th = conformal.grid.mesh()
        keep = np.sin(th) >= 0.3
        r, theta = np.exp(tt[keep]), th[keep]
        p1, p2 = r * np.cos(theta), r * np.sin(theta)
        mapped = r ** (0.5 * a - 2.0) * conformal.values[keep]
        reference = exact(p1, p2)
        scale = np.abs(reference).max()
        assert np.abs(mapped - reference).max() <= 1e-2 * scale
        # bilinear resampling of the Cartesian result onto the chart nodes
        assert np.abs(cartesian.evaluate(p1, p2) - mapped).max() <= 2e-2 * scale


class TestConformalOperator:
    def test_radial_mode(self):
        # u = e^(c t) with c = (1-2s)/2 is annihilated up to O(h_t^2)
        s = 0.3
        chart = ConformalChart.build(-1.0, 0.0, 201, 40, FractionalParams(s))
        c = 0.5 - s
        u = GridFunction.from_function(chart, lambda t, th: np.exp(c * t) * np.ones_like(th), chart=Chart.CONFORMAL)
        assert np.abs(apply_conformal_operator(u).values).max() <= 1e-6

    def test_substitution(self):
        chart = ConformalChart.build(-1.0, 0.0, 11, 40, FractionalParams(0.3))
        u = GridFunction.from_function(chart, lambda t, th: np.cos(th) + 0 * t, chart=Chart.CONFORMAL)
        v = u_to_v(u)
        inner = ~chart.endpoint_layers
        np.testing.assert_allclose(v.values[:, inner], (np.sin(chart.theta[inner]) ** 0.2 * np.cos(chart.theta[inner]))[None, :] * np.ones((11, 1)))
        np.testing.assert_allclose(v.values[:, chart.endpoint_layers], 0.0)

    def test_inverse_substitution_flags_poles(self):
        chart = ConformalChart.build(-1.0, 0.0, 11, 40, FractionalParams(0.3))
        v = GridFunction.from_function(chart, lambda t, th: np.sin(th) ** 0.2 + 0 * t, chart=Chart.CONFORMAL)
        u = v_to_u(v)
        assert u.low_confidence is not None
        assert u.low_confidence[:, chart.endpoint_layers].all()

    def test_chart_integral(self):
        # t in [-1, 0]; int_0^pi sin = 2 and int_0^pi 1 = pi
        chart = ConformalChart.build(-1.0, 0.0, 11, 40, FractionalParams(0.5))
        u = GridFunction.from_function(chart, lambda t, th: np.ones_like(t) + 0 * th, chart=Chart.CONFORMAL)
        assert chart_integral(u, power=1.0) == pytest.approx(2.0, rel=1e-12)
        assert chart_integral(u) == pytest.approx(math.pi, rel=1e-12)
