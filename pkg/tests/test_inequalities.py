"""Tests for the two-sided inequality evaluators."""

import math

import numpy as np
import pytest

from carleman_lab.core.battery import Family, TestFunctionSpec, battery_grid, build_test_function
from carleman_lab.core.errors import DegenerateNormError, OutOfRegimeError, ParameterError
from carleman_lab.core.extension import homogeneous_solution
from carleman_lab.core.grid import BoundaryTrace, FractionalParams, GridFunction
from carleman_lab.core.inequalities import (
    InequalityReport,
    antisymmetric_lower_bound_sides,
    caccioppoli_sides,
    carleman_sides,
    commutator_sides,
    doubling_ratios,
    doubling_tau_choice,
    herbst_sides,
    interpolation_sides,
    three_balls_exponent,
    trace_interpolation_sides,
)


def _annular(grid, k=1):
    return build_test_function(TestFunctionSpec(Family.ANNULAR, 0.2, 0.8, angular_index=k), grid)


class TestInequalityReport:
    def test_rejects_negative_norm(self):
        with pytest.raises(ParameterError):
            InequalityReport("x", {}, lhs={"a": -1.0}, rhs={"b": 1.0})

    def test_signed_terms_may_be_negative(self):
        report = InequalityReport("x", {}, lhs={"a": 1.0}, rhs={"b": 3.0, "flux": -1.0}, signed_terms=("flux",))
        assert report.ratio == pytest.approx(0.5)

    def test_vanishing_rhs(self):
        report = InequalityReport("x", {}, lhs={"a": 1.0}, rhs={"b": 0.0})
        assert report.ratio == math.inf
        assert report.flags == ["exact-solution input"]
        assert report.to_dict()["ratio"] is None

    def test_both_sides_vanish(self):
        report = InequalityReport("x", {}, lhs={"a": 0.0}, rhs={"b": 0.0})
        assert report.ratio == 0.0
        assert report.flags == []

    def test_to_dict(self):
        report = InequalityReport("x", {"s": 0.5}, lhs={"a": 2.0}, rhs={"b": 4.0}, spec_id="f")
        data = report.to_dict()
        assert data["terms"] == {"lhs.a": 2.0, "rhs.b": 4.0}
        assert data["ratio"] == 0.5
        assert data["spec_id"] == "f"


class TestCarleman:
    def test_finite_ratio(self, half_grid):
        report = carleman_sides(_annular(half_grid), tau=2.0)
        assert set(report.lhs) == {"gradient", "mass", "boundary"}
        assert set(report.rhs) == {"source", "neumann"}
        assert 0 < report.ratio < math.inf
        assert report.params == {"s": 0.5, "tau": 2.0}

    def test_exact_data_flagged(self, half_grid):
        w = _annular(half_grid)
        f = GridFunction(grid=half_grid, values=np.zeros(half_grid.shape))
        h = BoundaryTrace(y1=half_grid.y1, values=np.zeros_like(half_grid.y1))
        report = carleman_sides(w, f, h, tau=2.0)
        assert "exact-solution input" in report.flags
        assert report.ratio == math.inf

    def test_bounded_in_tau(self, half_grid):
        # radial bump: the ratio does not grow with tau
        w = _annular(half_grid, k=0)
        ratios = [carleman_sides(w, tau=tau).ratio for tau in (2.0, 4.0, 8.0, 16.0)]
        assert all(0 < ratio < math.inf for ratio in ratios)
        assert all(later < 2.0 * earlier for earlier, later in zip(ratios, ratios[1:]))

    def test_rejects_small_order(self):
        grid = battery_grid(FractionalParams(0.2), 33)
        with pytest.raises(ParameterError):
            carleman_sides(_annular(grid), tau=2.0)

    def test_rejects_small_tau(self, half_grid):
        with pytest.raises(ParameterError):
            carleman_sides(_annular(half_grid), tau=0.5)

    def test_rejects_mismatched_order(self, half_grid):
        with pytest.raises(ParameterError):
            carleman_sides(_annular(half_grid), tau=2.0, s=0.6)


class TestTraceInterpolation:
    def test_constant(self):
        # lhs sqrt(2), rhs tau^(1/2) sqrt(pi) at s = 1/2
        tau = 4.0
        report = trace_interpolation_sides(lambda theta: np.ones_like(theta), tau, 0.5)
        assert report.lhs["endpoints"] == pytest.approx(math.sqrt(2.0))
        assert report.rhs["gradient"] == pytest.approx(0.0, abs=1e-12)
        assert report.ratio == pytest.approx(math.sqrt(2.0) / math.sqrt(tau * math.pi), rel=1e-10)

    def test_samples(self):
        theta = np.linspace(0.0, math.pi, 201)
        report = trace_interpolation_sides(np.cos(theta), 3.0, 0.3, theta=theta)
        assert report.lhs["endpoints"] == pytest.approx(math.sqrt(2.0))
        assert report.rhs["gradient"] > 0

    def test_rejects_tau(self):
        with pytest.raises(ParameterError):
            trace_interpolation_sides(np.cos, 1.0, 0.5)

    def test_needs_poles(self):
        with pytest.raises(ParameterError):
            trace_interpolation_sides(np.cos, 2.0, 0.5, theta=np.linspace(0.1, math.pi, 50))


class TestHerbst:
    def test_finite_ratio(self, half_grid):
        report = herbst_sides(_annular(half_grid, k=0))
        assert report.inequality == "herbst"
        assert 0 < report.ratio < math.inf


class TestCaccioppoli:
    def test_homogeneous_solution(self, half_grid):
        report = caccioppoli_sides(homogeneous_solution(2, 0.5, half_grid), 0.2, 0.3)
        assert report.squared
        assert report.signed_terms == ("boundary", "source")
        assert 0 < report.ratio < 1

    def test_rejects_radii(self, half_grid):
        with pytest.raises(ParameterError):
            caccioppoli_sides(homogeneous_solution(2, 0.5, half_grid), 0.3, 0.2)


class TestInterpolation:
    def test_report(self, half_grid):
        report = interpolation_sides(_annular(half_grid), 1.0, 0.5)
        assert report.params["mu"] == 0.5
        assert report.lhs["gradient"] > 0

    def test_rejects_eps(self, half_grid):
        with pytest.raises(ParameterError):
            interpolation_sides(_annular(half_grid), 0.0, 0.5)


class TestAntisymmetric:
    @pytest.mark.parametrize("k", [0, 1])
    def test_zero_neumann_member(self, half_grid, k):
        w = _annular(half_grid, k=k)
        reports = [antisymmetric_lower_bound_sides(w, 0.2, 0.8, tau) for tau in (4.0, 8.0, 16.0)]
        ratios = [r.ratio for r in reports]
        assert all(0 < ratio < 1 for ratio in ratios)
        assert ratios[-1] < ratios[0]
        assert reports[0].params == {"s": 0.5, "tau": 4.0, "delta": 0.2, "R": 0.8, "c": 2.0}
        assert set(reports[0].lhs) == {"annulus_mass"}

    def test_nonzero_neumann_data(self, half_grid):
        w = build_test_function(TestFunctionSpec(Family.RANDOM, 0.2, 0.8, seed=1), half_grid)
        with pytest.raises(OutOfRegimeError):
            antisymmetric_lower_bound_sides(w, 0.2, 0.8, 4.0)

    def test_support_outside_annulus(self, half_grid):
        with pytest.raises(OutOfRegimeError):
            antisymmetric_lower_bound_sides(_annular(half_grid), 0.3, 0.8, 4.0)

    def test_rejects_annulus(self, half_grid):
        with pytest.raises(ParameterError):
            antisymmetric_lower_bound_sides(_annular(half_grid), 0.8, 0.2, 4.0)


class TestCommutator:
    def test_positive(self):
        t = np.linspace(-2.0, 2.0, 401)
        report = commutator_sides(np.exp(-t * t), t, 10.0)
        assert report.ratio > 1
        assert report.params["commutator"] > 0

    def test_grows_with_tau(self):
        # the tau^3 bulk term dominates the tau fourth-derivative term
        t = np.linspace(-2.0, 0.5, 401)
        v = np.exp(-4.0 * (t + 0.75) ** 2)
        ratios = [commutator_sides(v, t, tau).ratio for tau in (4.0, 8.0, 16.0)]
        assert 1 < ratios[0] < ratios[1] < ratios[2]


class TestDoubling:
    def test_homogeneous_ratio(self, half_grid):
        # 2^(k + (3 - 2s)/2) for the degree-k solution
        w = homogeneous_solution(2, 0.5, half_grid)
        for _, ratio in doubling_ratios(w, [0.1, 0.2, 0.4]):
            assert ratio == pytest.approx(8.0, rel=1e-4)

    def test_vanishing_function(self, half_grid):
        w = GridFunction(grid=half_grid, values=np.zeros(half_grid.shape))
        with pytest.raises(DegenerateNormError):
            doubling_ratios(w, [0.1])

    def test_three_balls_homogeneous(self, half_grid):
        result = three_balls_exponent(homogeneous_solution(2, 0.5, half_grid), 0.2)
        assert result.alpha == pytest.approx(0.5, abs=1e-4)
        assert not result.flagged

    def test_tau_choice(self, half_grid):
        tau = doubling_tau_choice(homogeneous_solution(2, 0.5, half_grid), 0.4)
        assert math.isfinite(tau)
