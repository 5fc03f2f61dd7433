"""Tests for the extension profile, the DtN map, homogeneous solutions and blow-ups."""

import math

import numpy as np
import pytest

from carleman_lab.core.battery import Family, TestFunctionSpec, battery_grid, build_test_function
from carleman_lab.core.coords import neumann_trace
from carleman_lab.core.errors import AliasingError, ParameterError
from carleman_lab.core.extension import (
    SpectralBoundaryData,
    blow_up_rescale,
    cs_extend,
    dtn_apply,
    dtn_constant,
    dtn_constant_closed_form,
    dtn_symbol,
    extension_profile,
    homogeneous_polynomial,
    homogeneous_solution,
    normalized_dtn,
    profile_ode_oracle,
)
from carleman_lab.core.grid import (
    FractionalParams,
    HalfPlaneGrid,
    graded_nodes,
    grading_exponent,
    half_ball,
    weighted_norm,
)

ORDERS = [0.25, 0.5, 0.75]


class TestProfile:
    def test_half_order_is_exponential(self):
        y = np.linspace(0, 3, 31)
        np.testing.assert_allclose(extension_profile(2.0, 0.5, y), np.exp(-2.0 * y), rtol=1e-12)

    @pytest.mark.parametrize("s", ORDERS)
    def test_boundary_value_and_decay(self, s):
        y = np.linspace(0, 5, 51)
        profile = extension_profile(1.5, s, y)
        assert profile[0] == 1.0
        assert np.all(np.diff(profile) < 0)
        assert profile[-1] < 1e-2

    def test_even_in_frequency(self):
        y = np.linspace(0, 1, 11)
        np.testing.assert_allclose(extension_profile(-3.0, 0.3, y), extension_profile(3.0, 0.3, y))

    @pytest.mark.parametrize("s", ORDERS)
    def test_ode_oracle(self, s):
        heights = np.linspace(0.0, 2.5, 26)
        np.testing.assert_allclose(profile_ode_oracle(2.0, s, heights), extension_profile(2.0, s, heights),
                                   atol=1e-8)

    @pytest.mark.parametrize("xi", [0.3, 7.0])
    def test_ode_oracle_any_frequency(self, xi):
        heights = np.linspace(0.0, 4.0, 41) / xi
        np.testing.assert_allclose(profile_ode_oracle(xi, 0.3, heights), extension_profile(xi, 0.3, heights),
                                   atol=1e-8)

    @pytest.mark.filterwarnings("error")
    @pytest.mark.parametrize("s", [0.2, 0.3])
    def test_ode_oracle_at_boundary_is_quiet(self, s):
        values = profile_ode_oracle(1.0, s, np.array([0.0, 0.5]))
        assert values[0] == 1.0
        assert 0.0 < values[1] < 1.0

    def test_rejects_zero_frequency(self):
        with pytest.raises(ParameterError):
            extension_profile(0.0, 0.5, 1.0)
        with pytest.raises(ParameterError):
            extension_profile(1.0, 0.5, -1.0)


class TestDirichletToNeumann:
    @pytest.mark.parametrize("s", [0.2, 0.25, 0.5, 0.75, 0.8])
    def test_constant_matches_closed_form(self, s):
        assert dtn_constant(s) == pytest.approx(dtn_constant_closed_form(s), rel=1e-8)

    @pytest.mark.parametrize("s", ORDERS)
    def test_symbol_scales_like_power(self, s):
        # every |xi| is shot on its own; the scaling law is a result, not an input
        xi = np.array([0.25, 1.0, 3.0, 10.0, 40.0])
        np.testing.assert_allclose(dtn_symbol(xi, s) / xi ** (2 * s), dtn_constant_closed_form(s), rtol=1e-8)

    @pytest.mark.parametrize("profile", [profile_ode_oracle, extension_profile])
    @pytest.mark.parametrize("s", ORDERS)
    @pytest.mark.parametrize("xi", [0.5, 4.0])
    def test_symbol_matches_profile_difference(self, profile, s, xi):
        # 1 - theta(y) = (m / 2s) y^(2s) + O(y^2): one-sided quotients at two heights, one Richardson step
        heights = np.array([2e-3, 1e-3]) / xi
        quotients = 2 * s * (1.0 - profile(xi, s, heights)) / heights ** (2 * s)
        gain = 2.0 ** (2.0 - 2.0 * s)
        extrapolated = (gain * quotients[1] - quotients[0]) / (gain - 1.0)
        assert extrapolated == pytest.approx(float(dtn_symbol(xi, s)), rel=1e-4)

    def test_half_order_constant(self):
        assert dtn_constant(0.5) == pytest.approx(1.0, rel=1e-8)

    @pytest.mark.parametrize("s", ORDERS)
    def test_normalized_symbol(self, s):
        xi = np.array([-4.0, -1.0, 0.0, 0.5, 2.0, 7.0])
        np.testing.assert_allclose(normalized_dtn(xi, s), np.abs(xi) ** (2 * s), rtol=1e-8)
        assert dtn_symbol(0.0, s) == 0.0

    def test_cosine_eigenfunction(self):
        # (-Delta)^s cos(3 y) = 3^(2s) cos(3 y)
        s = 0.3
        y1 = np.linspace(-math.pi, math.pi, 33, endpoint=False)
        data = SpectralBoundaryData.from_samples(y1, np.cos(3 * y1))
        assert data.is_hermitian
        np.testing.assert_allclose(dtn_apply(data, s, y1, normalized=True), 3 ** (2 * s) * np.cos(3 * y1),
                                   atol=1e-8)

    def test_samples_must_be_uniform(self):
        with pytest.raises(ParameterError):
            SpectralBoundaryData.from_samples([0.0, 0.1, 0.3], [1.0, 2.0, 3.0])


class TestExtension:
    def test_single_mode(self):
        s = 0.3
        grid = HalfPlaneGrid.box(1.0, 1.0, 33, FractionalParams(s))
        w = cs_extend(SpectralBoundaryData.cosine(2.0), s, grid)
        y1, y2 = grid.mesh()
        np.testing.assert_allclose(w.values, np.cos(2.0 * y1) * extension_profile(2.0, s, y2), atol=1e-12)

    def test_boundary_trace_is_data(self):
        s = 0.75
        y1 = np.linspace(-math.pi, math.pi, 32, endpoint=False)
        values = np.sin(y1) + 0.5 * np.cos(4 * y1)
        data = SpectralBoundaryData.from_samples(y1, values)
        grid = HalfPlaneGrid(y1=y1, y2=np.linspace(0, 1, 9), params=FractionalParams(s))
        w = cs_extend(data, s, grid)
        np.testing.assert_allclose(w.values[:, 0], values, atol=1e-12)

    def test_aliasing(self):
        grid = HalfPlaneGrid.box(1.0, 1.0, 9, FractionalParams(0.5))
        with pytest.raises(AliasingError):
            cs_extend(SpectralBoundaryData.cosine(100.0), 0.5, grid)

    def test_grid_order_mismatch(self):
        grid = HalfPlaneGrid.box(1.0, 1.0, 9, FractionalParams(0.5))
        with pytest.raises(ParameterError):
            cs_extend(SpectralBoundaryData.cosine(1.0), 0.3, grid)


class TestHomogeneousSolutions:
    @pytest.mark.parametrize("s", ORDERS)
    def test_homogeneity(self, s):
        w = homogeneous_polynomial(3, s)
        y1, y2 = np.array([0.3, -0.2, 0.1]), np.array([0.4, 0.1, 0.7])
        np.testing.assert_allclose(w(2.0 * y1, 2.0 * y2), 8.0 * w(y1, y2), rtol=1e-12)

    def test_degree_limit(self):
        with pytest.raises(ParameterError):
            homogeneous_polynomial(7, 0.5)

    def test_label(self):
        grid = battery_grid(FractionalParams(0.5), 33)
        assert homogeneous_solution(2, 0.5, grid).label == "w_2"


class TestBlowUp:
    @pytest.mark.parametrize("sigma", [0.5, 0.8, 1.2])
    def test_unit_norm(self, sigma):
        s = 0.4
        grid = battery_grid(FractionalParams(s), 65)
        w = build_test_function(TestFunctionSpec(Family.RANDOM, 0.2, 0.8, angular_index=1, seed=3), grid)
        rescaled = blow_up_rescale(w, sigma)
        assert weighted_norm(rescaled, half_ball(1.0)) == pytest.approx(1.0, abs=1e-6)

    def test_homogeneous_is_self_similar(self):
        s = 0.5
        grid = battery_grid(FractionalParams(s), 65)
        w = homogeneous_solution(2, s, grid)
        a, b = blow_up_rescale(w, 0.5), blow_up_rescale(w, 1.0)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-9, atol=1e-12)

    def test_rejects_scale(self):
        grid = battery_grid(FractionalParams(0.5), 33)
        with pytest.raises(ParameterError):
            blow_up_rescale(homogeneous_solution(1, 0.5, grid), 0.0)


class TestNeumannConsistency:
    """The weighted Neumann trace of the extension is minus the DtN map."""

    @pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
    def test_trace_matches_dtn(self, s):
        y1 = np.linspace(-math.pi, math.pi, 64, endpoint=False)
        grid = HalfPlaneGrid(y1=y1, y2=graded_nodes(1.0, 256, grading_exponent(s)), params=FractionalParams(s))
        # sin(y1) + 0.5 cos(4 y1)
        data = SpectralBoundaryData(frequencies=np.array([1.0, -1.0, 4.0, -4.0]),
                                    amplitudes=np.array([-0.5j, 0.5j, 0.25, 0.25]))
        trace = neumann_trace(cs_extend(data, s, grid))
        dtn = dtn_apply(data, s, y1)
        assert trace.converged.all()
        assert np.abs(trace.values + dtn).max() <= 1e-3 * np.abs(dtn).max()
