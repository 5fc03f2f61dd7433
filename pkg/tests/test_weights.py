"""Tests for the Carleman weight and its turning point."""

import math

import numpy as np
import pytest

from carleman_lab.core.errors import ParameterError
from carleman_lab.core.weights import (
    GRADIENT_SPREAD,
    CarlemanWeight,
    commutator_density,
    phi,
    phi_double_prime,
    phi_fourth,
    phi_of_radius,
    phi_prime,
    phi_third,
    turning_point,
)


class TestWeightDerivatives:
    """phi and its derivatives against central differences."""

    @pytest.mark.parametrize("value, derivative", [
        (phi, phi_prime),
        (phi_prime, phi_double_prime),
        (phi_double_prime, phi_third),
        (phi_third, phi_fourth),
    ])
    def test_central_differences(self, value, derivative):
        t = np.linspace(-20.0, 20.0, 801)
        h = 1e-4
        numerical = (value(t + h) - value(t - h)) / (2 * h)
        np.testing.assert_allclose(derivative(t), numerical, atol=1e-7)

    def test_origin(self):
        assert phi(0.0) == 0.0
        assert phi_prime(0.0) == -1.0

    def test_gradient_range(self, rng):
        t = rng.uniform(-1e6, 1e6, size=10000)
        spread = np.abs(phi_prime(t) + 1.0)
        assert np.all(spread < GRADIENT_SPREAD)
        assert np.all(-phi_prime(t) >= 0.75)
        assert np.all(-phi_prime(t) <= 2.0)

    def test_convexity(self, rng):
        t = rng.uniform(-1e3, 1e3, size=1000)
        assert np.all(phi_double_prime(t) > 0)

    def test_radius_composition(self):
        r = np.array([0.1, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(phi_of_radius(r), phi(np.log(r)))

    def test_scalar_in_scalar_out(self):
        assert isinstance(phi(1.5), float)
        assert phi(np.array([1.5])).shape == (1,)


class TestTurningPoint:
    """T(mu) solves tau phi'(T) = -mu."""

    def test_balanced(self):
        assert turning_point(5.0, 5.0) == pytest.approx(0.0, abs=1e-9)

    def test_known_roots(self):
        tau = 5.0
        assert turning_point(tau * (1 + math.pi / 40), tau) == pytest.approx(-1.0, abs=1e-8)
        assert turning_point(tau * (1 - math.pi / 40), tau) == pytest.approx(1.0, abs=1e-8)

    def test_residual(self, rng):
        tau = 8.0
        for mu in rng.uniform(tau * (1 - 0.9 * GRADIENT_SPREAD), tau * (1 + 0.9 * GRADIENT_SPREAD), 20):
            root = turning_point(mu, tau)
            assert tau * phi_prime(root) + mu == pytest.approx(0.0, abs=1e-8)

    def test_outside_window(self):
        assert turning_point(10.0 * (1 + GRADIENT_SPREAD) * 1.01, 10.0) == -math.inf
        assert turning_point(10.0 * (1 - GRADIENT_SPREAD) * 0.99, 10.0) == math.inf

    def test_monotone_in_mu(self):
        roots = [turning_point(mu, 4.0) for mu in np.linspace(3.5, 4.5, 11)]
        assert all(b < a for a, b in zip(roots, roots[1:]))

    @pytest.mark.parametrize("mu, tau", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
    def test_rejects_nonpositive(self, mu, tau):
        with pytest.raises(ParameterError):
            turning_point(mu, tau)


class TestCarlemanWeight:
    def test_scales_with_tau(self):
        weight = CarlemanWeight(3.0)
        t = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(weight.value(t), 3.0 * phi(t))
        np.testing.assert_allclose(weight.prime(t), 3.0 * phi_prime(t))
        assert weight.turning_point(3.0) == pytest.approx(0.0, abs=1e-9)

    def test_gradient_bounds(self):
        lo, hi = CarlemanWeight(4.0).gradient_bounds()
        assert 3.0 <= lo < hi <= 8.0

    def test_exp_weight(self):
        weight = CarlemanWeight(2.0)
        assert weight.exp_weight(1.0) == pytest.approx(1.0)

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ParameterError):
            CarlemanWeight(0.0)


class TestCommutatorDensity:
    def test_nonnegative_leading_terms(self, rng):
        t = np.linspace(-5, 5, 201)
        v = rng.normal(size=t.size)
        dv = rng.normal(size=t.size)
        density = commutator_density(t, v, dv, tau=6.0)
        assert np.all(density["bulk"] >= 0)
        assert np.all(density["gradient"] >= 0)

    def test_cubic_growth(self):
        t = np.linspace(-1, 1, 11)
        v = np.ones_like(t)
        small = commutator_density(t, v, 0 * v, 2.0)["bulk"]
        large = commutator_density(t, v, 0 * v, 4.0)["bulk"]
        np.testing.assert_allclose(large, 8.0 * small)
