"""Tests for the spherical spectrum, its eigenfunctions and the radial parametrix."""

import math

import numpy as np
import pytest
from scipy import special

from carleman_lab.core.errors import ParameterError
from carleman_lab.core.spectrum import (
    Lambda_closed_form,
    conjugated_radial_operator,
    dist_to_spectrum,
    eigen_pair,
    explicit_eigenvalue,
    gap_improved_bound,
    gegenbauer_oracle,
    kernel_bound_constant,
    lambda_from_Lambda,
    legendre_coeffs,
    parametrix_kernel,
    radial_exponent,
    spectrum_table,
    sturm_liouville_spectrum,
)
from carleman_lab.core.weights import phi, turning_point

ORDERS = [0.3, 0.5, 0.75]


class TestClosedForms:
    @pytest.mark.parametrize("k", range(7))
    def test_half_order_is_minus_k_squared(self, k):
        assert explicit_eigenvalue(k, 0.5) == pytest.approx(-(k**2), abs=1e-14)

    @pytest.mark.parametrize("s", ORDERS)
    def test_conventions_agree(self, s):
        for k in range(6):
            assert lambda_from_Lambda(Lambda_closed_form(k, s), s) == pytest.approx(explicit_eigenvalue(k, s))

    def test_radial_exponent(self):
        assert radial_exponent(2, 0.3) == pytest.approx(2.2)

    def test_rejects_order(self):
        with pytest.raises(ParameterError):
            explicit_eigenvalue(1, 1.0)
        with pytest.raises(ParameterError):
            explicit_eigenvalue(-1, 0.5)


class TestEigenfunctions:
    @pytest.mark.parametrize("s", ORDERS)
    def test_second_degree_shape(self, s):
        coeffs = legendre_coeffs(2, s)
        assert coeffs[1] == 0.0
        assert coeffs[2] / coeffs[0] == pytest.approx(2 * s - 3)

    @pytest.mark.parametrize("s", ORDERS)
    def test_parity(self, s):
        for k in range(7):
            coeffs = legendre_coeffs(k, s)
            assert np.all(coeffs[(k + 1) % 2::2] == 0.0)
            assert coeffs[k] > 0

    @pytest.mark.parametrize("s", ORDERS)
    def test_orthonormal(self, s):
        nodes, weights = special.roots_jacobi(8, -s, -s)
        values = np.array([np.polynomial.polynomial.polyval(nodes, legendre_coeffs(k, s)) for k in range(6)])
        gram = (values * weights) @ values.T
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-10)

    @pytest.mark.parametrize("s", ORDERS)
    def test_matches_gegenbauer(self, s):
        x = np.linspace(-1, 1, 101)
        for k in range(7):
            expected = gegenbauer_oracle(k, s, x)
            np.testing.assert_allclose(np.polynomial.polynomial.polyval(x, legendre_coeffs(k, s)), expected,
                                       atol=1e-10)

    def test_satisfies_ode(self):
        s, k = 0.3, 4
        coeffs = legendre_coeffs(k, s)
        x = np.linspace(-0.9, 0.9, 19)
        p = np.polynomial.polynomial.polyval(x, coeffs)
        dp = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(coeffs))
        d2p = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(coeffs, 2))
        residual = (1 - x**2) * d2p + 2 * (s - 1) * x * dp + (k * k - 2 * k * s + k) * p
        np.testing.assert_allclose(residual, 0.0, atol=1e-10)

    def test_pair_forms(self):
        pair = eigen_pair(3, 0.75)
        theta = np.linspace(0.1, 3.0, 7)
        u = pair.evaluate(theta, "u")
        v = pair.evaluate(theta, "v")
        np.testing.assert_allclose(v, np.sin(theta) ** (-0.25) * u)
        assert pair.lambda_explicit == pytest.approx(explicit_eigenvalue(3, 0.75))
        assert pair.degree == 3
        with pytest.raises(ParameterError):
            pair.evaluate(theta, "w")

    def test_degree_limit(self):
        with pytest.raises(ParameterError):
            legendre_coeffs(13, 0.5)


class TestSturmLiouvilleOracle:
    def test_neumann_laplacian(self):
        values = sturm_liouville_spectrum(0.5, 4, 2000)
        assert values[0] == pytest.approx(0.0, abs=1e-8)
        np.testing.assert_allclose(values[1:], np.arange(1, 5) ** 2, rtol=1e-3)

    @pytest.mark.parametrize("s", ORDERS)
    def test_table(self, s):
        table = spectrum_table(s, 4)
        assert list(table["k"]) == [0, 1, 2, 3, 4]
        assert (table["rel_err"] <= 1e-3).all()
        np.testing.assert_allclose(table["Lambda_closed"], [k * (k + 1 - 2 * s) for k in range(5)])

    def test_too_few_nodes(self):
        with pytest.raises(ParameterError):
            sturm_liouville_spectrum(0.5, 10, 50)


class TestRadialSpectrum:
    def test_distance(self):
        assert dist_to_spectrum(0.0, 0.3) == pytest.approx(0.2)
        assert dist_to_spectrum(1.2, 0.3) == pytest.approx(0.0, abs=1e-12)
        assert dist_to_spectrum(1.7, 0.3) == pytest.approx(0.5)

    def test_gap_bound_shape(self):
        t = np.linspace(-3, 0, 31)
        gap = gap_improved_bound(8.0, 0.5, t)
        assert gap.shape == t.shape
        assert np.all((gap >= 0) & (gap <= 0.5))


class TestParametrixKernel:
    def test_outer_branch(self):
        mu = tau = 4.0
        t, s_var = 1.0, 0.5
        expected = -math.exp(-mu * 0.5) / (2 * mu) * math.exp(tau * (phi(t) - phi(s_var)))
        assert turning_point(mu, tau) == pytest.approx(0.0, abs=1e-9)
        assert parametrix_kernel(mu, tau, t, s_var) == pytest.approx(expected, rel=1e-12)

    def test_middle_branch(self):
        mu = tau = 4.0
        t, s_var = -0.5, -1.5
        expected = math.sinh(mu * 1.0) / mu * math.exp(tau * (phi(t) - phi(s_var)))
        assert parametrix_kernel(mu, tau, t, s_var) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("source", [-1.5, 1.0])
    def test_unit_jump_at_source(self, source):
        # middle branch below the turning point at 0, outer branch above it
        mu = tau = 4.0
        h = 1e-6
        below, at, above = (float(parametrix_kernel(mu, tau, source + d, source)) for d in (-h, 0.0, h))
        jump = (above - at) / h - (at - below) / h
        assert jump == pytest.approx(1.0, abs=1e-4)

    def test_vanishes_below_source(self):
        assert parametrix_kernel(4.0, 4.0, -1.5, -0.5) == 0.0

    def test_bound_constant(self):
        t = np.linspace(-5, 5, 200)
        for mu in (6.0, 8.0, 10.0):
            assert 0 < kernel_bound_constant(mu, 8.0, t, t) <= 10.0

    def test_green_function(self):
        # (d_t^2 - 2 tau phi' d_t + ...) K(., s) is a unit delta at t = s
        mu = tau = 4.0
        t = np.linspace(-3, 3, 6001)
        h = t[1] - t[0]
        source = 1.0
        column = np.asarray(parametrix_kernel(mu, tau, t, source))
        applied = conjugated_radial_operator(column, t, mu, tau)
        away = np.abs(t[1:-1] - source) > 5 * h
        away &= np.abs(t[1:-1] - turning_point(mu, tau)) > 5 * h
        scale = np.abs(column).max() / h**2
        assert np.abs(applied[away]).max() <= 1e-7 * scale

    def test_rejects_mu(self):
        with pytest.raises(ParameterError):
            parametrix_kernel(0.0, 4.0, 0.0, 0.0)
