"""
One-dimensional spherical spectrum.

On the half-circle the spherical part of the conformal operator has the
explicit eigenvalues Lambda_k = k(k + 1 - 2s) with polynomial eigenfunctions
P_k(cos theta). This module exposes both sign conventions, the coefficient
recursion for P_k, an independent finite-element eigensolver used as an
oracle, the distance to the radial spectrum mu_k = k - s + 1/2 and the kernel
of the radial parametrix.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from scipy import linalg, special

from carleman_lab.core.errors import EigenSolverError, ParameterError
from carleman_lab.core.grid import grading_exponent, sine_hat_moments, symmetric_graded_nodes
from carleman_lab.core.weights import CarlemanWeight, phi_prime

logger = logging.getLogger(__name__)

MAX_DEGREE = 12
DEFAULT_SPECTRUM_NODES = 4000


def _check_s(s: float) -> None:
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0, 1), got {s}")


def _check_k(k: int) -> None:
    if k < 0 or int(k) != k:
        raise ParameterError(f"k must be a nonnegative integer, got {k}")


# =============================================================================
# Closed forms
# =============================================================================


def radial_exponent(k: int, s: float) -> float:
    """mu_k = k - s + 1/2."""
    return k - s + 0.5


def Lambda_closed_form(k: int, s: float) -> float:
    """Eigenvalue of -(sin^(1-2s) u')' = Lambda sin^(1-2s) u with weighted Neumann data."""
    return k * (k + 1.0 - 2.0 * s)


def explicit_eigenvalue(k: int, s: float) -> float:
    """
    lambda_k = -(1-2s)^2/4 - (k - s + 1/2)^2 of the conjugated spherical operator.

    Equals -Lambda_k - (1-2s)^2/2.

    Example:
        >>> explicit_eigenvalue(3, 0.5)
        -9.0
    """
    _check_k(k)
    _check_s(s)
    return -((1.0 - 2.0 * s) ** 2) / 4.0 - radial_exponent(k, s) ** 2


def lambda_from_Lambda(Lambda: ArrayLike, s: float) -> np.ndarray | float:
    """Convert the Sturm-Liouville convention to the conjugated one."""
    value = -np.asarray(Lambda, dtype=float) - 0.5 * (1.0 - 2.0 * s) ** 2
    return value[()] if value.ndim == 0 else value


# =============================================================================
# Eigenfunctions
# =============================================================================


def _weighted_square_norm(coeffs: np.ndarray, s: float) -> float:
    # int_{-1}^{1} (1 - x^2)^(-s) P(x)^2 dx, exact for the polynomial degree
    nodes, weights = special.roots_jacobi(len(coeffs) + 1, -s, -s)
    return float(np.sum(weights * np.polynomial.polynomial.polyval(nodes, coeffs) ** 2))


def legendre_coeffs(k: int, mu: float) -> np.ndarray:
    """
    Coefficients alpha_0..alpha_k of the generalized Legendre polynomial P_k.

    P_k solves (1 - x^2) P'' + 2(mu - 1) x P' + (k^2 - 2k mu + k) P = 0, so
    (j+2)(j+1) alpha_{j+2} = (j(j-1) - 2j(mu-1) - (k^2 - 2k mu + k)) alpha_j.
    The recursion starts from alpha_0 (k even) or alpha_1 (k odd) and stops
    at j = k, where the bracket vanishes.

    Args:
        k: Degree.
        mu: The order s in (0, 1).

    Returns:
        Increasing-power coefficients normalized to
        int_0^pi sin^(1-2mu) P_k(cos theta)^2 = 1 with a positive leading coefficient.

    Raises:
        ParameterError: If mu is outside (0, 1) or k is out of range.
        ArithmeticError: If the truncation at j = k fails.
    """
    _check_k(k)
    if not 0.0 < mu < 1.0:
        raise ParameterError(f"mu must lie in (0, 1), got {mu}")
    if k > MAX_DEGREE:
        raise ParameterError(f"degree {k} exceeds the supported maximum {MAX_DEGREE}")

    eigen_term = k * k - 2.0 * k * mu + k
    coeffs = np.zeros(k + 1)
    coeffs[k % 2] = 1.0
    for j in range(k % 2, k - 1, 2):
        bracket = j * (j - 1) - 2.0 * j * (mu - 1.0) - eigen_term
        coeffs[j + 2] = bracket * coeffs[j] / ((j + 2) * (j + 1))

    tail = k * (k - 1) - 2.0 * k * (mu - 1.0) - eigen_term
    if abs(tail) > 1e-9 * max(1.0, abs(eigen_term)):
        raise ArithmeticError(f"recursion for P_{k} does not truncate (tail {tail})")

    coeffs /= math.sqrt(_weighted_square_norm(coeffs, mu))
    if coeffs[k] < 0:
        coeffs = -coeffs
    return coeffs


@dataclass(frozen=True)
class EigenPair:
    """Index, eigenvalues and eigenfunction coefficients of one spherical mode."""
    k: int
    s: float
    lambda_explicit: float
    mu: float
    coeffs: tuple[float, ...]

    @property
    def Lambda(self) -> float:
        return Lambda_closed_form(self.k, self.s)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def polynomial(self, x: ArrayLike) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), np.asarray(self.coeffs))

    def evaluate(self, theta: ArrayLike, form: str = "u") -> np.ndarray:
        return eigenfunction_eval(self, theta, form)


def eigen_pair(k: int, s: float) -> EigenPair:
    """Build the normalized mode of index k for order s."""
    _check_s(s)
    return EigenPair(
        k=k,
        s=s,
        lambda_explicit=explicit_eigenvalue(k, s),
        mu=radial_exponent(k, s),
        coeffs=tuple(legendre_coeffs(k, s).tolist()),
    )


def eigenfunction_eval(pair: EigenPair, theta: ArrayLike, form: str = "u") -> np.ndarray:
    """
    Evaluate the eigenfunction at angles theta.

    Args:
        pair: The mode.
        theta: Angles in [0, pi]; the v-form is only finite inside when s > 1/2.
        form: "u" for P_k(cos theta), "v" for sin^((1-2s)/2)(theta) P_k(cos theta).
    """
    theta = np.asarray(theta, dtype=float)
    values = pair.polynomial(np.cos(theta))
    if form == "u":
        return values
    if form == "v":
        return np.sin(theta) ** (0.5 - pair.s) * values
    raise ParameterError(f"unknown eigenfunction form '{form}'")


def gegenbauer_oracle(k: int, s: float, x: ArrayLike) -> np.ndarray:
    """
    P_k(x) recomputed from scipy's Gegenbauer C_k^(1/2 - s) (Chebyshev T_k at s = 1/2).

    Normalized the same way as `legendre_coeffs`, so both must agree.
    """
    _check_k(k)
    _check_s(s)
    alpha = 0.5 - s
    x = np.asarray(x, dtype=float)
    nodes, weights = special.roots_jacobi(k + 2, -s, -s)

    def raw(points: np.ndarray) -> np.ndarray:
        if abs(alpha) < 1e-14:
            return special.eval_chebyt(k, points)
        return special.eval_gegenbauer(k, alpha, points)

    norm = math.sqrt(float(np.sum(weights * raw(nodes) ** 2)))
    # Jacobi-type polynomials are positive at x = 1 iff their leading coefficient is
    sign = 1.0 if raw(np.array([1.0]))[0] > 0 else -1.0
    return sign * raw(x) / norm


# =============================================================================
# Sturm-Liouville oracle
# =============================================================================


def sturm_liouville_spectrum(s: float, K: int, nodes: int = DEFAULT_SPECTRUM_NODES) -> np.ndarray:
    """
    Lowest K + 1 eigenvalues of -(sin^(1-2s) u')' = Lambda sin^(1-2s) u on (0, pi).

    Linear finite elements on angular nodes graded toward both poles, with
    exact cell moments of the weight and a lumped mass matrix. The weighted
    Neumann condition is natural, so the pole nodes stay free.

    Args:
        s: Order in (0, 1).
        K: Highest index wanted.
        nodes: Number of angular nodes.

    Returns:
        Ascending eigenvalues Lambda_0..Lambda_K.

    Raises:
        ParameterError: If K is not small against the node count.
        EigenSolverError: If the tridiagonal solve fails.
    """
    _check_s(s)
    _check_k(K)
    if nodes < 10 * (K + 1):
        raise ParameterError(f"{nodes} nodes cannot resolve {K + 1} eigenvalues")

    a = 1.0 - 2.0 * s
    theta = symmetric_graded_nodes(0.0, math.pi, nodes - 1, grading_exponent(s))
    left, right = sine_hat_moments(theta, a)
    cell_mass = left + right
    widths = np.diff(theta)

    stiffness = cell_mass / widths**2
    diag = np.zeros(theta.size)
    diag[:-1] += stiffness
    diag[1:] += stiffness
    mass = np.zeros(theta.size)
    mass[:-1] += 0.5 * cell_mass
    mass[1:] += 0.5 * cell_mass

    scale = np.sqrt(mass)
    d = diag / mass
    e = -stiffness / (scale[:-1] * scale[1:])
    try:
        values = linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, K))
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"tridiagonal eigensolve failed for s={s}: {exc}") from exc
    logger.debug(f"sturm_liouville_spectrum(s={s}, K={K}, nodes={theta.size}) = {values}")
    return np.asarray(values)


def spectrum_table(s: float, k_max: int, nodes: int = DEFAULT_SPECTRUM_NODES) -> pd.DataFrame:
    """
    Closed forms against the finite-element oracle at two resolutions.

    Columns: k, lambda_explicit, Lambda_closed, Lambda_numeric, Lambda_coarse,
    rel_err (fine vs closed form; absolute for k = 0) and observed_order.
    """
    fine = sturm_liouville_spectrum(s, k_max, nodes)
    coarse = sturm_liouville_spectrum(s, k_max, nodes // 2)
    rows = []
    for k in range(k_max + 1):
        exact = Lambda_closed_form(k, s)
        err_fine = abs(fine[k] - exact)
        err_coarse = abs(coarse[k] - exact)
        order = math.log2(err_coarse / err_fine) if err_fine > 0 and err_coarse > 0 else math.nan
        rows.append({
            "k": k,
            "lambda_explicit": explicit_eigenvalue(k, s),
            "Lambda_closed": exact,
            "Lambda_numeric": float(fine[k]),
            "Lambda_coarse": float(coarse[k]),
            "rel_err": err_fine / exact if exact > 0 else err_fine,
            "observed_order": order,
        })
    return pd.DataFrame(rows)


# =============================================================================
# Spectral distance and the radial parametrix
# =============================================================================


def dist_to_spectrum(x: ArrayLike, s: float) -> np.ndarray | float:
    """
    Distance from x to {mu_k = k - s + 1/2 : k >= 0}.

    Example:
        >>> round(dist_to_spectrum(0.0, 0.3), 12)
        0.2
    """
    _check_s(s)
    x = np.asarray(x, dtype=float)
    mu0 = radial_exponent(0, s)
    nearest = np.maximum(np.round(x - mu0), 0.0)
    value = np.abs(x - (nearest + mu0))
    return value[()] if value.ndim == 0 else value


def gap_improved_bound(tau: float, s: float, t: ArrayLike) -> np.ndarray | float:
    """
    dist(|tau phi'(t)|, {mu_k}) along t.

    This factor multiplies the weighted mass on the left of the Carleman
    estimate once the radial spectrum has a gap; it vanishes where the weight
    gradient resonates with a mode.
    """
    weight = CarlemanWeight(tau)
    return dist_to_spectrum(np.abs(weight.prime(t)), s)


def _kernel_log_parts(mu: float, tau: float, t: np.ndarray, s_var: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    # sign and log|K| with the exponents combined before exponentiating
    weight = CarlemanWeight(tau)
    turning = weight.turning_point(mu)
    t, s_var = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s_var, dtype=float))
    shift = weight.value(t) - weight.value(s_var)
    gap = t - s_var

    sign = np.zeros(t.shape)
    log_abs = np.full(t.shape, -np.inf)

    outer = t > turning
    sign[outer] = -1.0
    log_abs[outer] = shift[outer] - mu * np.abs(gap[outer]) - math.log(2.0 * mu)

    middle = (t <= turning) & (gap > 0)
    if np.any(middle):
        g = gap[middle]
        sign[middle] = 1.0
        log_abs[middle] = shift[middle] + mu * g + np.log(-np.expm1(-2.0 * mu * g)) - math.log(2.0 * mu)
    return sign, log_abs


def parametrix_kernel(mu: float, tau: float, t: ArrayLike, s_var: ArrayLike) -> np.ndarray | float:
    """
    Kernel of the radial parametrix for e^(-tau phi)(d_t^2 - mu^2)e^(tau phi).

    K(t, s) = e^(tau(phi(t) - phi(s))) times
      -e^(-mu|t - s|)/(2 mu)   for t > T(mu),
      sinh(mu(t - s))/mu       for T(mu) >= t > s,
      0                        otherwise,
    with T(mu) the turning point. The middle branch is oriented as
    sinh(mu(t - s)), not sinh(mu(s - t)): with this sign both nonzero
    branches give d_t K a unit upward jump at t = s, so the conjugated
    operator maps K(., s) to +delta(t - s).

    Args:
        mu: Radial frequency, > 0.
        tau: Conjugation strength, > 0.
        t: Evaluation variable (broadcast against s_var).
        s_var: Source variable.
    """
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    sign, log_abs = _kernel_log_parts(mu, tau, np.asarray(t), np.asarray(s_var))
    value = sign * np.exp(log_abs)
    return value[()] if value.ndim == 0 else value


def kernel_bound_constant(mu: float, tau: float, t: ArrayLike, s_var: ArrayLike) -> float:
    """
    Smallest C with |K(t, s)| <= C tau^-1 e^(-dist(tau phi'(t), -mu)|t - s|) on the sampled pairs.

    Args:
        mu: Radial frequency.
        tau: Conjugation strength.
        t: 1D grid of t values.
        s_var: 1D grid of source values.

    Returns:
        The measured constant (0 if the kernel vanishes on the grid).
    """
    tt, ss = np.meshgrid(np.asarray(t, dtype=float), np.asarray(s_var, dtype=float), indexing="ij")
    sign, log_abs = _kernel_log_parts(mu, tau, tt, ss)
    dist = np.abs(tau * np.asarray(phi_prime(tt)) + mu)
    exponent = log_abs + math.log(tau) + dist * np.abs(tt - ss)
    finite = np.isfinite(exponent)
    if not finite.any():
        return 0.0
    constant = float(np.exp(exponent[finite].max()))
    logger.debug(f"kernel_bound_constant(mu={mu}, tau={tau}) = {constant:.4f}")
    return constant


def conjugated_radial_operator(values: np.ndarray, t: np.ndarray, mu: float, tau: float) -> np.ndarray:
    """
    (d_t^2 - 2 varphi' d_t + varphi'^2 - varphi'' - mu^2) by centred differences on a uniform t grid.

    Returns the interior values (length len(t) - 2).
    """
    weight = CarlemanWeight(tau)
    h = float(t[1] - t[0])
    inner = t[1:-1]
    second = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h**2
    first = (values[2:] - values[:-2]) / (2.0 * h)
    d1 = weight.prime(inner)
    return second - 2.0 * d1 * first + (d1**2 - weight.double_prime(inner) - mu**2) * values[1:-1]
