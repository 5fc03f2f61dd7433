"""
Carleman weight.

The weight phi, its derivatives and the turning point T(mu) of the radial
parametrix, all written in the conformal variable t = ln|y|. Cartesian callers
compose with ln|y| themselves (see `phi_of_radius`).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import optimize

from carleman_lab.core.errors import ParameterError

logger = logging.getLogger(__name__)

# sup |phi' + 1| = pi/20
GRADIENT_SPREAD = math.pi / 20
TURNING_POINT_TOL = 1e-10


def phi(t: ArrayLike) -> np.ndarray | float:
    """
    Evaluate phi(t) = -t + (t*arctan(t) - ln(1 + t^2)/2) / 10.

    Example:
        >>> phi(0.0)
        0.0
    """
    t = np.asarray(t, dtype=float)
    value = -t + 0.1 * (t * np.arctan(t) - 0.5 * np.log1p(t * t))
    return value[()] if value.ndim == 0 else value


def phi_prime(t: ArrayLike) -> np.ndarray | float:
    """Evaluate phi'(t) = -1 + arctan(t)/10."""
    t = np.asarray(t, dtype=float)
    value = -1.0 + 0.1 * np.arctan(t)
    return value[()] if value.ndim == 0 else value


def phi_double_prime(t: ArrayLike) -> np.ndarray | float:
    """Evaluate phi''(t) = 1/(10(1 + t^2)); strictly positive."""
    t = np.asarray(t, dtype=float)
    value = 0.1 / (1.0 + t * t)
    return value[()] if value.ndim == 0 else value


def phi_third(t: ArrayLike) -> np.ndarray | float:
    """Evaluate phi'''(t) = -t/(5(1 + t^2)^2)."""
    t = np.asarray(t, dtype=float)
    value = -0.2 * t / (1.0 + t * t) ** 2
    return value[()] if value.ndim == 0 else value


def phi_fourth(t: ArrayLike) -> np.ndarray | float:
    """Evaluate phi''''(t) = (6t^2 - 2) / (10(1 + t^2)^3)."""
    t = np.asarray(t, dtype=float)
    value = 0.1 * (6.0 * t * t - 2.0) / (1.0 + t * t) ** 3
    return value[()] if value.ndim == 0 else value


def phi_of_radius(r: ArrayLike) -> np.ndarray | float:
    """Evaluate the weight at a Cartesian radius |y| = r > 0."""
    return phi(np.log(np.asarray(r, dtype=float)))


def turning_point(mu: float, tau: float) -> float:
    """
    Solve tau * phi'(t) = -mu for t.

    phi' is strictly increasing with range (-1 - pi/20, -1 + pi/20), so the
    root is unique when mu/tau lies strictly inside (1 - pi/20, 1 + pi/20).
    Outside that window the turning point is -inf (mu too large) or +inf
    (mu too small).

    Args:
        mu: Radial frequency, > 0.
        tau: Conjugation strength, > 0.

    Returns:
        The turning point, possibly +-inf.

    Raises:
        ParameterError: If mu or tau is not positive.
    """
    if not mu > 0 or not tau > 0:
        raise ParameterError(f"turning_point needs mu > 0 and tau > 0, got mu={mu}, tau={tau}")

    ratio = mu / tau
    if ratio >= 1.0 + GRADIENT_SPREAD:
        return -math.inf
    if ratio <= 1.0 - GRADIENT_SPREAD:
        return math.inf

    def residual(t: float) -> float:
        return tau * phi_prime(t) + mu

    # residual is increasing; widen the bracket until it changes sign
    lo, hi = -1.0, 1.0
    while residual(lo) > 0:
        lo *= 2.0
    while residual(hi) < 0:
        hi *= 2.0

    root = optimize.bisect(residual, lo, hi, xtol=TURNING_POINT_TOL, maxiter=2000)
    logger.debug(f"turning_point(mu={mu}, tau={tau}) = {root}")
    return float(root)


def commutator_density(t: ArrayLike, v: ArrayLike, dv: ArrayLike, tau: float) -> dict[str, np.ndarray]:
    """
    Pointwise densities of <[S, A]v, v> for the conjugated weight tau*phi.

    S = d_t^2 + (tau phi')^2 - mu^2 and A = -2 tau phi' d_t - tau phi''; after
    integration by parts the form is 4 tau^3 phi'' phi'^2 v^2 + 4 tau phi'' v'^2
    - tau phi'''' v^2 (mu drops out).

    Args:
        t: Conformal nodes.
        v: Samples of v on t.
        dv: Samples of dv/dt on t.
        tau: Conjugation strength.

    Returns:
        Mapping with the three densities "bulk", "gradient" and "fourth".
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    d2 = phi_double_prime(t)
    d1 = phi_prime(t)
    return {
        "bulk": 4.0 * tau**3 * d2 * d1**2 * v**2,
        "gradient": 4.0 * tau * d2 * dv**2,
        "fourth": tau * phi_fourth(t) * v**2,
    }


@dataclass(frozen=True)
class CarlemanWeight:
    """The conjugated weight varphi = tau * phi."""
    tau: float

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")

    def value(self, t: ArrayLike) -> np.ndarray | float:
        return self.tau * phi(t)

    def prime(self, t: ArrayLike) -> np.ndarray | float:
        return self.tau * phi_prime(t)

    def double_prime(self, t: ArrayLike) -> np.ndarray | float:
        return self.tau * phi_double_prime(t)

    def fourth(self, t: ArrayLike) -> np.ndarray | float:
        return self.tau * phi_fourth(t)

    def exp_weight(self, r: ArrayLike) -> np.ndarray:
        """e^{tau phi(ln r)} at Cartesian radii r > 0."""
        return np.exp(self.tau * np.asarray(phi_of_radius(r)))

    def turning_point(self, mu: float) -> float:
        return turning_point(mu, self.tau)

    def gradient_bounds(self) -> tuple[float, float]:
        """Range of |varphi'|; contained in [3 tau/4, 2 tau]."""
        return (self.tau * (1.0 - GRADIENT_SPREAD), self.tau * (1.0 + GRADIENT_SPREAD))
