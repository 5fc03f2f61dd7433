"""
Extension problem and Dirichlet-to-Neumann map.

The extension of boundary data u is sum_xi u_hat(xi) e^(i xi y1) theta_xi(y2),
where theta_xi solves theta'' + ((1-2s)/y) theta' - xi^2 theta = 0 with
theta(0) = 1 and decay at infinity. The weighted normal derivative at the
boundary is d_s |xi|^(2s) u_hat; d_s is measured here and divided out so
that the normalized map is exactly |xi|^(2s).

Also: explicit homogeneous solutions r^k P_k(cos theta) and the blow-up
rescaling normalized on the unit half-ball.
"""

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate, special

from carleman_lab.core.errors import (
    AliasingError,
    ExtrapolationError,
    ParameterError,
    ShootingError,
)
from carleman_lab.core.grid import (
    Chart,
    FractionalParams,
    GridFunction,
    HalfPlaneGrid,
    half_ball,
    weighted_norm,
)
from carleman_lab.core.spectrum import legendre_coeffs

logger = logging.getLogger(__name__)

MAX_HOMOGENEOUS_DEGREE = 6
FROBENIUS_START = 1e-6
SHOOTING_END = 20.0
# cancellation between the two growing solutions limits the shot to |xi| y2 <= 5
RELIABLE_RANGE = 5.0
FLUX_HEIGHT = 1e-5
DTN_AGREEMENT = 1e-6


def _check_s(s: float) -> None:
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0, 1), got {s}")


# =============================================================================
# Per-frequency profile
# =============================================================================


def _scaled_profile(z: np.ndarray, s: float) -> np.ndarray:
    # (2^(1-s)/Gamma(s)) z^s K_s(z), with the z -> 0 limit 1
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    positive = z > 0
    zp = z[positive]
    out[positive] = 2.0 ** (1.0 - s) / special.gamma(s) * zp**s * special.kve(s, zp) * np.exp(-zp)
    return out


def extension_profile(xi: float, s: float, y2: ArrayLike) -> np.ndarray | float:
    """
    Decaying solution of theta'' + ((1-2s)/y) theta' - xi^2 theta = 0 with theta(0) = 1.

    Evaluated through the modified Bessel function K_s; `profile_ode_oracle`
    integrates the ODE directly and the two are checked against each other.

    Args:
        xi: Frequency, nonzero.
        s: Order in (0, 1).
        y2: Heights, >= 0.

    Example:
        >>> round(float(extension_profile(2.0, 0.5, 0.5)), 12) == round(math.exp(-1.0), 12)
        True
    """
    _check_s(s)
    if xi == 0:
        raise ParameterError("extension_profile needs a nonzero frequency")
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 < 0):
        raise ParameterError("profile heights must be nonnegative")
    value = _scaled_profile(abs(xi) * y2, s)
    return value[()] if value.ndim == 0 else value


def _frobenius(
    y: np.ndarray, s: float, magnitude: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    # two-term series of the regular (theta1) and z^(2s) (theta2) solutions, z = |xi| y, with y-derivatives
    c1 = 1.0 / (4.0 * (1.0 - s))
    c2 = 1.0 / (4.0 * (1.0 + s))
    z = magnitude * y
    with np.errstate(divide="ignore", invalid="ignore"):
        theta1 = 1.0 + c1 * z * z
        dtheta1 = magnitude * 2.0 * c1 * z
        theta2 = z ** (2 * s) * (1.0 + c2 * z * z)
        dtheta2 = magnitude * (2 * s * z ** (2 * s - 1) + (2 * s + 2) * c2 * z ** (2 * s + 1))
    return theta1, dtheta1, theta2, dtheta2


@dataclass(frozen=True)
class _Shot:
    heights: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    combination: float


def _shoot(magnitude: float, s: float, heights: np.ndarray, far: float = SHOOTING_END) -> _Shot:
    # integrates in the unscaled height y2, so every |xi| gets its own solve
    a = 1.0 - 2.0 * s
    xi2 = magnitude * magnitude
    y0 = FROBENIUS_START / magnitude
    y_far = far / magnitude

    def rhs(x: float, state: np.ndarray) -> np.ndarray:
        t1, p1, t2, p2 = state
        return np.array([p1, xi2 * t1 - a / x * p1, p2, xi2 * t2 - a / x * p2])

    start = np.array(_frobenius(np.array(y0), s, magnitude), dtype=float)
    inside = heights[(heights > y0) & (heights < y_far)]
    t_eval = np.unique(np.append(inside, y_far))
    solution = integrate.solve_ivp(rhs, (y0, y_far), start, method="DOP853", rtol=1e-12, atol=1e-14,
                                   t_eval=t_eval)
    if not solution.success:
        raise ShootingError(f"profile integration failed for |xi|={magnitude}, s={s}: {solution.message}")

    theta1, dtheta1, theta2, dtheta2 = solution.y
    combination = float(-theta1[-1] / theta2[-1])
    shot = theta1 + combination * theta2
    trusted = shot[magnitude * t_eval <= RELIABLE_RANGE]
    if combination >= 0 or np.any(np.diff(trusted) > 1e-9) or np.any(trusted < -1e-9):
        raise ShootingError(
            f"shot for |xi|={magnitude}, s={s} does not decay (C={combination:.6g}, min={shot.min():.3g})"
        )
    return _Shot(heights=t_eval, theta=shot, dtheta=dtheta1 + combination * dtheta2, combination=combination)


def profile_ode_oracle(xi: float, s: float, y2: ArrayLike, far: float = SHOOTING_END) -> np.ndarray:
    """
    The extension profile by shooting.

    Both Frobenius solutions are started at |xi| y2 = 1e-6 and integrated
    with DOP853; the decaying combination theta1 + C theta2 is fixed by
    making it vanish at |xi| y2 = far. Reliable for |xi| y2 up to about 5.

    Args:
        xi: Frequency, nonzero.
        s: Order in (0, 1).
        y2: Heights, >= 0.
        far: Matching point in the scaled variable |xi| y2.

    Returns:
        Profile values at y2.

    Raises:
        ShootingError: If the integration fails or the shot does not decay.
    """
    _check_s(s)
    if xi == 0:
        raise ParameterError("profile_ode_oracle needs a nonzero frequency")
    magnitude = abs(float(xi))
    y = np.atleast_1d(np.asarray(y2, dtype=float))
    shot = _shoot(magnitude, s, y, far)

    y0, y_far = FROBENIUS_START / magnitude, far / magnitude
    values = np.zeros_like(y)
    inside = (y > y0) & (y < y_far)
    values[inside] = shot.theta[np.searchsorted(shot.heights, y[inside])]
    small = y <= y0
    if np.any(small):
        s1, _, s2, _ = _frobenius(y[small], s, magnitude)
        values[small] = s1 + shot.combination * s2
    return values


# =============================================================================
# Dirichlet-to-Neumann symbol
# =============================================================================


def dtn_constant_closed_form(s: float) -> float:
    """2^(1-2s) Gamma(1-s)/Gamma(s); reported next to the measured constant only."""
    _check_s(s)
    return 2.0 ** (1.0 - 2.0 * s) * special.gamma(1.0 - s) / special.gamma(s)


@functools.lru_cache(maxsize=4096)
def _measured_flux(magnitude: float, s: float) -> float:
    # -y^(1-2s) theta'(y) = m - 2 c1 xi^2 y^(2-2s) + O(y^2): one Richardson step removes the middle term
    heights = FLUX_HEIGHT / magnitude * np.array([1.0, 0.5, 0.25])
    shot = _shoot(magnitude, s, heights)
    rows = np.searchsorted(shot.heights, heights)
    flux = -heights ** (1.0 - 2.0 * s) * shot.dtheta[rows]
    gain = 2.0 ** (2.0 - 2.0 * s)
    first = (gain * flux[1] - flux[0]) / (gain - 1.0)
    second = (gain * flux[2] - flux[1]) / (gain - 1.0)
    if abs(first - second) > DTN_AGREEMENT * abs(first):
        raise ExtrapolationError(
            f"DtN extrapolation for |xi|={magnitude}, s={s} did not settle ({first} vs {second})"
        )
    return float(first)


def dtn_symbol(xi: ArrayLike, s: float) -> np.ndarray | float:
    """
    m(xi) = -lim_{y2 -> 0} y2^(1-2s) d_2 theta_xi(y2).

    Each distinct |xi| is shot separately (see `profile_ode_oracle`) and the
    weighted flux of the shot is extrapolated to y2 = 0 from three small
    heights in the variable y2^(2-2s). m(0) = 0.

    Raises:
        ShootingError: If a shot fails to decay.
        ExtrapolationError: If the third height disagrees with the extrapolation.
    """
    _check_s(s)
    xi = np.asarray(xi, dtype=float)
    magnitudes = np.abs(xi)
    value = np.zeros_like(magnitudes)
    for magnitude in np.unique(magnitudes[magnitudes > 0]):
        value[magnitudes == magnitude] = _measured_flux(float(magnitude), float(s))
    return value[()] if value.ndim == 0 else value


def dtn_constant(s: float) -> float:
    """The measured d_s = m(1)."""
    return float(dtn_symbol(1.0, s))


def normalized_dtn(xi: ArrayLike, s: float) -> np.ndarray | float:
    """m(xi)/d_s; equals |xi|^(2s) up to the shooting error."""
    return dtn_symbol(xi, s) / dtn_constant(s)


# =============================================================================
# Extension of boundary data
# =============================================================================


@dataclass(frozen=True, eq=False)
class SpectralBoundaryData:
    """
    Boundary data u(y1) = Re sum u_hat(xi) e^(i xi (y1 - origin)).

    Real data carry Hermitian amplitudes, u_hat(-xi) = conj(u_hat(xi)).
    """
    frequencies: np.ndarray
    amplitudes: np.ndarray
    origin: float = 0.0

    def __post_init__(self) -> None:
        if self.frequencies.shape != self.amplitudes.shape or self.frequencies.ndim != 1:
            raise ParameterError("frequencies and amplitudes must be 1D arrays of equal length")

    @classmethod
    def from_samples(cls, y1: ArrayLike, values: ArrayLike) -> "SpectralBoundaryData":
        """Discrete Fourier coefficients of uniformly spaced samples (one period)."""
        y1 = np.asarray(y1, dtype=float)
        values = np.asarray(values, dtype=float)
        if y1.size < 2 or y1.shape != values.shape:
            raise ParameterError("need matching sample positions and values")
        h = float(y1[1] - y1[0])
        if not np.allclose(np.diff(y1), h, rtol=1e-9, atol=0.0):
            raise ParameterError("boundary samples must be uniformly spaced")
        amplitudes = np.fft.fft(values) / values.size
        frequencies = 2.0 * math.pi * np.fft.fftfreq(values.size, d=h)
        return cls(frequencies=frequencies, amplitudes=amplitudes, origin=float(y1[0]))

    @classmethod
    def cosine(cls, xi0: float, amplitude: float = 1.0) -> "SpectralBoundaryData":
        """amplitude * cos(xi0 y1)."""
        return cls(frequencies=np.array([xi0, -xi0]), amplitudes=np.array([0.5, 0.5]) * amplitude + 0j)

    @property
    def is_hermitian(self) -> bool:
        order = np.argsort(self.frequencies)
        mirrored = np.argsort(-self.frequencies)
        return bool(np.allclose(self.frequencies[order], -self.frequencies[mirrored])
                    and np.allclose(self.amplitudes[order], np.conj(self.amplitudes[mirrored])))

    @property
    def max_frequency(self) -> float:
        return float(np.abs(self.frequencies).max()) if self.frequencies.size else 0.0

    def _phases(self, y1: np.ndarray) -> np.ndarray:
        return np.exp(1j * np.multiply.outer(y1 - self.origin, self.frequencies))

    def evaluate(self, y1: ArrayLike, symbol: np.ndarray | None = None) -> np.ndarray:
        """The boundary function, optionally with each amplitude multiplied by symbol."""
        y1 = np.asarray(y1, dtype=float)
        amplitudes = self.amplitudes if symbol is None else self.amplitudes * symbol
        return np.real(self._phases(y1) @ amplitudes)


def _check_resolved(data: SpectralBoundaryData, grid: HalfPlaneGrid) -> None:
    nyquist = math.pi / grid.h1
    if data.max_frequency > nyquist * (1 + 1e-12):
        raise AliasingError(
            f"frequency {data.max_frequency:.4g} exceeds the tangential Nyquist limit {nyquist:.4g}"
        )


def cs_extend(data: SpectralBoundaryData, s: float, grid: HalfPlaneGrid) -> GridFunction:
    """
    Extension of boundary data into the half-plane.

    Args:
        data: Boundary data in frequency form.
        s: Order in (0, 1); must match the grid.
        grid: Cartesian target grid.

    Returns:
        The extension with an analytic evaluator.

    Raises:
        AliasingError: If the data are not resolved by the tangential mesh.
    """
    _check_s(s)
    if abs(grid.params.s - s) > 1e-14:
        raise ParameterError(f"grid is built for s={grid.params.s}, not s={s}")
    _check_resolved(data, grid)

    freqs = data.frequencies
    abs_freqs = np.abs(freqs)

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
        total = np.zeros(y1.shape)
        for xi, amp, mag in zip(freqs, data.amplitudes, abs_freqs):
            if amp == 0:
                continue
            profile = _scaled_profile(mag * y2, s)
            total += np.real(amp * np.exp(1j * xi * (y1 - data.origin))) * profile
        return total

    logger.debug(f"cs_extend: {freqs.size} modes, max |xi| = {data.max_frequency:.4g}, s = {s}")
    return GridFunction.from_function(grid, evaluator, label="extension")


def dtn_apply(data: SpectralBoundaryData, s: float, y1: ArrayLike, normalized: bool = False) -> np.ndarray:
    """Apply the DtN symbol (or its normalized version) in frequency space and return to y1."""
    symbol = normalized_dtn(data.frequencies, s) if normalized else dtn_symbol(data.frequencies, s)
    return data.evaluate(y1, np.asarray(symbol))


# =============================================================================
# Homogeneous solutions and blow-up
# =============================================================================


def homogeneous_polynomial(k: int, s: float):
    """
    Evaluator of w_k(y) = |y|^k P_k(cos theta).

    The parity of P_k makes w_k a polynomial in (y1, y2^2):
    w_k = sum_j alpha_j y1^j (y1^2 + y2^2)^((k - j)/2).
    """
    if not 0 <= k <= MAX_HOMOGENEOUS_DEGREE:
        raise ParameterError(f"homogeneous solutions are supported for 0 <= k <= {MAX_HOMOGENEOUS_DEGREE}")
    coeffs = legendre_coeffs(k, s)

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        y1 = np.asarray(y1, dtype=float)
        rho2 = y1 * y1 + np.asarray(y2, dtype=float) ** 2
        total = np.zeros(np.broadcast(y1, rho2).shape)
        for j in range(k % 2, k + 1, 2):
            total = total + coeffs[j] * y1**j * rho2 ** ((k - j) // 2)
        return total

    return evaluator


def homogeneous_solution(k: int, s: float, grid: HalfPlaneGrid) -> GridFunction:
    """
    Sample w_k = |y|^k P_k(cos theta) on the grid.

    w_k solves div(y2^(1-2s) grad w) = 0 with zero weighted Neumann data.
    """
    _check_s(s)
    if abs(grid.params.s - s) > 1e-14:
        raise ParameterError(f"grid is built for s={grid.params.s}, not s={s}")
    return GridFunction.from_function(grid, homogeneous_polynomial(k, s), label=f"w_{k}")


def blow_up_rescale(w: GridFunction, sigma: float, s: float | None = None,
                    grid: HalfPlaneGrid | None = None) -> GridFunction:
    """
    w_sigma(y) = w(sigma y) / (sigma^(-(n+1)/2) sigma^(-(1-2s)/2) ||y2^((1-2s)/2) w||_{L2(B_sigma+)}).

    The output has unit weighted norm on the unit half-ball.

    Args:
        w: Cartesian grid function defined on B_sigma+.
        sigma: Scale, > 0.
        s: Order; defaults to the grid's.
        grid: Target grid; defaults to the unit box [-1, 1] x [0, 1] at w's resolution.

    Raises:
        ParameterError: If sigma <= 0 or the weighted norm on B_sigma+ vanishes.
    """
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    params: FractionalParams = w.grid.params
    if s is not None and abs(params.s - s) > 1e-14:
        raise ParameterError(f"w lives on a grid for s={params.s}, not s={s}")

    norm = weighted_norm(w, half_ball(sigma))
    if norm <= 0.0:
        raise ParameterError(f"cannot rescale '{w.label}': zero weighted norm on B_{sigma}+")

    a = params.weight_exponent
    denominator = sigma ** (-(params.n + 1) / 2.0) * sigma ** (-a / 2.0) * norm
    if grid is None:
        grid = HalfPlaneGrid.box(1.0, 1.0, w.grid.y1.size, params, normal_size=w.grid.y2.size)

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return w.evaluate(sigma * np.asarray(y1), sigma * np.asarray(y2)) / denominator

    logger.debug(f"blow_up_rescale('{w.label}', sigma={sigma}): norm on B_sigma+ = {norm:.6g}")
    return GridFunction(
        grid=grid,
        values=evaluator(*grid.mesh()),
        chart=Chart.CARTESIAN,
        evaluator=evaluator,
        label=f"{w.label}@{sigma:g}",
    )
