"""
Test-function batteries for the inequality evaluators.

Every function is compactly supported in a half-annulus {delta <= |y| <= R}
strictly inside the box, so the Carleman weight stays finite on its support.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from carleman_lab.core.errors import GridDomainError, ParameterError
from carleman_lab.core.extension import homogeneous_polynomial
from carleman_lab.core.grid import FractionalParams, GridFunction, HalfPlaneGrid
from carleman_lab.core.spectrum import legendre_coeffs

logger = logging.getLogger(__name__)

STANDARD_SUPPORTS: tuple[tuple[float, float], ...] = (
    (0.2, 0.8), (0.25, 1.0), (0.3, 0.9), (0.2, 0.6), (0.35, 1.05),
)
STANDARD_ANGULAR = (0, 1, 2, 3, 4)
STANDARD_SEEDS = (0, 1, 2, 3)
BOX_HALF_WIDTH = 1.25
BOX_HEIGHT = 1.25


class Family(str, Enum):
    """Test-function families."""
    ANNULAR = "annular"
    HOMOGENEOUS = "homogeneous"
    RANDOM = "random"


@dataclass(frozen=True)
class TestFunctionSpec:
    """One member of a battery: family, support annulus, angular index and seed."""
    __test__ = False

    family: Family
    delta: float
    R: float
    angular_index: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < self.R:
            raise ParameterError(f"support needs 0 < delta < R, got ({self.delta}, {self.R})")
        if self.angular_index < 0:
            raise ParameterError("angular index must be nonnegative")

    @property
    def spec_id(self) -> str:
        return f"{self.family.value}-d{self.delta:g}-R{self.R:g}-k{self.angular_index}-seed{self.seed}"


# =============================================================================
# Cutoffs
# =============================================================================


def smoothstep(x: np.ndarray) -> np.ndarray:
    """C^2 quintic step: 0 for x <= 0, 1 for x >= 1, max slope 15/8."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def plateau_cutoff(r: np.ndarray, inner: float, plateau_lo: float, plateau_hi: float, outer: float) -> np.ndarray:
    """1 on [plateau_lo, plateau_hi], 0 outside (inner, outer), quintic ramps in between."""
    rise = smoothstep((r - inner) / (plateau_lo - inner))
    fall = smoothstep((outer - r) / (outer - plateau_hi))
    return rise * fall


def annular_bump(r: np.ndarray, delta: float, R: float) -> np.ndarray:
    """Plateau cutoff with ramps over the inner and outer thirds of [delta, R]."""
    third = (R - delta) / 3.0
    return plateau_cutoff(r, delta, delta + third, R - third, R)


def radial_cutoff(r: np.ndarray, r0: float, r1: float) -> np.ndarray:
    """1 on [r0, r1], supported in (r0/2, 2 r1); |psi'| <= 3.75/r0."""
    return plateau_cutoff(r, 0.5 * r0, r0, r1, 2.0 * r1)


# =============================================================================
# Families
# =============================================================================


def _modulation(spec: TestFunctionSpec):
    rng = np.random.default_rng(spec.seed)
    omega = rng.uniform(1.0, 2.0) * 2.0 * np.pi / (spec.R - spec.delta)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return lambda r: 1.0 + 0.3 * np.sin(omega * r + phase)


def _annular(spec: TestFunctionSpec, params: FractionalParams):
    coeffs = legendre_coeffs(spec.angular_index, params.s)
    modulation = _modulation(spec)

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        r = np.hypot(y1, y2)
        cos = np.divide(y1, r, out=np.zeros_like(r), where=r > 0)
        return annular_bump(r, spec.delta, spec.R) * modulation(r) * np.polynomial.polynomial.polyval(cos, coeffs)

    return evaluator


def _homogeneous(spec: TestFunctionSpec, params: FractionalParams):
    w_k = homogeneous_polynomial(spec.angular_index, params.s)
    modulation = _modulation(spec)

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        r = np.hypot(y1, y2)
        return annular_bump(r, spec.delta, spec.R) * modulation(r) * w_k(y1, y2)

    return evaluator


def _random(spec: TestFunctionSpec, params: FractionalParams):
    rng = np.random.default_rng(1000 + spec.seed)
    count = 2 + spec.angular_index
    radii = rng.uniform(spec.delta, spec.R, count)
    angles = rng.uniform(0.0, np.pi, count)
    widths = rng.uniform(0.15, 0.3, count) * (spec.R - spec.delta)
    weights = rng.normal(size=count)
    beta = rng.uniform(0.5, 1.0)
    centres = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)

    def gaussians(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        total = np.zeros(np.broadcast(y1, y2).shape)
        for (c1, c2), width, weight in zip(centres, widths, weights):
            # the mirror image keeps the sum even in y2
            for mirror in (c2, -c2):
                total = total + weight * np.exp(-((y1 - c1) ** 2 + (y2 - mirror) ** 2) / (2.0 * width**2))
        return total

    def evaluator(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        r = np.hypot(y1, y2)
        neumann_part = beta * y2 ** (2.0 * params.s) * np.exp(-(y1 * y1) / (2.0 * spec.R**2))
        return annular_bump(r, spec.delta, spec.R) * (gaussians(y1, y2) + neumann_part)

    return evaluator


_BUILDERS = {
    Family.ANNULAR: _annular,
    Family.HOMOGENEOUS: _homogeneous,
    Family.RANDOM: _random,
}


def build_test_function(spec: TestFunctionSpec, grid: HalfPlaneGrid) -> GridFunction:
    """
    Sample a battery member on the grid, keeping its analytic evaluator.

    Raises:
        GridDomainError: If the support annulus does not fit strictly inside the grid.
    """
    if not (spec.R < grid.y1[-1] and -spec.R > grid.y1[0] and spec.R < grid.y2[-1]):
        raise GridDomainError(f"support of {spec.spec_id} is not strictly inside the grid")
    evaluator = _BUILDERS[spec.family](spec, grid.params)
    return GridFunction.from_function(grid, evaluator, label=spec.spec_id)


def standard_battery(families: list[Family] | None = None, quick: bool = False,
                     seed: int = 0) -> list[TestFunctionSpec]:
    """
    5 supports x 5 angular indices x 4 seeds per family (quick: 1 x 2 x 1).

    Args:
        families: Families to include; all by default.
        quick: Reduced battery for smoke runs.
        seed: Offset added to the standard seeds.
    """
    families = families or list(Family)
    supports = STANDARD_SUPPORTS[:1] if quick else STANDARD_SUPPORTS
    angular = STANDARD_ANGULAR[:2] if quick else STANDARD_ANGULAR
    seeds = STANDARD_SEEDS[:1] if quick else STANDARD_SEEDS
    specs = [
        TestFunctionSpec(family, delta, R, k, seed + base)
        for family in families
        for delta, R in supports
        for k in angular
        for base in seeds
    ]
    logger.debug(f"standard_battery: {len(specs)} specs over {[f.value for f in families]}")
    return specs


def angular_test_function(spec: TestFunctionSpec, s: float):
    """P_k(cos theta) times a seeded modulation 1 + 0.3 sin(omega theta + phase), as a function of theta."""
    coeffs = legendre_coeffs(spec.angular_index, s)
    rng = np.random.default_rng(spec.seed)
    omega = rng.uniform(0.5, 2.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    def evaluator(theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.polynomial.polynomial.polyval(np.cos(theta), coeffs) * (1.0 + 0.3 * np.sin(omega * theta + phase))

    return evaluator


def battery_grid(params: FractionalParams, size: int) -> HalfPlaneGrid:
    """The standard box [-1.25, 1.25] x [0, 1.25]."""
    return HalfPlaneGrid.box(BOX_HALF_WIDTH, BOX_HEIGHT, size, params)
