"""
Half-plane grids and weighted quadrature.

Tensor grids over {y2 >= 0}: uniform tangential nodes, normal nodes graded
toward y2 = 0 so that the degenerate weight y2^(1-2s) is resolved without a
special mesh per s. Integrals use a weighted trapezoid: the integrand is
interpolated linearly on each cell and integrated exactly against the weight.
Ball regions are integrated with a polar rule built the same way.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Protocol

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss
from scipy import special
from scipy.interpolate import RegularGridInterpolator

from carleman_lab.core.errors import GridDomainError, NoiseFloorError, ParameterError

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_RADIAL_CELLS = 200
DEFAULT_ANGULAR_CELLS = 200

# Cells narrower than this fraction of their distance to the singular point
# are integrated with Gauss-Legendre instead of the closed form.
_SMOOTH_CELL_RATIO = 0.1
_GL_NODES, _GL_WEIGHTS = leggauss(8)


# =============================================================================
# Parameters
# =============================================================================


@dataclass(frozen=True)
class FractionalParams:
    """Order s of the fractional Laplacian and boundary dimension n."""
    s: float
    n: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {self.s}")
        if self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")

    @property
    def weight_exponent(self) -> float:
        """The exponent 1 - 2s of y2 in the bulk measure."""
        return 1.0 - 2.0 * self.s

    @property
    def conformal_shift(self) -> float:
        """(n - 2s)/2, the exponent of e^t relating u and w."""
        return 0.5 * (self.n - 2.0 * self.s)


def grading_exponent(s: float) -> float:
    """Normal grading exponent 2/(2-2s), clamped to [1, 3]."""
    return float(np.clip(2.0 / (2.0 - 2.0 * s), 1.0, 3.0))


def power_grading(power: float) -> float:
    """Grading exponent suited to the weight x^power (power = 1-2s gives grading_exponent)."""
    return float(np.clip(2.0 / (1.0 + power), 1.0, 3.0))


def graded_nodes(length: float, cells: int, gamma: float) -> np.ndarray:
    """Nodes length * (j/cells)^gamma, j = 0..cells."""
    if cells < 1:
        raise ParameterError(f"need at least one cell, got {cells}")
    return length * (np.arange(cells + 1) / cells) ** gamma


def symmetric_graded_nodes(a: float, b: float, cells: int, gamma: float) -> np.ndarray:
    """Nodes on [a, b] graded toward both endpoints; cells is rounded up to even."""
    half = max(1, (cells + 1) // 2)
    left = graded_nodes(0.5 * (b - a), half, gamma)
    return np.concatenate([a + left, b - left[-2::-1]])


# =============================================================================
# Exact cell moments
# =============================================================================


def _gauss_legendre_hats(a: np.ndarray, b: np.ndarray, weight: Callable[[np.ndarray], np.ndarray],
                         hat_of: Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
                         ) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    w = weight(x) * half[:, None] * _GL_WEIGHTS[None, :]
    left_hat, right_hat = hat_of(x, a[:, None], b[:, None])
    return (w * left_hat).sum(axis=1), (w * right_hat).sum(axis=1)


def power_hat_moments(nodes: np.ndarray, power: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Exact moments of x^power against the two linear hats of every cell.

    Args:
        nodes: Increasing nodes with nodes[0] >= 0.
        power: Weight exponent, > -1 when nodes[0] == 0.

    Returns:
        (left, right) arrays of length len(nodes) - 1 with
        left[j] = int x^p (b - x)/(b - a) dx and right[j] = int x^p (x - a)/(b - a) dx.
    """
    nodes = np.asarray(nodes, dtype=float)
    a, b = nodes[:-1], nodes[1:]
    if a[0] < 0:
        raise ParameterError("power_hat_moments needs nonnegative nodes")
    if a[0] == 0 and power <= -1:
        raise ParameterError(f"weight x^{power} is not integrable at 0")

    width = b - a
    smooth = (a > 0) & (width < _SMOOTH_CELL_RATIO * a)
    left = np.empty_like(a)
    right = np.empty_like(a)

    if np.any(smooth):
        left[smooth], right[smooth] = _gauss_legendre_hats(
            a[smooth], b[smooth],
            lambda x: x**power,
            lambda x, lo, hi: ((hi - x) / (hi - lo), (x - lo) / (hi - lo)),
        )
    rough = ~smooth
    if np.any(rough):
        ar, br, wr = a[rough], b[rough], width[rough]
        i0 = (br ** (power + 1) - ar ** (power + 1)) / (power + 1)
        i1 = (br ** (power + 2) - ar ** (power + 2)) / (power + 2)
        left[rough] = (br * i0 - i1) / wr
        right[rough] = (i1 - ar * i0) / wr
    return left, right


def _sine_antiderivative(theta: np.ndarray, power: float) -> np.ndarray:
    # int_0^theta sin^p via the regularized incomplete beta function
    alpha = 0.5 * (power + 1.0)
    total = special.beta(alpha, 0.5)
    reflected = np.minimum(theta, math.pi - theta)
    partial = 0.5 * total * special.betainc(alpha, 0.5, np.sin(reflected) ** 2)
    return np.where(theta <= 0.5 * math.pi, partial, total - partial)


def sine_hat_moments(theta: np.ndarray, power: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Exact moments of sin(theta)^power against hats linear in cos(theta).

    Args:
        theta: Increasing nodes in [0, pi].
        power: Weight exponent, > -1.

    Returns:
        (left, right) moments per cell.
    """
    if power <= -1:
        raise ParameterError(f"weight sin^{power} is not integrable at the poles")
    theta = np.asarray(theta, dtype=float)
    a, b = theta[:-1], theta[1:]
    xa, xb = np.cos(a), np.cos(b)
    distance = np.minimum(a, math.pi - b)
    smooth = (distance > 0) & ((b - a) < _SMOOTH_CELL_RATIO * distance)

    left = np.empty_like(a)
    right = np.empty_like(a)
    if np.any(smooth):
        left[smooth], right[smooth] = _gauss_legendre_hats(
            a[smooth], b[smooth],
            lambda x: np.sin(x) ** power,
            lambda x, lo, hi: (
                (np.cos(x) - np.cos(hi)) / (np.cos(lo) - np.cos(hi)),
                (np.cos(lo) - np.cos(x)) / (np.cos(lo) - np.cos(hi)),
            ),
        )
    rough = ~smooth
    if np.any(rough):
        m0 = _sine_antiderivative(b[rough], power) - _sine_antiderivative(a[rough], power)
        m1 = (np.sin(b[rough]) ** (power + 1) - np.sin(a[rough]) ** (power + 1)) / (power + 1)
        span = xa[rough] - xb[rough]
        left[rough] = (m1 - xb[rough] * m0) / span
        right[rough] = (xa[rough] * m0 - m1) / span
    return left, right


def assemble_hat_weights(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Collect per-cell hat moments into nodal quadrature weights."""
    weights = np.zeros(left.size + 1)
    weights[:-1] += left
    weights[1:] += right
    return weights


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Plain trapezoid weights on arbitrary increasing nodes."""
    widths = np.diff(nodes)
    return assemble_hat_weights(0.5 * widths, 0.5 * widths)


# =============================================================================
# Grids, regions and grid functions
# =============================================================================


class Chart(str, Enum):
    """Coordinate chart a grid function is sampled in."""
    CARTESIAN = "cartesian"
    CONFORMAL = "conformal"


class TensorGrid(Protocol):
    """Anything with two node axes and fractional parameters."""
    params: FractionalParams

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]: ...

    @property
    def axis_names(self) -> tuple[str, str]: ...


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [y1_min, y1_max] x [0, y2_max]; edges snap to grid lines."""
    y1_min: float
    y1_max: float
    y2_max: float


@dataclass(frozen=True)
class BallRegion:
    """
    B_outer(center) minus B_inner(center), intersected with the half-plane.

    Centres on the boundary (center[1] == 0) give half-balls and half-annuli.
    Centres inside the half-plane need the whole ball inside it.
    """
    inner: float
    outer: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.inner < self.outer:
            raise ParameterError(f"need 0 <= inner < outer, got ({self.inner}, {self.outer})")
        if self.center[1] < 0:
            raise ParameterError("ball centres must lie in the closed upper half-plane")
        if 0.0 < self.center[1] <= self.outer:
            raise GridDomainError(
                f"ball of radius {self.outer} around {self.center} crosses y2 = 0 off-centre"
            )

    @property
    def on_boundary(self) -> bool:
        return self.center[1] == 0.0

    def extent(self) -> tuple[float, float, float, float]:
        """(y1_min, y1_max, y2_min, y2_max) of the bounding box."""
        c1, c2 = self.center
        return (c1 - self.outer, c1 + self.outer, max(0.0, c2 - self.outer), c2 + self.outer)


def half_ball(radius: float, center: float = 0.0) -> BallRegion:
    """B_radius^+ centred at (center, 0)."""
    return BallRegion(0.0, radius, (center, 0.0))


def half_annulus(inner: float, outer: float, center: float = 0.0) -> BallRegion:
    """{inner < |y - (center, 0)| < outer} in the upper half-plane."""
    return BallRegion(inner, outer, (center, 0.0))


@dataclass(frozen=True)
class Segment:
    """Boundary segment [a, b] on y2 = 0."""
    a: float
    b: float

    def __post_init__(self) -> None:
        if not self.a < self.b:
            raise ParameterError(f"segment needs a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True, eq=False)
class HalfPlaneGrid:
    """Cartesian tensor grid: uniform y1, y2 graded toward the boundary."""
    y1: np.ndarray
    y2: np.ndarray
    params: FractionalParams

    def __post_init__(self) -> None:
        for name, axis in (("y1", self.y1), ("y2", self.y2)):
            if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
                raise ParameterError(f"{name} nodes must be strictly increasing")
        if self.y2[0] < 0:
            raise ParameterError("y2 nodes must be nonnegative")

    @classmethod
    def box(cls, half_width: float, height: float, size: int, params: FractionalParams,
            normal_size: int | None = None) -> "HalfPlaneGrid":
        """
        Grid on [-half_width, half_width] x [0, height].

        Args:
            half_width: Tangential half extent.
            height: Normal extent.
            size: Number of tangential nodes (odd sizes put a node on y1 = 0).
            params: Fractional parameters; fix the grading.
            normal_size: Number of normal nodes (defaults to size).
        """
        normal_size = normal_size or size
        y1 = np.linspace(-half_width, half_width, size)
        y2 = graded_nodes(height, normal_size - 1, grading_exponent(params.s))
        return cls(y1=y1, y2=y2, params=params)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.y1, self.y2)

    @property
    def axis_names(self) -> tuple[str, str]:
        return ("y1", "y2")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.y1.size, self.y2.size)

    @property
    def h1(self) -> float:
        return float(self.y1[1] - self.y1[0])

    @property
    def has_boundary_layer(self) -> bool:
        return self.y2[0] == 0.0

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.y1, self.y2, indexing="ij")

    def interior(self) -> "HalfPlaneGrid":
        """Nodes with a full five-point neighbourhood."""
        return replace(self, y1=self.y1[1:-1], y2=self.y2[1:-1])

    def refined(self) -> "HalfPlaneGrid":
        """Same box with twice as many cells per axis."""
        return HalfPlaneGrid.box(
            half_width=float(self.y1[-1]),
            height=float(self.y2[-1]),
            size=2 * self.y1.size - 1,
            params=self.params,
            normal_size=2 * self.y2.size - 1,
        )

    def contains(self, y1_min: float, y1_max: float, y2_max: float) -> bool:
        eps = 1e-12 * max(1.0, float(np.abs(self.y1).max()))
        return (y1_min >= self.y1[0] - eps and y1_max <= self.y1[-1] + eps
                and y2_max <= self.y2[-1] + eps)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Samples of a scalar field on a tensor grid.

    An optional evaluator, written in the same chart as the grid, is used for
    off-grid evaluation; without one, values are interpolated bilinearly.
    """
    grid: Any
    values: np.ndarray
    chart: Chart = Chart.CARTESIAN
    evaluator: Evaluator | None = None
    label: str = ""
    low_confidence: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        expected = tuple(axis.size for axis in self.grid.axes)
        if self.values.shape != expected:
            raise ParameterError(f"values of shape {self.values.shape} do not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError(f"grid function '{self.label}' holds non-finite values")

    @classmethod
    def from_function(cls, grid: Any, fn: Evaluator, chart: Chart = Chart.CARTESIAN,
                      label: str = "") -> "GridFunction":
        """Sample fn on the grid and keep it as the evaluator."""
        a, b = np.meshgrid(*grid.axes, indexing="ij")
        values = np.asarray(fn(a, b), dtype=float) * np.ones_like(a)
        return cls(grid=grid, values=values, chart=chart, evaluator=fn, label=label)

    def evaluate(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Evaluate at points given in this function's chart."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(a, b), dtype=float) * np.ones(np.broadcast(a, b).shape)
        first, second = self.grid.axes
        tol = 1e-10
        if (a.min() < first[0] - tol or a.max() > first[-1] + tol
                or b.min() < second[0] - tol or b.max() > second[-1] + tol):
            raise GridDomainError(f"evaluation points leave the grid of '{self.label}'")
        interpolator = RegularGridInterpolator(self.grid.axes, self.values, method="linear")
        points = np.stack([np.clip(a, first[0], first[-1]), np.clip(b, second[0], second[-1])], axis=-1)
        return interpolator(points)

    def map(self, fn: Callable[[np.ndarray], np.ndarray], label: str | None = None) -> "GridFunction":
        """Apply fn pointwise, composing with the evaluator when there is one."""
        evaluator = None
        if self.evaluator is not None:
            inner = self.evaluator
            evaluator = lambda a, b: fn(inner(a, b))  # noqa: E731
        return GridFunction(
            grid=self.grid,
            values=fn(self.values),
            chart=self.chart,
            evaluator=evaluator,
            label=label if label is not None else self.label,
        )

    def scaled(self, factor: float) -> "GridFunction":
        return self.map(lambda v: factor * v)

    def without_evaluator(self) -> "GridFunction":
        """Forget the analytic evaluator; later evaluation interpolates the samples."""
        return replace(self, evaluator=None)

    def to_frame(self) -> pd.DataFrame:
        """Long-format table with one row per node, ready for CSV."""
        a, b = np.meshgrid(*self.grid.axes, indexing="ij")
        first, second = self.grid.axis_names
        return pd.DataFrame({first: a.ravel(), second: b.ravel(), "value": self.values.ravel()})


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Samples of a function on y2 = 0, optionally with an evaluator in y1."""
    y1: np.ndarray
    values: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None
    converged: np.ndarray | None = field(default=None, repr=False)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(x), dtype=float) * np.ones_like(x)
        if x.min() < self.y1[0] - 1e-12 or x.max() > self.y1[-1] + 1e-12:
            raise GridDomainError("segment leaves the sampled boundary")
        return np.interp(x, self.y1, self.values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "BoundaryTrace":
        evaluator = None
        if self.evaluator is not None:
            inner = self.evaluator
            evaluator = lambda x: fn(inner(x))  # noqa: E731
        return BoundaryTrace(y1=self.y1, values=fn(self.values), evaluator=evaluator,
                             converged=self.converged)


def trace_of(f: GridFunction) -> BoundaryTrace:
    """Restriction of a Cartesian grid function to its y2 = 0 layer."""
    if f.chart is not Chart.CARTESIAN or not f.grid.has_boundary_layer:
        raise GridDomainError("trace needs a Cartesian grid with a y2 = 0 layer")
    evaluator = None
    if f.evaluator is not None:
        inner = f.evaluator
        evaluator = lambda x: inner(x, np.zeros_like(x))  # noqa: E731
    return BoundaryTrace(y1=f.grid.y1, values=f.values[:, 0].copy(), evaluator=evaluator)


# =============================================================================
# Quadrature
# =============================================================================


def _check_power(power: float) -> None:
    if power <= -1:
        raise ParameterError(f"weight exponent {power} is not integrable (need > -1)")


def _resolve_power(f: GridFunction, power: float | None) -> float:
    power = f.grid.params.weight_exponent if power is None else power
    _check_power(power)
    return power


def box_weights(grid: HalfPlaneGrid, power: float) -> np.ndarray:
    """
    Nodal weights of the weighted trapezoid for int y2^power g dy over the grid.

    If the lowest row sits above y2 = 0 the strip below it is added with the
    integrand held at its first-row value.
    """
    _check_power(power)
    normal = assemble_hat_weights(*power_hat_moments(grid.y2, power))
    if grid.y2[0] > 0:
        normal[0] += grid.y2[0] ** (power + 1) / (power + 1)
    return np.outer(trapezoid_weights(grid.y1), normal)


def _snap(nodes: np.ndarray, lo: float, hi: float) -> slice:
    i = int(np.argmin(np.abs(nodes - lo)))
    j = int(np.argmin(np.abs(nodes - hi)))
    return slice(i, j + 1)


def polar_rule(region: BallRegion, power: float, radial_cells: int = DEFAULT_RADIAL_CELLS,
               angular_cells: int = DEFAULT_ANGULAR_CELLS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Quadrature points and weights for int_region y2^power g dy.

    Args:
        region: Ball or annulus.
        power: Exponent of y2.
        radial_cells: Cells in the radial direction.
        angular_cells: Cells in the angular direction.

    Returns:
        (y1, y2, weights), flattened.
    """
    _check_power(power)
    c1, c2 = region.center
    if region.on_boundary:
        rho = np.linspace(region.inner, region.outer, radial_cells + 1)
        radial = assemble_hat_weights(*power_hat_moments(rho, power + 1.0))
        theta = symmetric_graded_nodes(0.0, math.pi, angular_cells, power_grading(power))
        angular = assemble_hat_weights(*sine_hat_moments(theta, power))
        rr, tt = np.meshgrid(rho, theta, indexing="ij")
        y1 = c1 + rr * np.cos(tt)
        y2 = rr * np.sin(tt)
        weights = np.outer(radial, angular)
        # the poles sit exactly on the boundary
        y2[:, 0] = 0.0
        y2[:, -1] = 0.0
    else:
        rho = np.linspace(region.inner, region.outer, radial_cells + 1)
        radial = assemble_hat_weights(*power_hat_moments(rho, 1.0))
        theta = np.linspace(0.0, 2.0 * math.pi, angular_cells, endpoint=False)
        rr, tt = np.meshgrid(rho, theta, indexing="ij")
        y1 = c1 + rr * np.cos(tt)
        y2 = c2 + rr * np.sin(tt)
        weights = np.outer(radial, np.full(angular_cells, 2.0 * math.pi / angular_cells)) * y2**power
    return y1.ravel(), y2.ravel(), weights.ravel()


def integrate(f: GridFunction, region: Box | BallRegion | None = None, power: float | None = None,
              transform: Callable[[np.ndarray], np.ndarray] | None = None,
              multiplier: Evaluator | None = None) -> float:
    """
    Weighted integral of transform(f) * multiplier against y2^power over a region.

    This is the workhorse behind `weighted_integral` and `weighted_norm`.
    """
    if f.chart is not Chart.CARTESIAN:
        raise GridDomainError("bulk integrals take Cartesian grid functions; map charts back first")
    power = _resolve_power(f, power)
    transform = transform or (lambda v: v)
    grid: HalfPlaneGrid = f.grid

    if region is None or isinstance(region, Box):
        if region is None:
            sub = f
        else:
            if not grid.contains(region.y1_min, region.y1_max, region.y2_max):
                raise GridDomainError(f"{region} exceeds the grid")
            i = _snap(grid.y1, region.y1_min, region.y1_max)
            j = slice(0, _snap(grid.y2, grid.y2[0], region.y2_max).stop)
            sub_grid = replace(grid, y1=grid.y1[i], y2=grid.y2[j])
            sub = GridFunction(grid=sub_grid, values=f.values[i, j], chart=f.chart)
        integrand = transform(sub.values)
        if multiplier is not None:
            integrand = integrand * multiplier(*sub.grid.mesh())
        return float(np.sum(box_weights(sub.grid, power) * integrand))

    y1_min, y1_max, _, y2_max = region.extent()
    if not grid.contains(y1_min, y1_max, y2_max):
        raise GridDomainError(f"region {region} exceeds the grid")
    y1, y2, weights = polar_rule(region, power)
    integrand = transform(f.evaluate(y1, y2))
    if multiplier is not None:
        integrand = integrand * multiplier(y1, y2)
    return float(np.sum(weights * integrand))


def weighted_integral(f: GridFunction, region: Box | BallRegion | None = None,
                      power: float | None = None, multiplier: Evaluator | None = None) -> float:
    """
    Integral of f * y2^power over a region of the half-plane.

    Args:
        f: Cartesian grid function.
        region: Box (snapped to grid lines), ball/annulus, or None for the whole grid.
        power: Exponent of y2, > -1; defaults to 1 - 2s of the grid.
        multiplier: Optional extra pointwise factor m(y1, y2).

    Returns:
        The quadrature value.

    Raises:
        ParameterError: If power <= -1.
        GridDomainError: If the region does not fit in the grid.
    """
    return integrate(f, region, power, multiplier=multiplier)


def weighted_norm(f: GridFunction, region: Box | BallRegion | None = None,
                  power: float | None = None, multiplier: Evaluator | None = None) -> float:
    """sqrt of the weighted integral of f^2 (times multiplier, which should be >= 0)."""
    value = integrate(f, region, power, transform=np.square, multiplier=multiplier)
    return math.sqrt(max(value, 0.0))


def boundary_rule(trace: BoundaryTrace, segment: Segment, power: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the weighted trapezoid for int_segment |y1|^power g dy1."""
    _check_power(power)
    inside = trace.y1[(trace.y1 > segment.a) & (trace.y1 < segment.b)]
    extra = [segment.a, segment.b]
    if segment.a < 0.0 < segment.b:
        extra.append(0.0)
    nodes = np.unique(np.concatenate([inside, np.asarray(extra)]))
    if power == 0.0:
        return nodes, trapezoid_weights(nodes)

    weights = np.zeros(nodes.size)
    cells_left, cells_right = nodes[:-1], nodes[1:]
    positive = cells_left >= 0.0
    if np.any(positive):
        idx = np.nonzero(positive)[0]
        lo, hi = power_hat_moments(np.append(cells_left[idx], cells_right[idx][-1]), power)
        # cells are contiguous on the positive side
        np.add.at(weights, idx, lo)
        np.add.at(weights, idx + 1, hi)
    if np.any(~positive):
        idx = np.nonzero(~positive)[0]
        mirrored = -np.append(cells_right[idx][::-1], cells_left[idx][0])
        lo, hi = power_hat_moments(mirrored, power)
        # mirrored cell k corresponds to original cell idx[::-1][k]
        original = idx[::-1]
        np.add.at(weights, original + 1, lo)
        np.add.at(weights, original, hi)
    return nodes, weights


def boundary_integral(trace: BoundaryTrace, segment: Segment, power: float = 0.0,
                      transform: Callable[[np.ndarray], np.ndarray] | None = None,
                      multiplier: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """
    Integral of a boundary function over a segment of y2 = 0.

    A singular multiplier (for example |y1|^(-2s)) is allowed when the
    integrand vanishes where the multiplier blows up; such nodes count as zero.

    Args:
        trace: Boundary samples.
        segment: Integration segment.
        power: Exponent of |y1| integrated exactly, > -1.
        transform: Optional pointwise map of the trace values (e.g. np.square).
        multiplier: Optional extra factor m(y1).

    Returns:
        The quadrature value.
    """
    if segment.a < trace.y1[0] - 1e-12 or segment.b > trace.y1[-1] + 1e-12:
        raise GridDomainError(f"segment [{segment.a}, {segment.b}] leaves the sampled boundary")
    nodes, weights = boundary_rule(trace, segment, power)
    values = trace.evaluate(nodes)
    if transform is not None:
        values = transform(values)
    if multiplier is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = multiplier(nodes)
        values = np.where(values == 0.0, 0.0, values * factor)
    if not np.all(np.isfinite(values)):
        raise ParameterError("boundary integrand is not integrable on the segment")
    return float(np.sum(weights * values))


# =============================================================================
# Vanishing order
# =============================================================================


@dataclass(frozen=True)
class OrderFit:
    """Least-squares order of vanishing."""
    order: float
    residual: float
    radii: tuple[float, ...]
    integrals: tuple[float, ...]
    mode: str

    @property
    def local_orders(self) -> np.ndarray:
        """Slopes between consecutive radii."""
        logs = np.log(self.integrals)
        return np.diff(logs) / np.diff(np.log(self.radii))


def vanishing_order(f: GridFunction, radii: list[float], mode: str = "bulk") -> OrderFit:
    """
    Fit the order m in int_{B_r} y2^(1-2s) f^2 ~ r^m (bulk) or int_{-r}^{r} f^2 ~ r^m (boundary).

    Args:
        f: Cartesian grid function defined on the largest ball.
        radii: Strictly decreasing radii, at least four, spanning a decade.
        mode: "bulk" or "boundary".

    Returns:
        The fitted order with its residual; never a categorical verdict.

    Raises:
        ParameterError: On malformed radii or mode.
        NoiseFloorError: If the integrals are not strictly decreasing.
    """
    radii_arr = np.asarray(radii, dtype=float)
    if radii_arr.size < 4 or np.any(np.diff(radii_arr) >= 0) or radii_arr[-1] <= 0:
        raise ParameterError("need at least four strictly decreasing positive radii")
    if radii_arr[0] / radii_arr[-1] < 10.0 - 1e-9:
        raise ParameterError("radii must span at least one decade")
    if mode not in ("bulk", "boundary"):
        raise ParameterError(f"unknown mode '{mode}'")

    if mode == "bulk":
        integrals = np.array([integrate(f, half_ball(r), transform=np.square) for r in radii_arr])
    else:
        trace = trace_of(f)
        integrals = np.array([boundary_integral(trace, Segment(-r, r), transform=np.square) for r in radii_arr])

    if np.any(integrals <= 0) or np.any(np.diff(integrals) >= 0):
        logger.warning(f"{mode} integrals of '{f.label}' are not strictly decreasing: {integrals}")
        raise NoiseFloorError(f"integrals stop decreasing (noise floor reached): {integrals.tolist()}")

    x, y = np.log(radii_arr), np.log(integrals)
    (slope, intercept), residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(residuals[0] / x.size)) if residuals.size else 0.0
    logger.debug(f"vanishing_order('{f.label}', {mode}) = {slope:.6f} (residual {residual:.2e})")
    return OrderFit(
        order=float(slope),
        residual=residual,
        radii=tuple(radii_arr.tolist()),
        integrals=tuple(integrals.tolist()),
        mode=mode,
    )
