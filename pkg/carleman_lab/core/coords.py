"""
Conformal coordinates and discrete operators.

Polar coordinates with r = e^t turn the degenerate operator div(y2^(1-2s) grad)
into sin^(1-2s)(theta) (d_t^2 - (n-2s)^2/4) + d_theta(sin^(1-2s)(theta) d_theta)
after the substitution u = e^((n-2s)t/2) w. This module holds the chart, the
w -> u -> v substitutions and conservative finite-difference versions of both
operators, together with the weighted Neumann trace and Dirichlet energy.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from carleman_lab.core.errors import ExtrapolationError, GridDomainError, ParameterError
from carleman_lab.core.grid import (
    BoundaryTrace,
    Chart,
    Evaluator,
    FractionalParams,
    GridFunction,
    HalfPlaneGrid,
    assemble_hat_weights,
    box_weights,
    grading_exponent,
    power_hat_moments,
    sine_hat_moments,
    symmetric_graded_nodes,
    trapezoid_weights,
)

logger = logging.getLogger(__name__)

BULK_FRACTION = 0.2
NEUMANN_TOLERANCE = 1e-2


@dataclass(frozen=True, eq=False)
class ConformalChart:
    """Tensor grid in (t, theta): t = ln r uniform, theta graded toward 0 and pi."""
    t: np.ndarray
    theta: np.ndarray
    params: FractionalParams

    def __post_init__(self) -> None:
        if np.any(np.diff(self.t) <= 0) or np.any(np.diff(self.theta) <= 0):
            raise ParameterError("chart nodes must be strictly increasing")
        if self.theta[0] < 0 or self.theta[-1] > math.pi:
            raise ParameterError("angular nodes must lie in [0, pi]")

    @classmethod
    def build(cls, t_min: float, t_max: float, t_size: int, theta_cells: int,
              params: FractionalParams) -> "ConformalChart":
        """
        Chart over ln-radii [t_min, t_max] and the closed half-circle.

        Args:
            t_min: Smallest ln r.
            t_max: Largest ln r.
            t_size: Number of t nodes.
            theta_cells: Number of angular cells (rounded up to even).
            params: Fractional parameters; fix the angular grading.
        """
        theta = symmetric_graded_nodes(0.0, math.pi, theta_cells, grading_exponent(params.s))
        return cls(t=np.linspace(t_min, t_max, t_size), theta=theta, params=params)

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.t, self.theta)

    @property
    def axis_names(self) -> tuple[str, str]:
        return ("t", "theta")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.t.size, self.theta.size)

    @property
    def ht(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def endpoint_layers(self) -> np.ndarray:
        """Boolean mask over theta of the explicit layers at 0 and pi."""
        return (self.theta == 0.0) | (self.theta == math.pi)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.theta, indexing="ij")

    def interior(self) -> "ConformalChart":
        return replace(self, t=self.t[1:-1], theta=self.theta[1:-1])


# =============================================================================
# Chart changes and substitutions
# =============================================================================


def to_conformal(w: GridFunction, chart: ConformalChart) -> GridFunction:
    """
    u(t, theta) = e^((n-2s)t/2) w(e^t cos theta, e^t sin theta).

    Args:
        w: Cartesian grid function whose grid covers the chart's half-annulus.
        chart: Target chart.

    Returns:
        The conformal grid function (bilinear resampling unless w carries an evaluator).

    Raises:
        GridDomainError: If the chart image leaves w's grid.
    """
    if w.chart is not Chart.CARTESIAN:
        raise ParameterError("to_conformal expects a Cartesian grid function")
    radius = math.exp(chart.t[-1])
    if not w.grid.contains(-radius, radius, radius):
        raise GridDomainError(f"chart image of radius {radius:.4g} exceeds the Cartesian grid")

    shift = chart.params.conformal_shift
    source = w

    def evaluator(t: np.ndarray, theta: np.ndarray) -> np.ndarray:
        r = np.exp(t)
        return np.exp(shift * t) * source.evaluate(r * np.cos(theta), r * np.sin(theta))

    tt, th = chart.mesh()
    u = GridFunction(grid=chart, values=evaluator(tt, th), chart=Chart.CONFORMAL, label=f"u[{w.label}]")
    if w.evaluator is not None:
        u = replace(u, evaluator=evaluator)
    return u


def from_conformal(u: GridFunction, grid: HalfPlaneGrid, fill_value: float | None = None) -> GridFunction:
    """
    Map a conformal function back: w(y) = |y|^(-(n-2s)/2) u(ln|y|, arg y).

    Args:
        u: Conformal grid function.
        grid: Cartesian target grid.
        fill_value: Value for nodes outside the chart's annulus; None rejects them.

    Returns:
        The Cartesian grid function.
    """
    if u.chart is not Chart.CONFORMAL:
        raise ParameterError("from_conformal expects a conformal grid function")
    chart: ConformalChart = u.grid
    shift = chart.params.conformal_shift
    y1, y2 = grid.mesh()
    r = np.hypot(y1, y2)
    inside = (r >= math.exp(chart.t[0]) * (1 - 1e-12)) & (r <= math.exp(chart.t[-1]) * (1 + 1e-12))
    if not np.all(inside) and fill_value is None:
        raise GridDomainError("Cartesian nodes fall outside the chart's annulus; pass fill_value")

    values = np.full(grid.shape, float(fill_value or 0.0))
    t = np.clip(np.log(r[inside]), chart.t[0], chart.t[-1])
    theta = np.clip(np.arctan2(y2[inside], y1[inside]), chart.theta[0], chart.theta[-1])
    values[inside] = np.exp(-shift * t) * u.evaluate(t, theta)
    return GridFunction(grid=grid, values=values, chart=Chart.CARTESIAN, label=f"w[{u.label}]")


def _angular_power(u: GridFunction, exponent: float, label: str) -> GridFunction:
    chart: ConformalChart = u.grid
    sin = np.sin(chart.theta)
    layers = chart.endpoint_layers
    values = u.values.copy()
    flags = np.zeros(u.values.shape, dtype=bool)

    with np.errstate(divide="ignore"):
        factor = np.where(layers, 0.0 if exponent > 0 else 1.0, sin**exponent)
    values = values * factor[None, :]
    if exponent < 0 and np.any(layers):
        # degenerate factor: extrapolate linearly from the two nearest interior nodes
        for j in np.nonzero(layers)[0]:
            near, far = (j + 1, j + 2) if j == 0 else (j - 1, j - 2)
            th = chart.theta
            slope = (values[:, far] - values[:, near]) / (th[far] - th[near])
            values[:, j] = values[:, near] + slope * (th[j] - th[near])
            flags[:, j] = True
        logger.warning(f"{label}: endpoint layers extrapolated from the interior (low confidence)")

    evaluator = None
    if u.evaluator is not None:
        inner = u.evaluator
        evaluator = lambda t, th: np.sin(th) ** exponent * inner(t, th)  # noqa: E731
    return GridFunction(grid=chart, values=values, chart=Chart.CONFORMAL, evaluator=evaluator,
                        label=label, low_confidence=flags if flags.any() else None)


def u_to_v(u: GridFunction) -> GridFunction:
    """v = sin(theta)^((1-2s)/2) u."""
    return _angular_power(u, 0.5 * u.grid.params.weight_exponent, f"v[{u.label}]")


def v_to_u(v: GridFunction) -> GridFunction:
    """u = sin(theta)^((2s-1)/2) v; endpoint layers are extrapolated when the factor blows up."""
    return _angular_power(v, -0.5 * v.grid.params.weight_exponent, f"u[{v.label}]")


# =============================================================================
# Discrete operators
# =============================================================================


def _harmonic_face_weights(nodes: np.ndarray, inverse_moments: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    # width / int_cell weight^-1: exact flux for the 1D weighted-harmonic functions
    widths = np.diff(nodes)
    return widths / (inverse_moments[0] + inverse_moments[1])


def normal_face_weights(y2: np.ndarray, params: FractionalParams) -> np.ndarray:
    """Harmonic cell averages of y2^(1-2s) on each normal cell."""
    return _harmonic_face_weights(y2, power_hat_moments(y2, -params.weight_exponent))


def angular_face_weights(theta: np.ndarray, params: FractionalParams) -> np.ndarray:
    """Harmonic cell averages of sin^(1-2s) on each angular cell."""
    return _harmonic_face_weights(theta, sine_hat_moments(theta, -params.weight_exponent))


def _divergence(values: np.ndarray, nodes: np.ndarray, face_weights: np.ndarray) -> np.ndarray:
    widths = np.diff(nodes)
    flux = face_weights[None, :] * np.diff(values, axis=1) / widths[None, :]
    dual = 0.5 * (nodes[2:] - nodes[:-2])
    return (flux[:, 1:] - flux[:, :-1]) / dual[None, :]


def apply_cartesian_operator(w: GridFunction) -> GridFunction:
    """
    div(y2^(1-2s) grad w) on the interior nodes, in conservative form.

    Face weights are harmonic averages of y2^(1-2s), which makes the normal
    flux exact for y2^(2s).

    Args:
        w: Cartesian grid function.

    Returns:
        The operator on grid.interior().
    """
    if w.chart is not Chart.CARTESIAN:
        raise ParameterError("apply_cartesian_operator expects a Cartesian grid function")
    grid: HalfPlaneGrid = w.grid
    a = grid.params.weight_exponent
    v = w.values
    tangential = (v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / grid.h1**2
    tangential *= grid.y2[1:-1][None, :] ** a
    normal = _divergence(v[1:-1, :], grid.y2, normal_face_weights(grid.y2, grid.params))
    return GridFunction(grid=grid.interior(), values=tangential + normal, chart=Chart.CARTESIAN,
                        label=f"L[{w.label}]")


def apply_conformal_operator(u: GridFunction) -> GridFunction:
    """
    sin^(1-2s)(d_t^2 - (n-2s)^2/4) u + d_theta(sin^(1-2s) d_theta u) on interior chart nodes.

    Args:
        u: Conformal grid function.

    Returns:
        The operator on chart.interior().
    """
    if u.chart is not Chart.CONFORMAL:
        raise ParameterError("apply_conformal_operator expects a conformal grid function")
    chart: ConformalChart = u.grid
    a = chart.params.weight_exponent
    shift = chart.params.conformal_shift
    v = u.values
    radial = (v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / chart.ht**2 - shift**2 * v[1:-1, 1:-1]
    radial *= np.sin(chart.theta[1:-1])[None, :] ** a
    angular = _divergence(v[1:-1, :], chart.theta, angular_face_weights(chart.theta, chart.params))
    return GridFunction(grid=chart.interior(), values=radial + angular, chart=Chart.CONFORMAL,
                        label=f"Lc[{u.label}]")


def bulk_residual(f: GridFunction, fraction: float = BULK_FRACTION) -> float:
    """
    Max |f| away from the degenerate boundary.

    Cartesian: nodes with y2 >= fraction * height. Conformal: sin(theta) >= fraction.
    """
    first, second = f.grid.axes
    if f.chart is Chart.CARTESIAN:
        mask = second >= fraction * second[-1]
    else:
        mask = np.sin(second) >= fraction
    return float(np.max(np.abs(f.values[:, mask]))) if mask.any() else 0.0


# =============================================================================
# Weighted Neumann data and energy
# =============================================================================


def _flux_heights(y2: np.ndarray, s: float) -> np.ndarray:
    # height at which the discrete flux of y2^2 equals its exact flux 2 y^(2-2s)
    a, b = y2[:-1], y2[1:]
    return (s * (b * b - a * a) / (b ** (2 * s) - a ** (2 * s))) ** (1.0 / (2.0 - 2.0 * s))


def _richardson(f1: np.ndarray, f2: np.ndarray, e1: float, e2: float, q: float) -> np.ndarray:
    p1, p2 = e1**q, e2**q
    return (p2 * f1 - p1 * f2) / (p2 - p1)


def neumann_trace(w: GridFunction, strict: bool = False, tolerance: float = NEUMANN_TOLERANCE) -> BoundaryTrace:
    """
    lim_{y2 -> 0} y2^(1-2s) d_2 w by two-level Richardson extrapolation.

    The two innermost face fluxes are extrapolated in y2^(2-2s), the leading
    correction of a smooth even-plus-y2^(2s) expansion. A second estimate from
    the next pair of faces serves as the convergence check.

    Args:
        w: Cartesian grid function with a y2 = 0 layer and at least four rows.
        strict: Raise instead of flagging non-convergent columns.
        tolerance: Allowed disagreement between the two estimates, relative to
            the largest face flux magnitude (floored at 1).

    Returns:
        The trace with a per-column convergence mask.

    Raises:
        ExtrapolationError: In strict mode, if any column fails the check.
    """
    if w.chart is not Chart.CARTESIAN or not w.grid.has_boundary_layer:
        raise GridDomainError("neumann_trace needs a Cartesian grid with a y2 = 0 layer")
    grid: HalfPlaneGrid = w.grid
    if grid.y2.size < 4:
        raise GridDomainError("neumann_trace needs at least four normal rows")

    s = grid.params.s
    q = 2.0 - 2.0 * s
    faces = normal_face_weights(grid.y2[:4], grid.params)
    flux = faces[None, :] * np.diff(w.values[:, :4], axis=1) / np.diff(grid.y2[:4])[None, :]
    eta = _flux_heights(grid.y2[:4], s)

    first = _richardson(flux[:, 0], flux[:, 1], eta[0], eta[1], q)
    second = _richardson(flux[:, 1], flux[:, 2], eta[1], eta[2], q)
    scale = max(1.0, float(np.max(np.abs(flux))))
    converged = np.abs(first - second) <= tolerance * scale

    if not converged.all():
        bad = int((~converged).sum())
        message = f"Neumann extrapolation of '{w.label}' did not converge in {bad} columns"
        if strict:
            raise ExtrapolationError(message)
        logger.warning(message)
    return BoundaryTrace(y1=grid.y1, values=first, converged=converged)


def dirichlet_energy(w: GridFunction, multiplier: Evaluator | None = None) -> float:
    """
    int m(y) y2^(1-2s) |grad w|^2 dy over the grid.

    The normal part uses the conservative cell energy with harmonic face
    weights (exact for y2^(2s)); the tangential part uses centred differences
    and the weighted trapezoid.

    Args:
        w: Cartesian grid function, assumed to vanish near the lateral and top edges.
        multiplier: Optional nonnegative factor m(y1, y2).

    Returns:
        The energy.
    """
    if w.chart is not Chart.CARTESIAN:
        raise ParameterError("dirichlet_energy expects a Cartesian grid function")
    grid: HalfPlaneGrid = w.grid
    y2 = grid.y2
    widths = np.diff(y2)
    faces = normal_face_weights(y2, grid.params)
    cell_energy = faces[None, :] * np.diff(w.values, axis=1) ** 2 / widths[None, :]
    d1 = np.gradient(w.values, grid.y1, axis=0, edge_order=2)
    tangential = d1**2

    if multiplier is not None:
        mid = 0.5 * (y2[1:] + y2[:-1])
        m1, m2 = np.meshgrid(grid.y1, mid, indexing="ij")
        cell_energy = cell_energy * multiplier(m1, m2)
        tangential = tangential * multiplier(*grid.mesh())

    normal_part = float(np.sum(trapezoid_weights(grid.y1)[:, None] * cell_energy))
    tangential_part = float(np.sum(box_weights(grid, grid.params.weight_exponent) * tangential))
    return normal_part + tangential_part


def chart_integral(u: GridFunction, power: float | None = None,
                   transform=None, multiplier: Evaluator | None = None) -> float:
    """int int transform(u) m(t, theta) sin^power(theta) dtheta dt over the chart."""
    if u.chart is not Chart.CONFORMAL:
        raise ParameterError("chart_integral expects a conformal grid function")
    chart: ConformalChart = u.grid
    power = chart.params.weight_exponent if power is None else power
    angular = assemble_hat_weights(*sine_hat_moments(chart.theta, power))
    weights = np.outer(trapezoid_weights(chart.t), angular)
    values = u.values if transform is None else transform(u.values)
    if multiplier is not None:
        values = values * multiplier(*chart.mesh())
    return float(np.sum(weights * values))
