"""
Two-sided evaluators for the unique-continuation inequalities.

Each evaluator computes the named left- and right-hand-side terms of one
inequality instance and returns them in an InequalityReport. Nothing here
asserts a constant: the "<~" of the estimates hides constants, so callers
record the measured ratios and check that they stay bounded.

Bulk norms use the weighted quadrature of `grid`; weighted Dirichlet
energies use the conservative cell energy of `coords`; f and h default to
the discrete operator and Neumann trace of w.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.typing import ArrayLike

from carleman_lab.core.battery import radial_cutoff
from carleman_lab.core.coords import apply_cartesian_operator, dirichlet_energy, neumann_trace
from carleman_lab.core.errors import DegenerateNormError, OutOfRegimeError, ParameterError
from carleman_lab.core.grid import (
    BallRegion,
    BoundaryTrace,
    Box,
    GridFunction,
    HalfPlaneGrid,
    Segment,
    assemble_hat_weights,
    grading_exponent,
    half_annulus,
    half_ball,
    integrate,
    boundary_integral,
    sine_hat_moments,
    symmetric_graded_nodes,
    trace_of,
    trapezoid_weights,
    weighted_norm,
)
from carleman_lab.core.weights import commutator_density, phi, phi_of_radius

logger = logging.getLogger(__name__)

DEFAULT_TAU0 = 1.0
ANTISYMMETRIC_FACTOR = 2.0
# sup |psi'| of `radial_cutoff` times r0
CUTOFF_SLOPE = 3.75
NEUMANN_REGIME_TOL = 1e-3
CARLEMAN_MIN_S = 0.25
LOG_WEIGHT_CAP = 600.0


@dataclass
class InequalityReport:
    """
    Named terms of one inequality instance.

    Terms listed in signed_terms are signed flux contributions; every other
    term is a norm (or squared norm) and is nonnegative.
    """
    inequality: str
    params: dict[str, Any]
    lhs: dict[str, float]
    rhs: dict[str, float]
    signed_terms: tuple[str, ...] = ()
    squared: bool = False
    grid: dict[str, Any] = field(default_factory=dict)
    spec_id: str = ""
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name, value in {**self.lhs, **self.rhs}.items():
            if name in self.signed_terms:
                continue
            if value < 0:
                raise ParameterError(f"{self.inequality}: norm term '{name}' is negative ({value})")
        if self.lhs_total > 0 and self.rhs_total <= 0 and "exact-solution input" not in self.flags:
            self.flags.append("exact-solution input")
            logger.info(f"{self.inequality}: right-hand side vanishes for a nonzero left-hand side")

    @property
    def lhs_total(self) -> float:
        return float(sum(self.lhs.values()))

    @property
    def rhs_total(self) -> float:
        return float(sum(self.rhs.values()))

    @property
    def ratio(self) -> float:
        """LHS/RHS; 0 when both vanish, inf when only the RHS does."""
        lhs, rhs = self.lhs_total, self.rhs_total
        if rhs > 0:
            return lhs / rhs
        return 0.0 if lhs == 0 else math.inf

    def to_dict(self) -> dict[str, Any]:
        ratio = self.ratio
        return {
            "inequality": self.inequality,
            "params": self.params,
            "terms": {**{f"lhs.{k}": v for k, v in self.lhs.items()},
                      **{f"rhs.{k}": v for k, v in self.rhs.items()}},
            "signed_terms": list(self.signed_terms),
            "squared": self.squared,
            "ratio": ratio if math.isfinite(ratio) else None,
            "grid": self.grid,
            "spec_id": self.spec_id,
            "flags": list(self.flags),
        }


def _grid_record(w: GridFunction) -> dict[str, Any]:
    grid: HalfPlaneGrid = w.grid
    return {"n_y1": int(grid.y1.size), "n_y2": int(grid.y2.size),
            "half_width": float(grid.y1[-1]), "height": float(grid.y2[-1])}


def _sqrt(value: float) -> float:
    return math.sqrt(max(value, 0.0))


def _whole_boundary(trace: BoundaryTrace) -> Segment:
    return Segment(float(trace.y1[0]), float(trace.y1[-1]))


def _exp_weight_sq(tau: float, r: np.ndarray) -> np.ndarray:
    # e^(2 tau phi(ln r)), exponent capped; 0 at the origin. Test functions vanish where the cap binds.
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    positive = r > 0
    exponent = 2.0 * tau * np.asarray(phi_of_radius(r[positive]))
    out[positive] = np.exp(np.minimum(exponent, LOG_WEIGHT_CAP))
    return out


def _log_damping(r: np.ndarray) -> np.ndarray:
    # (1 + ln(r)^2)^-1, 0 at the origin
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    positive = r > 0
    out[positive] = 1.0 / (1.0 + np.log(r[positive]) ** 2)
    return out


def _radial_power(r: np.ndarray, power: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    positive = r > 0
    out[positive] = r[positive] ** power
    return out


def operator_data(w: GridFunction, f: GridFunction | None = None,
                  h: BoundaryTrace | None = None) -> tuple[GridFunction, BoundaryTrace]:
    """f = div(y2^(1-2s) grad w) and h = its weighted Neumann trace, unless supplied."""
    return (f if f is not None else apply_cartesian_operator(w),
            h if h is not None else neumann_trace(w))


# =============================================================================
# Carleman estimate
# =============================================================================


def carleman_sides(w: GridFunction, f: GridFunction | None = None, h: BoundaryTrace | None = None,
                   tau: float = 2.0, s: float | None = None, tau0: float = DEFAULT_TAU0,
                   spec_id: str = "") -> InequalityReport:
    """
    Terms of the symmetric Carleman estimate.

    LHS: ||e^{tau phi} L^-1 y2^{(1-2s)/2} grad w||, tau ||e^{tau phi} L^-1 y2^{(1-2s)/2} |y|^-1 w||
    and tau^s ||e^{tau phi} L^-1 |y|^-s w||_{L2(y2=0)}, with L = (1 + ln(|y|)^2)^{1/2}.
    RHS: tau^{-1/2} ||e^{tau phi} |y| y2^{(2s-1)/2} f|| and tau^{(1-2s)/2} ||e^{tau phi} |y|^s h||_{L2(y2=0)}.

    Args:
        w: Compactly supported Cartesian grid function (support away from the origin).
        f: Bulk data; defaults to the discrete operator applied to w.
        h: Neumann data; defaults to the extrapolated trace of w.
        tau: Conjugation strength, >= tau0.
        s: Order in [1/4, 1); defaults to the grid's.
        tau0: Lower bound for tau.
        spec_id: Test-function id carried into the report.

    Returns:
        The report (norms, not squared).
    """
    params = w.grid.params
    s = params.s if s is None else s
    if abs(s - params.s) > 1e-14:
        raise ParameterError(f"w lives on a grid for s={params.s}, not s={s}")
    if not CARLEMAN_MIN_S <= s < 1.0:
        raise ParameterError(f"the Carleman estimate is stated for s in [1/4, 1), got {s}")
    if tau < tau0:
        raise ParameterError(f"tau={tau} is below tau0={tau0}")

    f, h = operator_data(w, f, h)
    a = params.weight_exponent

    def radial(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return np.hypot(y1, y2)

    def damped(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        r = radial(y1, y2)
        return _exp_weight_sq(tau, r) * _log_damping(r)

    trace = trace_of(w)
    segment = _whole_boundary(trace)

    gradient = _sqrt(dirichlet_energy(w, multiplier=damped))
    mass = tau * _sqrt(integrate(w, None, a, np.square,
                                 lambda y1, y2: damped(y1, y2) * _radial_power(radial(y1, y2), -2.0)))
    boundary = tau**s * _sqrt(boundary_integral(
        trace, segment, 0.0, np.square,
        lambda x: _exp_weight_sq(tau, np.abs(x)) * _log_damping(np.abs(x)) * _radial_power(np.abs(x), -2.0 * s),
    ))
    source = tau**-0.5 * _sqrt(integrate(
        f, None, -a, np.square,
        lambda y1, y2: _exp_weight_sq(tau, radial(y1, y2)) * radial(y1, y2) ** 2,
    ))
    neumann = tau ** (0.5 - s) * _sqrt(boundary_integral(
        h, _whole_boundary(h), 0.0, np.square,
        lambda x: _exp_weight_sq(tau, np.abs(x)) * np.abs(x) ** (2.0 * s),
    ))

    return InequalityReport(
        inequality="carleman",
        params={"s": s, "tau": tau},
        lhs={"gradient": gradient, "mass": mass, "boundary": boundary},
        rhs={"source": source, "neumann": neumann},
        grid=_grid_record(w),
        spec_id=spec_id or w.label,
    )


# =============================================================================
# Trace interpolation and Herbst
# =============================================================================


def trace_interpolation_sides(u: Callable[[np.ndarray], np.ndarray] | ArrayLike, tau: float, s: float,
                              theta: ArrayLike | None = None, spec_id: str = "") -> InequalityReport:
    """
    Terms of the trace interpolation inequality on the half-circle.

    LHS: (u(0)^2 + u(pi)^2)^{1/2}, the L2 norm over the two boundary points.
    RHS: tau^{1-s} ||sin^{(1-2s)/2} u|| + tau^{-s} ||sin^{(1-2s)/2} u'|| on (0, pi).

    Args:
        u: Angular function, either callable or samples on theta.
        tau: Conjugation strength, > 1.
        s: Order in (0, 1).
        theta: Angular nodes covering [0, pi]; graded nodes by default.
        spec_id: Test-function id carried into the report.
    """
    if not tau > 1:
        raise ParameterError(f"trace interpolation is stated for tau > 1, got {tau}")
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    theta = symmetric_graded_nodes(0.0, math.pi, 400, grading_exponent(s)) if theta is None \
        else np.asarray(theta, dtype=float)
    values = np.asarray(u(theta) if callable(u) else u, dtype=float) * np.ones_like(theta)
    if theta[0] != 0.0 or theta[-1] != math.pi:
        raise ParameterError("angular nodes must include both poles")

    a = 1.0 - 2.0 * s
    weights = assemble_hat_weights(*sine_hat_moments(theta, a))
    derivative = np.gradient(values, theta, edge_order=2)
    lhs = math.hypot(values[0], values[-1])
    mass = tau ** (1.0 - s) * _sqrt(float(np.sum(weights * values**2)))
    gradient = tau ** (-s) * _sqrt(float(np.sum(weights * derivative**2)))
    return InequalityReport(
        inequality="trace",
        params={"s": s, "tau": tau},
        lhs={"endpoints": lhs},
        rhs={"mass": mass, "gradient": gradient},
        grid={"n_theta": int(theta.size)},
        spec_id=spec_id,
    )


def herbst_sides(w: GridFunction, s: float | None = None, spec_id: str = "") -> InequalityReport:
    """
    Terms of Herbst's inequality ||y1|^-s w(., 0)||_{L2} <~ ||y2^{(1-2s)/2} grad w||.

    Both sides scale the same way under dilations.
    """
    params = w.grid.params
    s = params.s if s is None else s
    trace = trace_of(w)
    boundary = _sqrt(boundary_integral(trace, _whole_boundary(trace), 0.0, np.square,
                                       lambda x: _radial_power(np.abs(x), -2.0 * s)))
    gradient = _sqrt(dirichlet_energy(w))
    return InequalityReport(
        inequality="herbst",
        params={"s": s},
        lhs={"boundary": boundary},
        rhs={"gradient": gradient},
        grid=_grid_record(w),
        spec_id=spec_id or w.label,
    )


# =============================================================================
# Caccioppoli and interpolation
# =============================================================================


def caccioppoli_sides(w: GridFunction, r0: float, r1: float, s: float | None = None,
                      f: GridFunction | None = None, h: BoundaryTrace | None = None,
                      spec_id: str = "") -> InequalityReport:
    """
    Squared terms of the Caccioppoli estimate with the cutoff psi = radial_cutoff(., r0, r1).

    Integration by parts gives
        int y2^a |grad(w psi)|^2 = int y2^a w^2 |grad psi|^2 - int f w psi^2 - int_{y2=0} h w psi^2,
    and |grad psi| <= 3.75/r0 bounds the first term by (3.75/r0)^2 times the
    weighted mass over the half-annulus (r0/2, 2 r1). The two flux terms are
    signed.

    Args:
        w: Cartesian grid function defined on the half-ball of radius 2 r1.
        r0: Inner plateau radius.
        r1: Outer plateau radius, >= r0.
        s: Order; defaults to the grid's.
        f: Bulk data; defaults to the discrete operator applied to w.
        h: Neumann data; defaults to the extrapolated trace of w.
        spec_id: Test-function id carried into the report.
    """
    if not 0.0 < r0 <= r1:
        raise ParameterError(f"need 0 < r0 <= r1, got ({r0}, {r1})")
    params = w.grid.params
    s = params.s if s is None else s
    f, h = operator_data(w, f, h)

    def psi(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return radial_cutoff(np.hypot(y1, y2), r0, r1)

    cut = GridFunction(grid=w.grid, values=w.values * psi(*w.grid.mesh()), label=f"psi*{w.label}")
    gradient = dirichlet_energy(cut)
    mass = (CUTOFF_SLOPE / r0) ** 2 * integrate(w, half_annulus(0.5 * r0, 2.0 * r1), None, np.square)

    trace = trace_of(w)
    boundary = -boundary_integral(
        trace, _whole_boundary(trace), 0.0, None,
        lambda x: radial_cutoff(np.abs(x), r0, r1) ** 2 * h.evaluate(x),
    )
    f_grid: HalfPlaneGrid = f.grid
    w_inner = w.values[1:-1, 1:-1] if f_grid.shape != w.grid.shape else w.values
    source_values = GridFunction(grid=f_grid, values=f.values * w_inner)
    source = -integrate(source_values, None, 0.0, None, lambda y1, y2: psi(y1, y2) ** 2)

    return InequalityReport(
        inequality="caccioppoli",
        params={"s": s, "r0": r0, "r1": r1},
        lhs={"gradient": gradient},
        rhs={"mass": mass, "boundary": boundary, "source": source},
        signed_terms=("boundary", "source"),
        squared=True,
        grid=_grid_record(w),
        spec_id=spec_id or w.label,
    )


def interpolation_sides(w: GridFunction, eps: float, mu: float, s: float | None = None,
                        f: GridFunction | None = None, h: BoundaryTrace | None = None,
                        spec_id: str = "") -> InequalityReport:
    """
    Squared terms of the interpolation inequality on Q = [-eps, eps] x [0, eps].

    eps^-2 int_Q y^a |grad w|^2 <= C(mu) eps^-4 int_Q y^a w^2 + mu^2 int_Q y^-a f^2 - eps^-2 int w h,
    with C(mu) = 1/(4 mu^2), for w vanishing on the top and lateral sides of Q.
    The last term is signed.
    """
    if not eps > 0 or not mu > 0:
        raise ParameterError(f"need eps > 0 and mu > 0, got eps={eps}, mu={mu}")
    params = w.grid.params
    s = params.s if s is None else s
    a = params.weight_exponent
    f, h = operator_data(w, f, h)
    cube = Box(-eps, eps, eps)

    def in_cube(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return ((np.abs(y1) <= eps) & (y2 <= eps)).astype(float)

    gradient = eps**-2 * dirichlet_energy(w, multiplier=in_cube)
    mass = eps**-4 / (4.0 * mu * mu) * integrate(w, cube, a, np.square)
    source = mu * mu * integrate(f, cube, -a, np.square)
    trace = trace_of(w)
    boundary = -eps**-2 * boundary_integral(trace, Segment(-eps, eps), 0.0, None, h.evaluate)

    return InequalityReport(
        inequality="interpolation",
        params={"s": s, "eps": eps, "mu": mu},
        lhs={"gradient": gradient},
        rhs={"mass": mass, "source": source, "boundary": boundary},
        signed_terms=("boundary",),
        squared=True,
        grid=_grid_record(w),
        spec_id=spec_id or w.label,
    )


# =============================================================================
# Antisymmetric lower bound and commutator
# =============================================================================


def antisymmetric_lower_bound_sides(w: GridFunction, delta: float, R: float, tau: float,
                                    s: float | None = None, f: GridFunction | None = None,
                                    spec_id: str = "") -> InequalityReport:
    """
    Squared terms of the lower bound for the antisymmetric part (zero Neumann data only).

    LHS: tau^2 delta^-2 ||e^{tau phi} y2^{(1-2s)/2} w||^2 on the half-annulus (delta, 2 delta).
    RHS: ||e^{tau phi} y2^{(2s-1)/2} |y| f||^2 on (delta, R).

    Raises:
        OutOfRegimeError: If w has nonzero Neumann data or leaves the annulus (delta, R).
    """
    if not 0.0 < delta < R:
        raise ParameterError(f"need 0 < delta < R, got ({delta}, {R})")
    params = w.grid.params
    s = params.s if s is None else s
    a = params.weight_exponent

    y1, y2 = w.grid.mesh()
    r = np.hypot(y1, y2)
    scale = float(np.abs(w.values).max())
    outside = (r < delta * (1 - 1e-9)) | (r > R * (1 + 1e-9))
    if scale > 0 and np.abs(w.values[outside]).max(initial=0.0) > 1e-12 * scale:
        raise OutOfRegimeError(f"'{w.label}' is not supported in the annulus ({delta}, {R})")
    h = neumann_trace(w)
    if np.abs(h.values).max() > NEUMANN_REGIME_TOL * max(scale / delta, 1e-300):
        raise OutOfRegimeError(f"'{w.label}' has nonzero Neumann data; the bound covers h = 0 only")
    f = f if f is not None else apply_cartesian_operator(w)

    lhs = tau**2 / delta**2 * integrate(
        w, half_annulus(delta, ANTISYMMETRIC_FACTOR * delta), a, np.square,
        lambda p, q: _exp_weight_sq(tau, np.hypot(p, q)),
    )

    def annulus_weight(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        rr = np.hypot(p, q)
        return _exp_weight_sq(tau, rr) * rr**2 * ((rr >= delta) & (rr <= R))

    rhs = integrate(f, None, -a, np.square, annulus_weight)
    return InequalityReport(
        inequality="antisymmetric",
        params={"s": s, "tau": tau, "delta": delta, "R": R, "c": ANTISYMMETRIC_FACTOR},
        lhs={"annulus_mass": lhs},
        rhs={"source": rhs},
        squared=True,
        grid=_grid_record(w),
        spec_id=spec_id or w.label,
    )


def commutator_sides(v: ArrayLike, t: ArrayLike, tau: float, spec_id: str = "") -> InequalityReport:
    """
    Positivity of the weighted commutator <[S, A] v, v> along the radial variable.

    LHS: 4 int tau^3 phi'' phi'^2 v^2 + 4 int tau phi'' v'^2. RHS: int tau |phi''''| v^2.
    A ratio above 1 means the commutator is positive.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    dv = np.gradient(v, t, edge_order=2)
    density = commutator_density(t, v, dv, tau)
    weights = trapezoid_weights(t)
    bulk = float(np.sum(weights * density["bulk"]))
    grad = float(np.sum(weights * density["gradient"]))
    fourth = float(np.sum(weights * np.abs(density["fourth"])))
    signed = bulk + grad - float(np.sum(weights * density["fourth"]))
    return InequalityReport(
        inequality="commutator",
        params={"tau": tau, "commutator": signed},
        lhs={"bulk": bulk, "gradient": grad},
        rhs={"fourth": fourth},
        squared=True,
        grid={"n_t": int(t.size)},
        spec_id=spec_id,
    )


# =============================================================================
# Doubling and three balls
# =============================================================================


def _ball(radius: float, center: tuple[float, float]) -> BallRegion:
    return half_ball(radius, center[0]) if center[1] == 0 else BallRegion(0.0, radius, center)


def _center(center: float | tuple[float, float]) -> tuple[float, float]:
    if isinstance(center, tuple):
        return (float(center[0]), float(center[1]))
    return (float(center), 0.0)


def doubling_ratios(w: GridFunction, radii: list[float], s: float | None = None,
                    center: float | tuple[float, float] = 0.0) -> list[tuple[float, float]]:
    """
    ||y2^{(1-2s)/2} w||_{B_2r} / ||y2^{(1-2s)/2} w||_{B_r} for each radius.

    Args:
        w: Cartesian grid function defined on the largest doubled ball.
        radii: Radii r.
        s: Order; defaults to the grid's.
        center: y1 of a boundary centre, or a full (c1, c2) centre in the half-plane.

    Raises:
        DegenerateNormError: If a denominator vanishes.
    """
    c = _center(center)
    out = []
    for r in radii:
        inner = weighted_norm(w, _ball(r, c))
        if inner <= 0.0:
            raise DegenerateNormError(f"norm of '{w.label}' vanishes on the ball of radius {r}")
        out.append((float(r), weighted_norm(w, _ball(2.0 * r, c)) / inner))
    logger.debug(f"doubling_ratios('{w.label}'): {out}")
    return out


@dataclass(frozen=True)
class ThreeBallsResult:
    """Measured exponent of the three-balls inequality with C = 1."""
    alpha: float
    norms: tuple[float, float, float]
    flagged: bool


def three_balls_exponent(w: GridFunction, r: float, y0: float | tuple[float, float] = 0.0,
                         s: float | None = None) -> ThreeBallsResult:
    """
    alpha = log(N(2r)/N(r)) / log(N(2r)/N(r/2)), N the weighted norm on the ball around y0.

    alpha is 1/2 for log-linear norm profiles and lies in [0, 1] for log-convex
    ones; values outside are flagged.

    Raises:
        DegenerateNormError: If N(2r) equals N(r/2) or a norm vanishes.
    """
    c = _center(y0)
    norms = tuple(weighted_norm(w, _ball(radius, c)) for radius in (0.5 * r, r, 2.0 * r))
    small, mid, large = norms
    if min(norms) <= 0.0 or math.isclose(large, small, rel_tol=1e-14):
        raise DegenerateNormError(f"three-balls exponent undefined for norms {norms}")
    alpha = math.log(large / mid) / math.log(large / small)
    flagged = not 0.0 <= alpha <= 1.0
    if flagged:
        logger.warning(f"three-balls exponent {alpha:.4f} of '{w.label}' lies outside [0, 1]")
    return ThreeBallsResult(alpha=alpha, norms=norms, flagged=flagged)


def doubling_tau_choice(w: GridFunction, R: float, s: float | None = None) -> float:
    """
    The tau that absorbs the outer annulus in the doubling argument.

    tau = ln(N(R/8 < |y| < R/4) / N(B_2R)) / (phi(ln(R/2)) - phi(ln(R/4))), with N the
    weighted norm.

    Raises:
        DegenerateNormError: If either norm vanishes.
    """
    inner = weighted_norm(w, half_annulus(R / 8.0, R / 4.0))
    outer = weighted_norm(w, half_ball(2.0 * R))
    if inner <= 0.0 or outer <= 0.0:
        raise DegenerateNormError(f"doubling tau undefined: annulus norm {inner}, outer norm {outer}")
    return math.log(inner / outer) / (phi(math.log(R / 2.0)) - phi(math.log(R / 4.0)))
