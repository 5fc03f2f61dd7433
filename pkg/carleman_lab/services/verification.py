"""
Acceptance suite behind `verify`.

Eleven checks, each returning a CheckResult with a pass flag and the measured
numbers that decided it. Results hold no timings so that two runs with the
same configuration serialize identically; durations are only logged.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import pandas as pd
from scipy import special

from carleman_lab.config.settings import get_settings
from carleman_lab.core.battery import (
    Family,
    TestFunctionSpec,
    annular_bump,
    battery_grid,
    build_test_function,
    standard_battery,
)
from carleman_lab.core.coords import apply_cartesian_operator, bulk_residual, neumann_trace
from carleman_lab.core.errors import CarlemanLabError
from carleman_lab.core.extension import (
    blow_up_rescale,
    dtn_constant,
    dtn_constant_closed_form,
    extension_profile,
    homogeneous_solution,
    normalized_dtn,
    profile_ode_oracle,
)
from carleman_lab.core.grid import FractionalParams, HalfPlaneGrid, half_ball, power_hat_moments, weighted_norm
from carleman_lab.core.inequalities import (
    InequalityReport,
    commutator_sides,
    doubling_ratios,
    interpolation_sides,
)
from carleman_lab.core.spectrum import (
    conjugated_radial_operator,
    explicit_eigenvalue,
    gegenbauer_oracle,
    kernel_bound_constant,
    legendre_coeffs,
    parametrix_kernel,
    spectrum_table,
)
from carleman_lab.core.weights import GRADIENT_SPREAD, phi_double_prime, phi_prime, turning_point
from carleman_lab.services.reports import render_csv, render_json, reports_frame
from carleman_lab.services.sweeps import ratio_summary, run_sweep, tau_doubling_factors

logger = logging.getLogger(__name__)

SPECTRUM_ORDERS = (0.3, 0.5, 0.75)
SPECTRUM_TOLERANCE = 1e-3
ORTHONORMALITY_TOLERANCE = 1e-6
FD_TOLERANCE = 1e-6
DTN_ORDERS = (0.25, 0.5, 0.75)
DTN_TOLERANCE = 1e-3
HALF_ORDER_TOLERANCE = 1e-6
PROFILE_TOLERANCE = 1e-8
ORACLE_TOLERANCE = 1e-8
CLOSED_FORM_TOLERANCE = 1e-8
MIN_DECAY = 3.0
DOUBLING_TOLERANCE = 1e-3
CARLEMAN_ORDERS = (0.25, 0.5, 0.75)
CARLEMAN_TAUS = (2.0, 4.0, 8.0, 16.0, 32.0)
MAX_TAU_FACTOR = 2.0
REGIME_TAUS = (4.0, 8.0, 16.0)
REGIME_RATIO_LIMIT = 2.0
INTERPOLATION_MU = 0.5
COMMUTATOR_NODES = 401
REFINEMENT_TOLERANCE = 0.05
KERNEL_CONSTANT_LIMIT = 10.0
DELTA_TOLERANCE = 1e-2
BLOW_UP_SAMPLES = 20
BLOW_UP_TOLERANCE = 1e-6


@dataclass
class CheckResult:
    """Outcome of one acceptance check."""
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "details": self.details}


@dataclass(frozen=True)
class VerificationContext:
    """Resolution and battery choices shared by the checks."""
    quick: bool = False
    seed: int = 0
    threads: int | None = None

    @property
    def grid_size(self) -> int:
        settings = get_settings()
        return settings.quick_grid_size if self.quick else settings.default_grid_size


# =============================================================================
# 1-4: closed forms
# =============================================================================


def check_spectrum(ctx: VerificationContext) -> CheckResult:
    """Finite-element eigenvalues against Lambda_k = k(k + 1 - 2s), k <= 6."""
    nodes = get_settings().spectrum_nodes
    errors = {}
    for s in SPECTRUM_ORDERS:
        table = spectrum_table(s, 6, nodes)
        errors[str(s)] = float(table["rel_err"].max())
    half_integer = all(explicit_eigenvalue(k, 0.5) == -float(k * k) for k in range(7))
    passed = max(errors.values()) <= SPECTRUM_TOLERANCE and half_integer
    return CheckResult("spectrum", passed, {"max_rel_err": errors, "nodes": nodes,
                                            "half_order_exact": half_integer})


def check_eigenfunctions(ctx: VerificationContext) -> CheckResult:
    """Low-order shapes, weighted orthonormality and agreement with the Gegenbauer oracle."""
    shape_ok = True
    worst_gram = 0.0
    worst_oracle = 0.0
    x = np.linspace(-1.0, 1.0, 101)
    for s in SPECTRUM_ORDERS:
        p0, p1, p2 = (legendre_coeffs(k, s) for k in range(3))
        shape_ok &= p0.size == 1 and p1[0] == 0.0 and p2[1] == 0.0
        shape_ok &= math.isclose(p2[2] / p2[0], 2.0 * s - 3.0, rel_tol=1e-12)

        nodes, weights = special.roots_jacobi(8, -s, -s)
        values = np.array([np.polynomial.polynomial.polyval(nodes, legendre_coeffs(k, s)) for k in range(6)])
        gram = (values * weights) @ values.T
        worst_gram = max(worst_gram, float(np.abs(gram - np.eye(6)).max()))
        for k in range(6):
            own = np.polynomial.polynomial.polyval(x, legendre_coeffs(k, s))
            worst_oracle = max(worst_oracle, float(np.abs(own - gegenbauer_oracle(k, s, x)).max()))

    passed = bool(shape_ok) and worst_gram <= ORTHONORMALITY_TOLERANCE and worst_oracle <= ORTHONORMALITY_TOLERANCE
    return CheckResult("eigenfunctions", passed, {"shapes": bool(shape_ok), "orthonormality_err": worst_gram,
                                                  "oracle_err": worst_oracle})


def check_weight(ctx: VerificationContext) -> CheckResult:
    """phi'' against centred differences of phi', the range of -phi' and the turning points at -1 and +1."""
    t = np.linspace(-20.0, 20.0, 4001)
    h = 1e-3
    fd = (phi_prime(t + h) - phi_prime(t - h)) / (2.0 * h)
    fd_err = float(np.abs(fd - phi_double_prime(t)).max())
    slope = -phi_prime(t)
    in_range = bool(np.all((slope >= 1.0 - GRADIENT_SPREAD) & (slope <= 1.0 + GRADIENT_SPREAD)))

    tau = 5.0
    low = turning_point(tau * (1.0 + math.pi / 40.0), tau)
    high = turning_point(tau * (1.0 - math.pi / 40.0), tau)
    turning_ok = abs(low + 1.0) <= 1e-8 and abs(high - 1.0) <= 1e-8
    passed = fd_err <= FD_TOLERANCE and in_range and turning_ok
    return CheckResult("weight", passed, {"fd_err": fd_err, "gradient_range": in_range,
                                          "turning_points": [low, high]})


def check_dtn(ctx: VerificationContext) -> CheckResult:
    """Normalized symbol, measured d_s against its closed form, the half-order profile and the shooting oracle."""
    xi = np.linspace(0.5, 8.0, 16)
    symbol_err = max(float(np.abs(normalized_dtn(xi, s) / np.abs(xi) ** (2.0 * s) - 1.0).max())
                     for s in DTN_ORDERS)
    d_half = dtn_constant(0.5)
    y2 = np.linspace(0.0, 5.0, 201)
    profile_err = max(float(np.abs(extension_profile(x, 0.5, y2) - np.exp(-x * y2)).max()) for x in (0.5, 2.0, 8.0))

    heights = np.linspace(0.0, 2.5, 26)
    oracle_err = max(float(np.abs(extension_profile(2.0, s, heights) - profile_ode_oracle(2.0, s, heights)).max())
                     for s in DTN_ORDERS)
    closed = {str(s): [dtn_constant(s), dtn_constant_closed_form(s)] for s in DTN_ORDERS}
    closed_err = max(abs(measured / reference - 1.0) for measured, reference in closed.values())

    passed = (symbol_err <= DTN_TOLERANCE and abs(d_half - 1.0) <= HALF_ORDER_TOLERANCE
              and profile_err <= PROFILE_TOLERANCE and oracle_err <= ORACLE_TOLERANCE
              and closed_err <= CLOSED_FORM_TOLERANCE)
    return CheckResult("dtn", passed, {"symbol_err": symbol_err, "d_half": d_half, "profile_err": profile_err,
                                       "oracle_err": oracle_err, "d_s_measured_vs_closed": closed,
                                       "closed_form_err": closed_err})


# =============================================================================
# 5: homogeneous solutions
# =============================================================================


def _flux_noise_floor(grid: HalfPlaneGrid, scale: float) -> float:
    # rounding in the first-cell difference, divided by that cell's inverse-weight moment
    left, right = power_hat_moments(grid.y2[:2], -grid.params.weight_exponent)
    return 100.0 * np.finfo(float).eps * max(scale, 1.0) / float(left[0] + right[0])


def _decayed(coarse: float, fine: float, floor: float) -> bool:
    return fine <= floor or coarse >= MIN_DECAY * fine


def check_homogeneous(ctx: VerificationContext) -> CheckResult:
    """w_k, k <= 4: residual and Neumann trace shrink under refinement, exact doubling ratios."""
    orders = (0.5,) if ctx.quick else SPECTRUM_ORDERS
    sizes = (33, 65) if ctx.quick else (49, 97)
    radii = [0.1, 0.2, 0.4]
    rows = []
    passed = True
    for s in orders:
        params = FractionalParams(s)
        for k in range(5):
            residuals, traces, floors = [], [], []
            for size in sizes:
                w = homogeneous_solution(k, s, HalfPlaneGrid.box(1.0, 1.0, size, params))
                scale = float(np.abs(w.values).max())
                residuals.append(bulk_residual(apply_cartesian_operator(w)))
                traces.append(float(np.abs(neumann_trace(w).values).max()))
                floors.append(_flux_noise_floor(w.grid, scale))
            residual_ok = _decayed(residuals[0], residuals[1], 1e-9 * max(scale, 1.0))
            trace_ok = _decayed(traces[0], traces[1], floors[1])

            expected = 2.0 ** (k + (3.0 - 2.0 * s) / 2.0)
            ratios = [r for _, r in doubling_ratios(w, radii)]
            doubling_err = max(abs(r / expected - 1.0) for r in ratios)
            ok = residual_ok and trace_ok and doubling_err <= DOUBLING_TOLERANCE
            passed &= ok
            rows.append({"s": s, "k": k, "residuals": residuals, "neumann": traces,
                         "doubling_err": doubling_err, "passed": ok})
    return CheckResult("homogeneous", bool(passed), {"cases": rows, "sizes": list(sizes)})


# =============================================================================
# 6-8: battery sweeps
# =============================================================================


def _battery(ctx: VerificationContext) -> list[TestFunctionSpec]:
    return standard_battery(quick=ctx.quick, seed=ctx.seed)


def check_carleman(ctx: VerificationContext) -> CheckResult:
    """Finite ratios, per-(s, family) maxima changing by less than 2x per doubling of tau."""
    orders = (0.5,) if ctx.quick else CARLEMAN_ORDERS
    taus = CARLEMAN_TAUS[:3] if ctx.quick else CARLEMAN_TAUS
    result = run_sweep("carleman", _battery(ctx), list(orders), list(taus), ctx.grid_size, ctx.threads)
    finite = all(math.isfinite(r.ratio) for r in result.reports)
    factors = tau_doubling_factors(ratio_summary(result.reports))
    worst = float(factors["factor"].max()) if not factors.empty else math.inf
    passed = finite and worst < MAX_TAU_FACTOR
    summary = ratio_summary(result.reports)
    return CheckResult("carleman", passed, {
        "reports": len(result.reports),
        "finite": finite,
        "worst_tau_factor": worst,
        "max_ratio": float(summary["max_ratio"].max()) if not summary.empty else math.nan,
    })


def _relative_changes(coarse: list, fine: list) -> float:
    changes = [abs(b.ratio / a.ratio - 1.0) for a, b in zip(coarse, fine) if a.ratio > 0]
    return max(changes) if changes else 0.0


def check_trace_and_herbst(ctx: VerificationContext) -> CheckResult:
    """Trace and Herbst ratios finite and stable within 5% under refinement."""
    orders = (0.5,) if ctx.quick else CARLEMAN_ORDERS
    specs = _battery(ctx)
    sizes = (97, 193)
    herbst = [run_sweep("herbst", specs, list(orders), [], size, ctx.threads).reports for size in sizes]
    trace_specs = [spec for spec in specs if spec.family is Family.ANNULAR]
    trace = [run_sweep("trace", trace_specs, list(orders), [2.0, 8.0], 0, ctx.threads, theta_cells=cells).reports
             for cells in (400, 800)]

    finite = all(math.isfinite(r.ratio) for reports in herbst + trace for r in reports)
    herbst_change = _relative_changes(*herbst)
    trace_change = _relative_changes(*trace)
    passed = finite and herbst_change <= REFINEMENT_TOLERANCE and trace_change <= REFINEMENT_TOLERANCE
    return CheckResult("trace_herbst", passed, {
        "finite": finite,
        "herbst_max_ratio": max((r.ratio for r in herbst[1]), default=0.0),
        "trace_max_ratio": max((r.ratio for r in trace[1]), default=0.0),
        "herbst_refinement_change": herbst_change,
        "trace_refinement_change": trace_change,
        "herbst_sizes": list(sizes),
    })


def _worst_growth(summary: pd.DataFrame) -> float:
    # largest increase of the per-(s, family) maximum between consecutive taus; decreases count as < 1
    worst = 0.0
    for _, group in summary.dropna(subset=["tau"]).groupby(["s", "family"], sort=True):
        maxima = group.sort_values("tau")["max_ratio"].to_numpy(dtype=float)
        if maxima.size > 1:
            worst = max(worst, float(np.max(maxima[1:] / maxima[:-1])))
    return worst


def _interpolation_reports(specs: list[TestFunctionSpec], orders: tuple[float, ...],
                           size: int) -> list[InequalityReport]:
    reports = []
    for s in orders:
        grid = battery_grid(FractionalParams(s), size)
        for spec in specs:
            w = build_test_function(spec, grid)
            reports.append(interpolation_sides(w, eps=spec.R, mu=INTERPOLATION_MU, s=s, spec_id=spec.spec_id))
    return reports


def _commutator_reports(specs: list[TestFunctionSpec]) -> list[InequalityReport]:
    reports = []
    for delta, R in sorted({(spec.delta, spec.R) for spec in specs}):
        t = np.linspace(math.log(delta) - 0.1, math.log(R) + 0.1, COMMUTATOR_NODES)
        v = annular_bump(np.exp(t), delta, R)
        reports.extend(commutator_sides(v, t, tau, spec_id=f"bump-d{delta:g}-R{R:g}") for tau in REGIME_TAUS)
    return reports


def check_regime_inequalities(ctx: VerificationContext) -> CheckResult:
    """
    Antisymmetric lower bound, Caccioppoli, interpolation and commutator positivity over the battery.

    Members with Neumann data are out of regime for the antisymmetric bound
    and are skipped; the remaining ratios must be finite and may not grow by
    2x or more from one tau to the next.
    """
    orders = (0.5,) if ctx.quick else CARLEMAN_ORDERS
    specs = _battery(ctx)

    antisymmetric = run_sweep("antisymmetric", specs, list(orders), list(REGIME_TAUS), ctx.grid_size, ctx.threads)
    anti_finite = bool(antisymmetric.reports) and all(math.isfinite(r.ratio) for r in antisymmetric.reports)
    anti_summary = ratio_summary(antisymmetric.reports)
    growth = _worst_growth(anti_summary) if anti_finite else math.inf

    caccioppoli = run_sweep("caccioppoli", specs, list(orders), [], ctx.grid_size, ctx.threads).reports
    interpolation = _interpolation_reports(specs, orders, ctx.grid_size)
    commutator = _commutator_reports(specs)

    caccioppoli_max = max(r.ratio for r in caccioppoli)
    interpolation_max = max(r.ratio for r in interpolation)
    commutator_min = min(r.ratio for r in commutator)
    commutator_positive = all(r.params["commutator"] > 0 for r in commutator)

    passed = (anti_finite and growth < MAX_TAU_FACTOR
              and caccioppoli_max <= REGIME_RATIO_LIMIT and interpolation_max <= REGIME_RATIO_LIMIT
              and commutator_min > 1.0 and commutator_positive)
    return CheckResult("regime_inequalities", passed, {
        "antisymmetric_reports": len(antisymmetric.reports),
        "antisymmetric_skipped": len(antisymmetric.skipped),
        "antisymmetric_max_ratio": float(anti_summary["max_ratio"].max()) if not anti_summary.empty else math.nan,
        "antisymmetric_worst_growth": growth,
        "caccioppoli_max_ratio": caccioppoli_max,
        "interpolation_max_ratio": interpolation_max,
        "commutator_min_ratio": commutator_min,
        "commutator_positive": commutator_positive,
        "taus": list(REGIME_TAUS),
    })


# =============================================================================
# 9-11: parametrix, blow-up, determinism
# =============================================================================


def _bump(t: np.ndarray, center: float, radius: float) -> np.ndarray:
    x = (t - center) / radius
    out = np.zeros_like(t)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def check_parametrix(ctx: VerificationContext) -> CheckResult:
    """Pointwise kernel bound in the critical regime and the discrete delta test."""
    tau = 8.0
    grid = np.linspace(-5.0, 5.0, 200)
    constants = {f"{mu:.6g}": kernel_bound_constant(mu, tau, grid, grid)
                 for mu in (tau * (1.0 - math.pi / 40.0), tau, tau * (1.0 + math.pi / 40.0))}

    # tau = mu = 4 puts the turning point at 0; the bumps stay clear of it
    t = np.linspace(-3.0, 3.0, 6001)
    h = float(t[1] - t[0])
    delta_err = 0.0
    for source in (-1.0, 1.0):
        kernel = parametrix_kernel(4.0, 4.0, t, source)
        applied = conjugated_radial_operator(kernel, t, 4.0, 4.0)
        g = _bump(t[1:-1], source, 0.5)
        reproduced = h * float(np.sum(applied * g))
        expected = float(_bump(np.array([source]), source, 0.5)[0])
        delta_err = max(delta_err, abs(reproduced / expected - 1.0))

    passed = max(constants.values()) <= KERNEL_CONSTANT_LIMIT and delta_err <= DELTA_TOLERANCE
    return CheckResult("parametrix", passed, {"bound_constants": constants, "delta_err": delta_err})


def check_blow_up(ctx: VerificationContext) -> CheckResult:
    """Rescaled random battery members have unit weighted norm on the unit half-ball."""
    rng = np.random.default_rng(ctx.seed)
    size = get_settings().quick_grid_size
    worst = 0.0
    for i in range(BLOW_UP_SAMPLES):
        s = CARLEMAN_ORDERS[i % len(CARLEMAN_ORDERS)]
        spec = TestFunctionSpec(Family.RANDOM, 0.2, 0.8, angular_index=i % 5, seed=ctx.seed + i)
        w = build_test_function(spec, battery_grid(FractionalParams(s), size))
        sigma = float(rng.uniform(0.5, 1.2))
        rescaled = blow_up_rescale(w, sigma)
        worst = max(worst, abs(weighted_norm(rescaled, half_ball(1.0)) - 1.0))
    return CheckResult("blow_up", worst <= BLOW_UP_TOLERANCE, {"samples": BLOW_UP_SAMPLES, "max_err": worst})


def _determinism_payload(ctx: VerificationContext, threads: int) -> str:
    specs = standard_battery(quick=True, seed=ctx.seed)
    reports = run_sweep("carleman", specs, [0.5], [2.0, 4.0], get_settings().quick_grid_size, threads).reports
    table = spectrum_table(0.5, 4, 1000)
    return render_json([r.to_dict() for r in reports]) + render_csv(reports_frame(reports)) + render_csv(table)


def check_determinism(ctx: VerificationContext) -> CheckResult:
    """The same reports twice, once threaded and once serial, serialize byte-identically."""
    threads = ctx.threads if ctx.threads is not None else get_settings().threads
    first = _determinism_payload(ctx, threads)
    second = _determinism_payload(ctx, 1)
    return CheckResult("determinism", first == second, {"bytes": len(first.encode("utf-8")),
                                                        "threads": [threads, 1]})


CHECKS: list[tuple[str, Callable[[VerificationContext], CheckResult]]] = [
    ("spectrum", check_spectrum),
    ("eigenfunctions", check_eigenfunctions),
    ("weight", check_weight),
    ("dtn", check_dtn),
    ("homogeneous", check_homogeneous),
    ("carleman", check_carleman),
    ("trace_herbst", check_trace_and_herbst),
    ("regime_inequalities", check_regime_inequalities),
    ("parametrix", check_parametrix),
    ("blow_up", check_blow_up),
    ("determinism", check_determinism),
]


def run_verification(ctx: VerificationContext, only: list[str] | None = None) -> list[CheckResult]:
    """
    Run the acceptance checks in order.

    A check that raises a CarlemanLabError is recorded as failed with the
    message; anything else propagates.

    Args:
        ctx: Shared resolution and seed.
        only: Optional subset of check names.

    Returns:
        One result per check run.
    """
    selected = [(name, check) for name, check in CHECKS if only is None or name in only]
    results = []
    for i, (name, check) in enumerate(selected, start=1):
        logger.info(f"[{i}/{len(selected)}] {name}")
        start = time.perf_counter()
        try:
            result = check(ctx)
        except CarlemanLabError as e:
            logger.error(f"{name} raised {type(e).__name__}: {e}")
            result = CheckResult(name, False, {"error": f"{type(e).__name__}: {e}"})
        elapsed = time.perf_counter() - start
        status = "PASS" if result.passed else "FAIL"
        logger.info(f"    {status} in {elapsed:.1f}s")
        results.append(result)
    return results
