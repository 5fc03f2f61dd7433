"""
Carleman Lab - command-line entry point.

Subcommands:
    spectrum   eigenvalue table of the half-circle operator with FE cross-validation
    extend     extension of boundary data and its Dirichlet-to-Neumann map
    carleman   Carleman ratios over a test-function battery
    trace      trace interpolation and Herbst ratios
    doubling   doubling ratios, three-balls exponent and vanishing order
    verify     the acceptance suite

Usage:
    python -m carleman_lab.cli spectrum --s 0.5 --k-max 4
    python -m carleman_lab.cli doubling --family homogeneous --k 2 --s 0.5
    python -m carleman_lab.cli verify --quick
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
from pydantic import ValidationError

from carleman_lab.config.run_config import RunConfig
from carleman_lab.config.settings import get_settings
from carleman_lab.core.battery import (
    Family,
    TestFunctionSpec,
    battery_grid,
    build_test_function,
    standard_battery,
)
from carleman_lab.core.coords import neumann_trace
from carleman_lab.core.errors import CarlemanLabError, ConfigurationError, DegenerateNormError, NoiseFloorError
from carleman_lab.core.extension import (
    SpectralBoundaryData,
    cs_extend,
    dtn_apply,
    dtn_constant,
    dtn_constant_closed_form,
    homogeneous_solution,
)
from carleman_lab.core.grid import (
    FractionalParams,
    GridFunction,
    HalfPlaneGrid,
    graded_nodes,
    grading_exponent,
    vanishing_order,
)
from carleman_lab.core.inequalities import (
    CARLEMAN_MIN_S,
    doubling_ratios,
    doubling_tau_choice,
    three_balls_exponent,
)
from carleman_lab.core.spectrum import gap_improved_bound, spectrum_table
from carleman_lab.services.reports import write_csv, write_json, write_metadata, write_reports
from carleman_lab.services.sweeps import ratio_summary, run_sweep, tau_doubling_factors
from carleman_lab.services.verification import VerificationContext, run_verification

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

logger = logging.getLogger("carleman_lab.cli")

SPECTRUM_TOLERANCE = 1e-3
DOUBLING_TOLERANCE = 1e-3
DTN_CONSTANT_TOLERANCE = 1e-6
NEUMANN_CONSISTENCY_TOLERANCE = 1e-3
MAX_TAU_FACTOR = 2.0
HOMOGENEOUS_RADII = [0.05, 0.1, 0.2, 0.4]
OFFSET_RADII = [0.025, 0.05, 0.1]
VANISHING_RADII = [0.8, 0.4, 0.2, 0.1, 0.05]
SYNTHETIC_SAMPLES = 64
SYNTHETIC_MODES = 6


# =============================================================================
# Subcommands
# =============================================================================


def run_spectrum(config: RunConfig, out: Path) -> bool:
    """Eigenvalue table per s; passes when every FE eigenvalue is within 1e-3 of the closed form."""
    nodes = get_settings().spectrum_nodes
    frames = []
    summary: dict[str, Any] = {}
    for s in config.s:
        table = spectrum_table(s, config.k_max, nodes)
        table.insert(0, "s", s)
        frames.append(table)
        worst = float(table["rel_err"].max())
        summary[f"{s:g}"] = {"max_rel_err": worst, "passed": worst <= SPECTRUM_TOLERANCE}
        logger.info(f"s={s:g}: max relative error {worst:.3e} over k <= {config.k_max}")

    passed = all(entry["passed"] for entry in summary.values())
    write_csv(out / "spectrum.csv", pd.concat(frames, ignore_index=True))
    write_json(out / "spectrum.json", {"nodes": nodes, "k_max": config.k_max, "orders": summary,
                                       "tolerance": SPECTRUM_TOLERANCE, "passed": passed})
    return passed


def _boundary_samples(config: RunConfig) -> tuple[np.ndarray, np.ndarray, str]:
    if config.input is not None:
        try:
            frame = pd.read_csv(config.input)
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigurationError(f"cannot read boundary samples {config.input}: {e}") from e
        missing = {"y1", "value"} - set(frame.columns)
        if missing:
            raise ConfigurationError(f"{config.input} lacks columns {sorted(missing)}")
        return frame["y1"].to_numpy(float), frame["value"].to_numpy(float), str(config.input)

    # one period of a seeded trigonometric polynomial on [-pi, pi)
    rng = np.random.default_rng(config.seed)
    y1 = np.linspace(-math.pi, math.pi, SYNTHETIC_SAMPLES, endpoint=False)
    values = np.zeros_like(y1)
    for m in range(1, SYNTHETIC_MODES + 1):
        a, b = rng.normal(size=2) / m**2
        values += a * np.cos(m * y1) + b * np.sin(m * y1)
    return y1, values, f"synthetic(seed={config.seed})"


def run_extend(config: RunConfig, out: Path) -> bool:
    """
    Extension CSV and DtN table per s.

    Passes when the measured d_s matches its closed form and the Neumann trace
    of the extension reproduces minus the DtN map to 1e-3.
    """
    y1, values, source = _boundary_samples(config)
    data = SpectralBoundaryData.from_samples(y1, values)
    span = float(y1[-1] - y1[0])
    orders = []
    for s in config.s:
        params = FractionalParams(s)
        y2 = graded_nodes(0.5 * span, config.resolved_grid_size - 1, grading_exponent(s))
        grid = HalfPlaneGrid(y1=y1, y2=y2, params=params)
        w = cs_extend(data, s, grid)
        dtn = dtn_apply(data, s, y1)
        trace = neumann_trace(w)
        consistency = float(np.abs(trace.values + dtn).max() / max(np.abs(dtn).max(), 1e-300))

        write_csv(out / f"extension_s{s:g}.csv", w.to_frame())
        write_csv(out / f"dtn_s{s:g}.csv", pd.DataFrame({
            "y1": y1,
            "value": values,
            "dtn": dtn,
            "fractional_laplacian": dtn_apply(data, s, y1, normalized=True),
            "neumann_trace": trace.values,
        }))
        measured, closed = dtn_constant(s), dtn_constant_closed_form(s)
        orders.append({
            "s": s,
            "d_s": measured,
            "d_s_closed_form": closed,
            "modes": int(data.frequencies.size),
            "max_frequency": data.max_frequency,
            "neumann_consistency": consistency,
            "passed": (abs(measured / closed - 1.0) <= DTN_CONSTANT_TOLERANCE
                       and consistency <= NEUMANN_CONSISTENCY_TOLERANCE),
        })
        logger.info(f"s={s:g}: d_s = {measured:.10f} (closed form {closed:.10f}), "
                    f"trace vs DtN {consistency:.2e}")

    passed = all(entry["passed"] for entry in orders)
    write_json(out / "extend.json", {"source": source, "samples": int(y1.size), "orders": orders, "passed": passed})
    return passed


def _require_orders(config: RunConfig, minimum: float, what: str) -> None:
    low = [s for s in config.s if s < minimum]
    if low:
        raise ConfigurationError(f"{what} needs s >= {minimum:g}, got {low}")


def run_carleman(config: RunConfig, out: Path) -> bool:
    """Carleman reports over the battery; passes when every ratio is finite and tau-stable."""
    _require_orders(config, CARLEMAN_MIN_S, "the Carleman estimate")
    specs = standard_battery([config.family], quick=config.quick, seed=config.seed)
    result = run_sweep("carleman", specs, config.s, config.tau, config.resolved_grid_size)
    summary = ratio_summary(result.reports)
    factors = tau_doubling_factors(summary)

    write_reports(out, "carleman", result.reports)
    write_csv(out / "carleman_summary.csv", summary)
    write_csv(out / "carleman_tau_factors.csv", factors)

    # spectral-gap factor along the radii covered by the battery
    t = np.linspace(math.log(min(spec.delta for spec in specs)), math.log(max(spec.R for spec in specs)), 101)
    gap = pd.concat([pd.DataFrame({"s": s, "tau": tau, "t": t, "gap": gap_improved_bound(tau, s, t)})
                     for s in config.s for tau in config.tau], ignore_index=True)
    write_csv(out / "carleman_gap.csv", gap)

    finite = all(math.isfinite(r.ratio) for r in result.reports)
    stable = factors.empty or bool((factors["factor"] < MAX_TAU_FACTOR).all())
    logger.info(f"{len(result.reports)} reports, largest ratio {summary['max_ratio'].max():.4g}, "
                f"finite={finite}, tau-stable={stable}")
    return finite and stable


def run_trace(config: RunConfig, out: Path) -> bool:
    """Trace interpolation and Herbst reports; passes when every ratio is finite."""
    low = [tau for tau in config.tau if not tau > 1.0]
    if low:
        raise ConfigurationError(f"trace interpolation needs tau > 1, got {low}")
    specs = standard_battery([config.family], quick=config.quick, seed=config.seed)
    trace = run_sweep("trace", specs, config.s, config.tau, config.resolved_grid_size)
    herbst = run_sweep("herbst", specs, config.s, [], config.resolved_grid_size)
    reports = trace.reports + herbst.reports

    write_reports(out, "trace", reports)
    write_csv(out / "trace_summary.csv", ratio_summary(reports))
    finite = all(math.isfinite(r.ratio) for r in reports)
    logger.info(f"{len(trace.reports)} trace and {len(herbst.reports)} Herbst reports, finite={finite}")
    return finite


def _doubling_subject(config: RunConfig, s: float) -> tuple[GridFunction, float, list[float], float | None]:
    # (w, centre, radii, expected ratio); homogeneous solutions sit at the origin
    grid = battery_grid(FractionalParams(s), config.resolved_grid_size)
    if config.family is Family.HOMOGENEOUS:
        w = homogeneous_solution(config.k, s, grid)
        center, radii, expected = 0.0, config.radii or HOMOGENEOUS_RADII, 2.0 ** (config.k + (3.0 - 2.0 * s) / 2.0)
    else:
        spec = TestFunctionSpec(config.family, 0.2, 0.8, angular_index=config.k, seed=config.seed)
        w = build_test_function(spec, grid)
        center, radii, expected = 0.5, config.radii or OFFSET_RADII, None

    reach = 2.0 * max(radii)
    if not grid.contains(center - reach, center + reach, reach):
        raise ConfigurationError(f"doubled ball of radius {reach:g} around y1={center:g} leaves the grid")
    return w, center, sorted(radii), expected


def run_doubling(config: RunConfig, out: Path) -> bool:
    """Doubling ratios per s; for homogeneous solutions they must equal 2^(k + (3-2s)/2)."""
    rows = []
    orders = []
    for s in config.s:
        w, center, radii, expected = _doubling_subject(config, s)
        ratios = doubling_ratios(w, radii, s, center=center)
        for r, ratio in ratios:
            rows.append({"s": s, "family": config.family.value, "k": config.k, "center": center,
                         "r": r, "ratio": ratio, "expected": expected if expected is not None else math.nan})

        entry: dict[str, Any] = {"s": s, "center": center, "ratios": [ratio for _, ratio in ratios]}
        try:
            balls = three_balls_exponent(w, radii[len(radii) // 2], center, s)
            entry.update(three_balls_alpha=balls.alpha, three_balls_flagged=balls.flagged)
        except DegenerateNormError as e:
            logger.warning(f"s={s:g}: {e}")

        if expected is not None:
            err = max(abs(ratio / expected - 1.0) for _, ratio in ratios)
            entry.update(expected=expected, max_rel_err=err, passed=err <= DOUBLING_TOLERANCE)
            try:
                entry["tau_choice"] = doubling_tau_choice(w, max(radii), s)
                fit = vanishing_order(w, VANISHING_RADII)
                entry.update(vanishing_order=fit.order, vanishing_order_expected=2 * config.k + 3.0 - 2.0 * s)
            except (DegenerateNormError, NoiseFloorError) as e:
                logger.warning(f"s={s:g}: {e}")
        else:
            entry["passed"] = all(math.isfinite(ratio) for _, ratio in ratios)
        orders.append(entry)

        message = f"s={s:g}: ratios {[round(r, 6) for r in entry['ratios']]}"
        logger.info(message if expected is None else f"{message}, expected {expected:.6g}")

    passed = all(entry["passed"] for entry in orders)
    write_csv(out / "doubling.csv", pd.DataFrame(rows))
    write_json(out / "doubling.json", {"family": config.family.value, "k": config.k, "orders": orders,
                                       "passed": passed})
    return passed


def run_verify(config: RunConfig, out: Path) -> bool:
    """The acceptance suite; passes when every check does."""
    ctx = VerificationContext(quick=config.quick, seed=config.seed, threads=get_settings().threads)
    results = run_verification(ctx)
    passed = all(result.passed for result in results)
    write_json(out / "verify.json", {"quick": config.quick, "seed": config.seed, "passed": passed,
                                     "checks": [result.to_dict() for result in results]})
    write_csv(out / "verify.csv", pd.DataFrame([{"check": r.name, "passed": r.passed} for r in results]))
    for result in results:
        logger.info(f"  {'PASS' if result.passed else 'FAIL'}  {result.name}")
    return passed


COMMANDS: dict[str, Callable[[RunConfig, Path], bool]] = {
    "spectrum": run_spectrum,
    "extend": run_extend,
    "carleman": run_carleman,
    "trace": run_trace,
    "doubling": run_doubling,
    "verify": run_verify,
}


def run(config: RunConfig) -> int:
    """
    Execute one validated configuration.

    Returns:
        0 if every assertion of the subcommand passed, 1 otherwise.

    Raises:
        ConfigurationError: If the configuration is rejected by the subcommand.
        CarlemanLabError: On numerical failures.
    """
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)

    logger.info("=" * 60)
    logger.info(f"Carleman Lab - {config.subcommand}")
    logger.info("=" * 60)
    logger.info(f"s: {config.s}")
    if config.subcommand in ("carleman", "trace"):
        logger.info(f"tau: {config.tau}")
    if config.subcommand not in ("spectrum", "verify"):
        logger.info(f"Family: {config.family.value} (k={config.k}, seed={config.seed})")
        logger.info(f"Grid size: {config.resolved_grid_size}")
    logger.info(f"Quick: {config.quick}")
    logger.info(f"Output Dir: {out.resolve()}")
    logger.info("=" * 60)

    passed = COMMANDS[config.subcommand](config, out)
    write_metadata(out, config.subcommand, config.model_dump(mode="json"))

    logger.info("=" * 60)
    logger.info(f"{config.subcommand.upper()} {'PASSED' if passed else 'FAILED'}")
    logger.info("=" * 60)
    return 0 if passed else 1


# =============================================================================
# Argument parsing
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per entry of COMMANDS, all sharing the same flags."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--s", type=float, nargs="+", default=None, help="Orders s in (0, 1)")
    common.add_argument("--tau", type=float, nargs="+", default=None, help="Carleman parameters tau")
    common.add_argument("--k-max", type=int, default=None, help="Highest spectral index (spectrum)")
    common.add_argument("--k", type=int, default=None, help="Degree or angular index of the test function")
    common.add_argument("--grid-size", type=int, default=None, help="Nodes per axis (default: from settings)")
    common.add_argument("--radii", type=float, nargs="+", default=None, help="Radii for doubling ratios")
    common.add_argument("--family", choices=[f.value for f in Family], default=None, help="Test-function family")
    common.add_argument("--seed", type=int, default=None, help="Seed for randomized families")
    common.add_argument("--out", type=Path, default=None, help="Output directory (default: from settings)")
    common.add_argument("--quick", action="store_true", default=None, help="Reduced resolution and battery")
    common.add_argument("--config", type=Path, default=None, help="JSON config file mirroring the flags")
    common.add_argument("--input", type=Path, default=None, help="Boundary samples CSV (y1,value) for extend")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    parser = argparse.ArgumentParser(
        prog="carleman_lab",
        description="Numerical companion to unique continuation for the fractional Laplacian.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=(handler.__doc__ or "").strip().splitlines()[0])
    return parser


def _configure_logging(verbose: bool) -> None:
    try:
        level = get_settings().log_level.upper()
    except ValidationError:
        level = "INFO"
    logging.basicConfig(
        level=logging.DEBUG if verbose else level,
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point; returns the exit status."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    overrides = {
        "subcommand": args.command,
        "s": args.s,
        "tau": args.tau,
        "k_max": args.k_max,
        "k": args.k,
        "grid_size": args.grid_size,
        "radii": args.radii,
        "family": args.family,
        "seed": args.seed,
        "out": args.out,
        "quick": args.quick,
        "input": args.input,
    }
    try:
        config = RunConfig.from_sources(args.config, overrides)
        return run(config)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except CarlemanLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
