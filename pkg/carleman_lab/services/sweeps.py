"""
Battery sweeps.

A sweep evaluates one inequality over every (test function, s) pair of a
battery and every tau. Jobs are independent; they run on a thread pool and
come back in submission order, so the merged report list is deterministic
whatever the worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import numpy as np
import pandas as pd

from carleman_lab.config.settings import get_settings
from carleman_lab.core.battery import (
    TestFunctionSpec,
    angular_test_function,
    battery_grid,
    build_test_function,
)
from carleman_lab.core.errors import OutOfRegimeError, ParameterError
from carleman_lab.core.grid import FractionalParams, grading_exponent, symmetric_graded_nodes
from carleman_lab.core.inequalities import (
    InequalityReport,
    antisymmetric_lower_bound_sides,
    caccioppoli_sides,
    carleman_sides,
    herbst_sides,
    operator_data,
    trace_interpolation_sides,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SWEEPABLE = ("carleman", "herbst", "trace", "antisymmetric", "caccioppoli")
DEFAULT_THETA_CELLS = 400


class WorkerMap:
    """Ordered map over a thread pool; plain map when threads <= 1."""

    def __init__(self, threads: int):
        self.threads = threads
        self._executor: ThreadPoolExecutor | None = None

    def __enter__(self) -> Callable[[Callable[[T], R], Iterable[T]], list[R]]:
        if self.threads <= 1:
            return lambda fn, items: [fn(item) for item in items]
        self._executor = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="sweep")
        executor = self._executor
        return lambda fn, items: list(executor.map(fn, items))

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=exc_type is not None)
            self._executor = None


@dataclass(frozen=True)
class SweepJob:
    """One (test function, s) pair and the tau values to evaluate it at."""
    inequality: str
    spec: TestFunctionSpec
    s: float
    taus: tuple[float, ...]
    grid_size: int
    theta_cells: int = DEFAULT_THETA_CELLS


@dataclass
class SweepResult:
    """Merged reports of a sweep, plus the jobs skipped as out of regime."""
    reports: list[InequalityReport] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _tag(report: InequalityReport, spec: TestFunctionSpec) -> InequalityReport:
    report.params.update(family=spec.family.value, delta=spec.delta, R=spec.R,
                         k=spec.angular_index, seed=spec.seed)
    return report


def _run_job(job: SweepJob) -> tuple[list[InequalityReport], str | None]:
    spec = job.spec
    if job.inequality == "trace":
        theta = symmetric_graded_nodes(0.0, np.pi, job.theta_cells, grading_exponent(job.s))
        u = angular_test_function(spec, job.s)
        return [_tag(trace_interpolation_sides(u, tau, job.s, theta, spec_id=spec.spec_id), spec)
                for tau in job.taus], None

    grid = battery_grid(FractionalParams(job.s), job.grid_size)
    w = build_test_function(spec, grid)

    if job.inequality == "herbst":
        return [_tag(herbst_sides(w, job.s, spec_id=spec.spec_id), spec)], None
    if job.inequality == "caccioppoli":
        report = caccioppoli_sides(w, r0=spec.delta, r1=0.5 * spec.R, s=job.s, spec_id=spec.spec_id)
        return [_tag(report, spec)], None

    f, h = operator_data(w)
    if job.inequality == "carleman":
        return [_tag(carleman_sides(w, f, h, tau=tau, s=job.s, tau0=get_settings().tau0,
                                    spec_id=spec.spec_id), spec)
                for tau in job.taus], None
    if job.inequality == "antisymmetric":
        try:
            return [_tag(antisymmetric_lower_bound_sides(w, spec.delta, spec.R, tau, job.s, f,
                                                         spec_id=spec.spec_id), spec)
                    for tau in job.taus], None
        except OutOfRegimeError as e:
            logger.info(f"Skipping {spec.spec_id} at s={job.s}: {e}")
            return [], spec.spec_id
    raise ParameterError(f"unknown inequality '{job.inequality}'")


def run_sweep(inequality: str, specs: list[TestFunctionSpec], s_values: list[float],
              taus: list[float], grid_size: int, threads: int | None = None,
              theta_cells: int = DEFAULT_THETA_CELLS) -> SweepResult:
    """
    Evaluate one inequality over a battery.

    Args:
        inequality: One of SWEEPABLE.
        specs: Battery members.
        s_values: Orders s.
        taus: Carleman parameters (ignored by herbst and caccioppoli).
        grid_size: Nodes per axis of the battery box.
        threads: Worker threads; defaults to the CARLEMAN_LAB_THREADS setting.
        theta_cells: Angular cells for the trace inequality.

    Returns:
        Reports ordered by (s, spec, tau), and the ids skipped as out of regime.
    """
    if inequality not in SWEEPABLE:
        raise ParameterError(f"'{inequality}' cannot be swept; choose one of {SWEEPABLE}")
    threads = threads if threads is not None else get_settings().threads
    jobs = [
        SweepJob(inequality, spec, float(s), tuple(float(t) for t in taus), grid_size, theta_cells)
        for s in s_values
        for spec in specs
    ]
    logger.info(f"Sweeping {inequality}: {len(jobs)} jobs x {len(taus)} tau on {threads} threads")

    result = SweepResult()
    with WorkerMap(threads) as worker_map:
        for reports, skipped in worker_map(_run_job, jobs):
            result.reports.extend(reports)
            if skipped is not None:
                result.skipped.append(skipped)

    non_finite = [r.spec_id for r in result.reports if not math.isfinite(r.ratio)]
    if non_finite:
        logger.warning(f"{inequality}: {len(non_finite)} reports with a non-finite ratio")
    return result


def ratio_summary(reports: list[InequalityReport]) -> pd.DataFrame:
    """
    Largest ratio per (inequality, s, family, tau).

    Reports without a tau (herbst, caccioppoli) are grouped under tau = NaN.
    """
    rows = [{
        "inequality": r.inequality,
        "s": r.params.get("s"),
        "family": r.params.get("family", ""),
        "tau": r.params.get("tau", math.nan),
        "ratio": r.ratio,
    } for r in reports]
    frame = pd.DataFrame(rows, columns=["inequality", "s", "family", "tau", "ratio"])
    if frame.empty:
        return pd.DataFrame(columns=["inequality", "s", "family", "tau", "max_ratio", "count"])
    grouped = (frame.groupby(["inequality", "s", "family", "tau"], dropna=False, sort=True)["ratio"]
               .agg(max_ratio="max", count="size")
               .reset_index())
    return grouped


def tau_doubling_factors(summary: pd.DataFrame) -> pd.DataFrame:
    """
    Factor by which the largest ratio changes between consecutive taus of a (s, family) group.

    The factor is max(q, 1/q) with q the ratio of consecutive maxima, so a
    bounded family stays below 2 when tau doubles.
    """
    rows = []
    data = summary.dropna(subset=["tau"])
    for (inequality, s, family), group in data.groupby(["inequality", "s", "family"], sort=True):
        group = group.sort_values("tau")
        taus = group["tau"].to_numpy()
        maxima = group["max_ratio"].to_numpy()
        for i in range(1, len(taus)):
            lo, hi = maxima[i - 1], maxima[i]
            if lo > 0 and hi > 0 and math.isfinite(lo) and math.isfinite(hi):
                factor = max(hi / lo, lo / hi)
            else:
                factor = math.inf
            rows.append({"inequality": inequality, "s": s, "family": family,
                         "tau_from": taus[i - 1], "tau_to": taus[i], "factor": factor})
    return pd.DataFrame(rows, columns=["inequality", "s", "family", "tau_from", "tau_to", "factor"])

