"""Sample-average approximation driver and out-of-sample evaluation.

Runs M replications of N-scenario problems (each replication gets an
independent child seed from a splitmix64 stream), solves them with the
extensive form or the decomposition, and averages the optimal values.
Fixed first-stage decisions are evaluated out of sample on empirical
scenario sets built from test-period demand series.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import benders
from .density import ScenarioSet, make_scenarios, round_half_away
from .lpcore import DEFAULT_TOLERANCES, SolverError, Tolerances, solve_mip
from .model import (AS_WRITTEN, InfeasibleModelError, Instance, ModelError,
                    build_deterministic, build_extensive, check_first_stage,
                    evaluate_first_stage, extract_solution)

SOLVERS = ("extensive", "benders")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(seed: int, k: int) -> int:
    """k-th output of a splitmix64 stream started at ``seed``."""
    return _splitmix64((seed + (k + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class SaaConfig:
    replications: int
    scenarios_per_replication: int
    seed: int
    solver: str = "extensive"

    def __post_init__(self):
        if self.replications < 1:
            raise ModelError("replication count M must be at least 1")
        if self.scenarios_per_replication < 1:
            raise ModelError("scenario count N must be at least 1")
        if self.solver not in SOLVERS:
            raise ModelError(f"solver must be one of {SOLVERS}")


@dataclass
class ReplicationResult:
    index: int
    objective: float
    x: np.ndarray | None
    time_s: float
    converged: bool
    seed: int


@dataclass
class SaaReport:
    config: SaaConfig
    replications: list[ReplicationResult] = field(default_factory=list)

    @property
    def included(self) -> list[ReplicationResult]:
        return [r for r in self.replications if r.converged]

    @property
    def mean_objective(self) -> float:
        objs = [r.objective for r in self.included]
        if not objs:
            return math.nan
        return float(np.mean(objs))

    @property
    def std_objective(self) -> float:
        objs = [r.objective for r in self.included]
        if len(objs) < 2:
            return 0.0
        return float(np.std(objs, ddof=1))

    @property
    def deployed(self) -> ReplicationResult:
        """Replication chosen for deployment: median objective among the
        included ones (lower middle on even counts, ties by index)."""
        inc = self.included
        if not inc:
            raise ModelError("no converged replication to deploy")
        ranked = sorted(inc, key=lambda r: (r.objective, r.index))
        return ranked[(len(ranked) - 1) // 2]


def run_saa(instance: Instance, models, config: SaaConfig,
            variant: str = AS_WRITTEN, require_full_service: bool = False,
            multi_cut: bool = False, cut_groups: int | None = None,
            threads: int = 1,
            tols: Tolerances = DEFAULT_TOLERANCES) -> SaaReport:
    """M replications of N-scenario problems; failures are flagged and
    excluded from the mean rather than aborting the sweep."""
    if tuple(models.keys()) != instance.locations:
        raise ModelError("density models do not match instance locations")
    report = SaaReport(config=config)
    for k in range(config.replications):
        rep_seed = child_seed(config.seed, k)
        scen = make_scenarios(models, config.scenarios_per_replication, rep_seed)
        t0 = time.perf_counter()
        try:
            if config.solver == "extensive":
                lp = build_extensive(instance, scen, variant, require_full_service)
                out = solve_mip(lp, tols)
                if out.status != "optimal":
                    raise InfeasibleModelError("extensive form infeasible")
                sol = extract_solution(lp, out.x, out.objective, instance)
                objective, x = out.objective, sol.x
                converged = True
            else:
                sol, state = benders.run(instance, scen, variant,
                                         require_full_service=require_full_service,
                                         multi_cut=multi_cut,
                                         cut_groups=cut_groups, threads=threads,
                                         tols=tols)
                objective, x = sol.objective, sol.x
                converged = state.converged
        except (InfeasibleModelError, SolverError):
            report.replications.append(ReplicationResult(
                index=k, objective=math.nan, x=None,
                time_s=time.perf_counter() - t0, converged=False, seed=rep_seed))
            continue
        report.replications.append(ReplicationResult(
            index=k, objective=float(objective), x=x,
            time_s=time.perf_counter() - t0, converged=converged, seed=rep_seed))
    return report


@dataclass
class OutOfSampleReport:
    expected_profit: float
    daily_profits: np.ndarray
    dates: tuple
    gap: float | None
    train_objective: float | None


def empirical_scenarios(instance: Instance, series_map) -> tuple[ScenarioSet, tuple]:
    """One equally weighted scenario per observed day.

    Days are the union over the instance's locations; a location missing
    a day contributes an honest zero.
    """
    missing = [loc for loc in instance.locations if loc not in series_map]
    if missing:
        raise ModelError(f"demand series missing for locations {missing}")
    all_dates = sorted({d for loc in instance.locations
                        for d in series_map[loc].dates})
    if not all_dates:
        raise ModelError("no days in the demand series")
    lookup = {loc: dict(zip(series_map[loc].dates, series_map[loc].counts))
              for loc in instance.locations}
    demands = np.array([[lookup[loc].get(d, 0) for loc in instance.locations]
                        for d in all_dates], dtype=np.int64)
    probs = np.full(len(all_dates), 1.0 / len(all_dates))
    scen = ScenarioSet(locations=instance.locations, demands=demands,
                       probabilities=probs)
    return scen, tuple(all_dates)


def evaluate_out_of_sample(instance: Instance, x_hat, test_series,
                           variant: str = AS_WRITTEN,
                           train_objective: float | None = None,
                           tols: Tolerances = DEFAULT_TOLERANCES) -> OutOfSampleReport:
    """Evaluate a fixed allocation on the empirical test-day scenarios.

    The gap against a supplied training objective is |train - test| / train.
    """
    x = check_first_stage(instance, x_hat)
    scen, dates = empirical_scenarios(instance, test_series)
    ev = evaluate_first_stage(instance, x, scen, variant, tols=tols)
    daily = ev.recourse_values - ev.holding_cost
    gap = None
    if train_objective is not None:
        if train_objective == 0:
            raise ModelError("cannot compute a relative gap against a zero objective")
        gap = abs(train_objective - ev.expected_profit) / abs(train_objective)
    return OutOfSampleReport(expected_profit=ev.expected_profit,
                             daily_profits=daily, dates=dates, gap=gap,
                             train_objective=train_objective)


def deterministic_mean_allocation(instance: Instance, scenarios: ScenarioSet,
                                  variant: str = AS_WRITTEN,
                                  tols: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """First-stage allocation of the mean-demand deterministic model."""
    d_avg = np.maximum(round_half_away(scenarios.mean_demand), 0.0)
    lp = build_deterministic(instance, d_avg, variant)
    out = solve_mip(lp, tols)
    if out.status != "optimal":
        raise InfeasibleModelError("deterministic mean model infeasible")
    sol = extract_solution(lp, out.x, out.objective, instance)
    return sol.x


def write_saa_report(report: SaaReport, path):
    """CSV per replication plus a trailing summary comment line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replication,objective,time_s,converged\n")
        for r in report.replications:
            obj = f"{r.objective:.17g}" if r.converged else ""
            fh.write(f"{r.index},{obj},{r.time_s:.6f},{int(r.converged)}\n")
        fh.write(f"# summary: mean={report.mean_objective:.17g},"
                 f"std={report.std_objective:.17g},"
                 f"included={len(report.included)}/{len(report.replications)}\n")


def write_solution_csv(locations, x, path, objective=None):
    with open(path, "w", encoding="utf-8") as fh:
        if objective is not None:
            fh.write(f"# objective = {objective:.17g}\n")
        fh.write("location,x\n")
        for loc, v in zip(locations, x):
            fh.write(f"{loc},{int(round(float(v)))}\n")


def read_solution_csv(path) -> dict[int, int]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#") or ln == "location,x":
                continue
            loc_s, x_s = ln.split(",")
            out[int(loc_s)] = int(x_s)
    return out


def read_saa_report_csv(path) -> list[dict]:
    """Rows of a written SAA report (the trailing summary line is parsed
    for consistency but not returned)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "replication,objective,time_s,converged":
            raise ModelError(f"{path}: unexpected report header {header!r}")
        for ln in fh:
            ln = ln.strip()
            if not ln:
                continue
            if ln.startswith("#"):
                continue
            idx, obj, time_s, conv = ln.split(",")
            rows.append({"replication": int(idx),
                         "objective": float(obj) if obj else math.nan,
                         "time_s": float(time_s),
                         "converged": bool(int(conv))})
    return rows
