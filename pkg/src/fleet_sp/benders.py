"""L-shaped (Benders) decomposition of the two-stage allocation model.

Master over (x, theta), per-scenario recourse LPs, optimality cuts from
recourse duals and feasibility cuts from Farkas certificates, iterated
until the gap between the running upper bound (master value) and lower
bound (best evaluated allocation) closes below the tolerance.

Default is a single aggregated theta with one expected-value cut per
iteration; ``multi_cut=True`` gives one theta_s per scenario for faster
convergence at the price of a bigger master.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lpcore import (DEFAULT_TOLERANCES, LE, LinearProgram, SolverError,
                     Tolerances, solve_lp, solve_mip)
from .model import (AS_WRITTEN, InfeasibleModelError, Instance, ModelError,
                    Solution, _check_variant, build_recourse, first_stage_caps)


@dataclass(frozen=True)
class Cut:
    """Affine cut on the first stage: theta <= coeffs.x + constant
    (optimality, bound on its scenario group's expected recourse) or
    coeffs.x + constant >= 0 (feasibility, from the generating scenario's
    dual ray)."""

    kind: str                    # "optimality" | "feasibility"
    coeffs: tuple[float, ...]
    constant: float
    scenario: int | None         # generating scenario (feasibility cuts)
    group: int | None = None     # theta index (optimality cuts)

    def __post_init__(self):
        if self.kind not in ("optimality", "feasibility"):
            raise ValueError(f"unknown cut kind {self.kind!r}")
        if not all(math.isfinite(c) for c in self.coeffs) or not math.isfinite(self.constant):
            raise ValueError("cut coefficients must be finite")


@dataclass
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    cuts_added: int
    master_time_s: float
    sub_time_s: float


@dataclass
class BendersState:
    iterations: int = 0
    lb: float = -math.inf
    ub: float = math.inf
    cuts: list[Cut] = field(default_factory=list)
    tolerance: float = math.nan
    incumbent_x: np.ndarray | None = None
    log: list[IterationRecord] = field(default_factory=list)
    converged: bool = False


@dataclass
class _SubResult:
    scenario: int
    value: float | None          # None when recourse infeasible
    cut: Cut
    y: np.ndarray | None = None
    f: np.ndarray | None = None


def solve_subproblem(instance: Instance, variant: str, demand, x_fixed,
                     scenario_id: int = 0, require_full_service: bool = False,
                     tols: Tolerances = DEFAULT_TOLERANCES) -> tuple[float | None, Cut]:
    """Solve one scenario's recourse LP at a fixed allocation.

    Returns (recourse value, optimality cut) when feasible, or
    (None, feasibility cut) when the full-service requirement makes the
    recourse infeasible.  Cuts are affine in x because the recourse rhs is
    R x + rho with constant matrices.
    """
    res = _solve_sub(instance, variant, np.asarray(demand), np.asarray(x_fixed, dtype=float),
                     scenario_id, require_full_service, tols, want_solution=False)
    return res.value, res.cut


def _solve_sub(instance, variant, demand, x_fixed, scenario_id,
               require_full_service, tols, want_solution) -> _SubResult:
    rec = build_recourse(instance, demand, x_fixed, variant, require_full_service)
    out = solve_lp(rec.program, tols)
    if out.status == "optimal":
        slope = out.duals @ rec.rhs_x
        const = float(out.duals @ rec.rhs_const)
        cut = Cut(kind="optimality", coeffs=tuple(slope), constant=const,
                  scenario=scenario_id)
        y = f = None
        if want_solution:
            n = instance.n
            y = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    if rec.y_idx[i][j] is not None:
                        y[i, j] = out.x[rec.y_idx[i][j]]
            f = np.array([out.x[rec.f_idx[i]] for i in range(n)])
        return _SubResult(scenario_id, float(out.objective), cut, y, f)
    if out.status == "infeasible":
        slope = out.farkas @ rec.rhs_x
        const = float(out.farkas @ rec.rhs_const)
        cut = Cut(kind="feasibility", coeffs=tuple(slope), constant=const,
                  scenario=scenario_id)
        return _SubResult(scenario_id, None, cut)
    raise SolverError(f"recourse subproblem ended with status {out.status}")


def _build_master(instance, cuts, theta_caps, x_caps=None):
    """Master over (x, theta_0..theta_{G-1}); each theta_g carries its
    scenario group's probability-weighted expected recourse."""
    lp = LinearProgram()
    x_idx = [lp.add_var(objective=-instance.holding[i], integer=True,
                        upper=(math.inf if x_caps is None else float(x_caps[i])),
                        name=f"x[{instance.locations[i]}]")
             for i in range(instance.n)]
    th_idx = [lp.add_var(objective=1.0, lower=-math.inf, upper=float(cap),
                         name=f"theta[{g}]")
              for g, cap in enumerate(theta_caps)]
    lp.add_row([(x_idx[i], 1.0) for i in range(instance.n)], LE,
               float(instance.capacity))
    for cut in cuts:
        if cut.kind == "optimality":
            coeffs = [(th_idx[cut.group], 1.0)]
            coeffs += [(x_idx[i], -c) for i, c in enumerate(cut.coeffs)]
            lp.add_row(coeffs, LE, cut.constant)
        else:
            coeffs = [(x_idx[i], -c) for i, c in enumerate(cut.coeffs)]
            lp.add_row(coeffs, LE, cut.constant)
    return lp, x_idx, th_idx


def run(instance: Instance, scenarios, variant: str = AS_WRITTEN,
        tolerance: float | None = None, max_iter: int = 200,
        multi_cut: bool = False, cut_groups: int | None = None,
        require_full_service: bool = False,
        threads: int = 1, master_node_limit: int = 2000,
        tols: Tolerances = DEFAULT_TOLERANCES) -> tuple[Solution, BendersState]:
    """Run the decomposition loop until UB - LB < tolerance or max_iter.

    The default tolerance is 1e-6 * (1 + |first master value|).
    ``cut_groups`` sets the aggregation granularity: 1 (default) keeps a
    single expected-value cut per iteration, ``multi_cut`` is shorthand
    for one group per scenario, and intermediate values trade master size
    against iteration count on wide instances.  Raises
    InfeasibleModelError when feasibility cuts prove no allocation admits
    a feasible recourse; a max_iter exit returns the incumbent with
    ``state.converged`` False.
    """
    _check_variant(variant)
    if tuple(scenarios.locations) != instance.locations:
        raise ModelError("scenario locations do not match the instance")
    if tolerance is not None and not tolerance > 0:
        raise ModelError("tolerance must be positive")
    n_scen = scenarios.n_scenarios
    probs = np.asarray(scenarios.probabilities, dtype=float)
    demands = scenarios.demands
    if multi_cut:
        n_groups = n_scen
    elif cut_groups is not None:
        if cut_groups < 1:
            raise ModelError("cut_groups must be at least 1")
        n_groups = min(cut_groups, n_scen)
    else:
        n_groups = 1
    group_of = [s % n_groups for s in range(n_scen)]
    # Initial theta caps: the master with no cuts is otherwise unbounded.
    per_scen_cap = np.array([float(np.dot(instance.revenue, demands[s]))
                             for s in range(n_scen)])
    theta_caps = np.zeros(n_groups)
    for s in range(n_scen):
        theta_caps[group_of[s]] += probs[s] * per_scen_cap[s]
    x_caps = first_stage_caps(instance, demands, variant)

    state = BendersState()
    best_sub: list[_SubResult] | None = None
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it in range(1, max_iter + 1):
            t0 = time.perf_counter()
            master, x_idx, _ = _build_master(instance, state.cuts, theta_caps,
                                             x_caps)
            # Inexact master: early iterations only need a valid bound and
            # a candidate allocation, so the master gap tracks the current
            # spread and tightens to a fraction of the loop tolerance.
            mp_gap = 0.0
            if not math.isnan(state.tolerance):
                mp_gap = 0.25 * state.tolerance
                if math.isfinite(state.ub) and math.isfinite(state.lb):
                    mp_gap = max(mp_gap, 0.05 * (state.ub - state.lb))
            mp = solve_mip(master, tols, gap=mp_gap,
                           node_limit=master_node_limit, on_limit="bound")
            master_time = time.perf_counter() - t0
            if mp.status == "infeasible":
                raise InfeasibleModelError(
                    "master infeasible: no allocation admits feasible recourse")
            x_bar = np.rint(np.array([mp.x[j] for j in x_idx]))
            x_bar = np.maximum(x_bar, 0.0)
            state.ub = min(state.ub, mp.bound)

            t1 = time.perf_counter()
            def solve_one(s):
                return _solve_sub(instance, variant, demands[s], x_bar, s,
                                  require_full_service, tols, want_solution=True)
            if pool is not None:
                results = list(pool.map(solve_one, range(n_scen)))
            else:
                results = [solve_one(s) for s in range(n_scen)]
            sub_time = time.perf_counter() - t1

            infeasible = [r for r in results if r.value is None]
            if infeasible:
                # No valid incumbent value this round; exclude the
                # offending allocations and re-solve the master.
                new_cuts = sorted((r.cut for r in infeasible),
                                  key=lambda c: (c.scenario, c.coeffs, c.constant))
            else:
                value = float(np.dot(probs, [r.value for r in results])
                              - np.dot(instance.holding, x_bar))
                if value > state.lb:
                    state.lb = value
                    state.incumbent_x = x_bar
                    best_sub = results
                agg = np.zeros((n_groups, instance.n))
                const = np.zeros(n_groups)
                for r in results:
                    g = group_of[r.scenario]
                    agg[g] += probs[r.scenario] * np.asarray(r.cut.coeffs)
                    const[g] += probs[r.scenario] * r.cut.constant
                new_cuts = [Cut(kind="optimality", coeffs=tuple(agg[g]),
                                constant=float(const[g]), scenario=None,
                                group=g)
                            for g in range(n_groups)]

            if math.isnan(state.tolerance):
                state.tolerance = (tolerance if tolerance is not None
                                   else 1e-6 * (1.0 + abs(mp.bound)))
            state.iterations = it
            state.cuts.extend(new_cuts)
            state.log.append(IterationRecord(it, state.lb, state.ub,
                                             len(new_cuts), master_time, sub_time))
            if state.ub - state.lb < state.tolerance:
                state.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if state.incumbent_x is None:
        raise InfeasibleModelError(
            "no feasible allocation found within the iteration limit")
    n = instance.n
    y = np.zeros((n_scen, n, n))
    f = np.zeros((n_scen, n))
    for r in best_sub:
        y[r.scenario] = r.y
        f[r.scenario] = r.f
    solution = Solution(x=state.incumbent_x, y=y, f=f, objective=state.lb)
    solution.validate(instance)
    return solution, state


def write_convergence_log(state: BendersState, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,LB,UB,cuts_added,master_time_s,sub_time_s\n")
        for rec in state.log:
            fh.write(f"{rec.iteration},{rec.lb:.17g},{rec.ub:.17g},"
                     f"{rec.cuts_added},{rec.master_time_s:.6f},{rec.sub_time_s:.6f}\n")


def read_convergence_log(path) -> list[IterationRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "iter,LB,UB,cuts_added,master_time_s,sub_time_s":
            raise ValueError(f"{path}: unexpected convergence header {header!r}")
        for ln in fh:
            if not ln.strip():
                continue
            it, lb, ub, cuts, mt, st = ln.strip().split(",")
            records.append(IterationRecord(int(it), float(lb), float(ub),
                                           int(cuts), float(mt), float(st)))
    return records
