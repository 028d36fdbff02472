"""Fleet-allocation model building.

Holds problem instances and turns them into generic LP/MIP structures:
the single-period deterministic allocation model, the scenario-weighted
extensive form of the two-stage program, and the per-scenario recourse
program used both for evaluating fixed first-stage decisions and for
decomposition cuts.

Two availability readings are supported.  ``as_written`` lets outbound
flow raise availability at the origin (f_i <= x_i + sum_j y_ij), which
inflates serviceable demand; ``flow_corrected`` uses physical conservation
(f_i <= x_i + inflow_i - outflow_i).  Self-relocations y_ii are fixed to
zero in both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lpcore import LE, EQ, LinearProgram, solve_lp, Tolerances, DEFAULT_TOLERANCES

AS_WRITTEN = "as_written"
FLOW_CORRECTED = "flow_corrected"
VARIANTS = (AS_WRITTEN, FLOW_CORRECTED)


class ModelError(ValueError):
    """Ill-formed instance, scenario set or first-stage decision."""


class InfeasibleModelError(ModelError):
    """The model admits no feasible solution (full-service demand unreachable)."""


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class Instance:
    """Locations with per-car revenue, holding cost, transfer cost and fleet cap."""

    locations: tuple[int, ...]
    revenue: np.ndarray
    holding: np.ndarray
    transfer: np.ndarray
    capacity: int

    def __post_init__(self):
        r = np.asarray(self.revenue, dtype=float)
        h = np.asarray(self.holding, dtype=float)
        t = np.asarray(self.transfer, dtype=float)
        object.__setattr__(self, "locations", tuple(int(v) for v in self.locations))
        object.__setattr__(self, "revenue", r)
        object.__setattr__(self, "holding", h)
        object.__setattr__(self, "transfer", t)
        n = len(self.locations)
        if n == 0:
            raise ModelError("instance needs at least one location")
        if r.shape != (n,) or h.shape != (n,):
            raise ModelError("revenue/holding must have one entry per location")
        if t.shape != (n, n):
            raise ModelError(f"transfer matrix must be {n}x{n}, got {t.shape}")
        if (r < 0).any() or (h < 0).any() or (t < 0).any():
            raise ModelError("costs and revenues must be nonnegative")
        if np.abs(np.diag(t)).max(initial=0.0) > 0:
            raise ModelError("transfer cost t_ii must be zero on the diagonal")
        if self.capacity < 0:
            raise ModelError("capacity must be nonnegative")
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def n(self) -> int:
        return len(self.locations)


@dataclass(frozen=True)
class ModelLayout:
    """Variable indices of a built program: x per location, y/f per scenario."""

    n_locations: int
    n_scenarios: int
    x: tuple[int, ...]
    y: tuple            # [s][i][j] -> var index or None (diagonal)
    f: tuple            # [s][i] -> var index


@dataclass
class Solution:
    """First-stage allocation with per-scenario flows and served demand."""

    x: np.ndarray
    y: np.ndarray          # (S, R, R), diagonal zero
    f: np.ndarray          # (S, R)
    objective: float

    def validate(self, instance: Instance, tol: float = 1e-6):
        if self.x.sum() > instance.capacity + tol:
            raise ModelError("solution exceeds fleet capacity")
        if (self.f < -tol).any() or (self.x < -tol).any() or (self.y < -tol).any():
            raise ModelError("solution has negative components")
        if np.abs(np.einsum("sii->si", self.y)).max(initial=0.0) > tol:
            raise ModelError("self-relocations must be zero")
        outflow = self.y.sum(axis=2)
        if (outflow - self.x[None, :] > tol).any():
            raise ModelError("outflow exceeds allocation at some location")


def first_stage_caps(instance: Instance, demands, variant: str) -> np.ndarray:
    """Valid per-location upper bounds on useful first-stage allocations.

    Under ``as_written`` outbound flow inflates only the origin's own
    availability, so cars beyond a location's maximum scenario demand are
    pure holding cost; under ``flow_corrected`` cars can be shipped
    anywhere, so the cap is the maximum total demand.  Some optimum always
    lies inside the box, which keeps branch-and-bound trees small without
    cutting off the optimal value.
    """
    d = np.atleast_2d(np.asarray(demands, dtype=float))
    cap = float(instance.capacity)
    if variant == AS_WRITTEN:
        caps = np.minimum(d.max(axis=0), cap)
    else:
        caps = np.full(instance.n, min(float(d.sum(axis=1).max()), cap))
    return caps


def _availability_coeffs(i, n, x_idx, y_idx, variant):
    """Sparse coefficients of: f_i - availability_i(x, y) <= 0-ish row, minus rhs."""
    coeffs = [(x_idx[i], -1.0)]
    if variant == AS_WRITTEN:
        for j in range(n):
            if j != i and y_idx[i][j] is not None:
                coeffs.append((y_idx[i][j], -1.0))
    else:
        for j in range(n):
            if j == i:
                continue
            if y_idx[j][i] is not None:
                coeffs.append((y_idx[j][i], -1.0))
            if y_idx[i][j] is not None:
                coeffs.append((y_idx[i][j], 1.0))
    return coeffs


def _add_scenario_block(lp, instance, x_idx, weight, demand, integer_y,
                        variant, require_full_service, tag):
    """Add one scenario's y/f variables and rows; returns (y_idx, f_idx)."""
    n = instance.n
    t = instance.transfer
    y_idx = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            y_idx[i][j] = lp.add_var(objective=-weight * t[i, j],
                                     integer=integer_y,
                                     name=f"y[{tag}][{instance.locations[i]}->{instance.locations[j]}]")
    f_idx = [lp.add_var(objective=weight * instance.revenue[i],
                        name=f"f[{tag}][{instance.locations[i]}]")
             for i in range(n)]
    for i in range(n):
        coeffs = [(f_idx[i], 1.0)] + _availability_coeffs(i, n, x_idx, y_idx, variant)
        lp.add_row(coeffs, LE, 0.0)
    for i in range(n):
        lp.add_row([(f_idx[i], 1.0)], EQ if require_full_service else LE,
                   float(demand[i]))
    for i in range(n):
        coeffs = [(y_idx[i][j], 1.0) for j in range(n) if j != i]
        coeffs.append((x_idx[i], -1.0))
        lp.add_row(coeffs, LE, 0.0)
    return y_idx, f_idx


def build_deterministic(instance: Instance, d_avg, variant: str = AS_WRITTEN,
                        require_full_service: bool = False) -> LinearProgram:
    """Single-period allocation model over average demands.

    Variables: integer x_i and y_ij, continuous served demand f_i.
    Objective: sum r_i f_i - sum h_i x_i - sum t_ij y_ij.
    """
    _check_variant(variant)
    d = np.asarray(d_avg, dtype=float)
    if d.shape != (instance.n,):
        raise ModelError("d_avg must have one entry per location")
    if (d < 0).any():
        raise ModelError("average demands must be nonnegative")
    caps = first_stage_caps(instance, d, variant)
    lp = LinearProgram()
    x_idx = [lp.add_var(objective=-instance.holding[i], integer=True,
                        upper=caps[i], name=f"x[{instance.locations[i]}]")
             for i in range(instance.n)]
    y_idx, f_idx = _add_scenario_block(lp, instance, x_idx, 1.0, d,
                                       integer_y=True, variant=variant,
                                       require_full_service=require_full_service,
                                       tag="avg")
    lp.add_row([(x_idx[i], 1.0) for i in range(instance.n)], LE,
               float(instance.capacity))
    lp.layout = ModelLayout(instance.n, 1, tuple(x_idx),
                            (tuple(tuple(r) for r in y_idx),),
                            (tuple(f_idx),))
    return lp


def build_extensive(instance: Instance, scenarios, variant: str = AS_WRITTEN,
                    require_full_service: bool = False) -> LinearProgram:
    """Scenario-weighted extensive form of the two-stage program.

    x is integer; per-scenario y and f are continuous (the recourse is
    solved as an LP throughout, so the extensive form is relaxed the same
    way).  Holding cost is charged once on x, outside the scenario sum.
    """
    _check_variant(variant)
    if tuple(scenarios.locations) != instance.locations:
        raise ModelError("scenario locations do not match the instance")
    caps = first_stage_caps(instance, scenarios.demands, variant)
    lp = LinearProgram()
    x_idx = [lp.add_var(objective=-instance.holding[i], integer=True,
                        upper=caps[i], name=f"x[{instance.locations[i]}]")
             for i in range(instance.n)]
    all_y, all_f = [], []
    for s in range(scenarios.n_scenarios):
        y_idx, f_idx = _add_scenario_block(
            lp, instance, x_idx, float(scenarios.probabilities[s]),
            scenarios.demands[s], integer_y=False, variant=variant,
            require_full_service=require_full_service, tag=f"s{s}")
        all_y.append(tuple(tuple(r) for r in y_idx))
        all_f.append(tuple(f_idx))
    lp.add_row([(x_idx[i], 1.0) for i in range(instance.n)], LE,
               float(instance.capacity))
    lp.layout = ModelLayout(instance.n, scenarios.n_scenarios,
                            tuple(x_idx), tuple(all_y), tuple(all_f))
    return lp


def extract_solution(program: LinearProgram, primal, objective,
                     instance: Instance | None = None) -> Solution:
    """Read a Solution out of a primal vector using the program's layout."""
    lay: ModelLayout = program.layout
    if lay is None:
        raise ModelError("program has no layout; was it built here?")
    x = np.rint(np.asarray([primal[j] for j in lay.x]))
    y = np.zeros((lay.n_scenarios, lay.n_locations, lay.n_locations))
    f = np.zeros((lay.n_scenarios, lay.n_locations))
    for s in range(lay.n_scenarios):
        for i in range(lay.n_locations):
            f[s, i] = primal[lay.f[s][i]]
            for j in range(lay.n_locations):
                idx = lay.y[s][i][j]
                if idx is not None:
                    y[s, i, j] = primal[idx]
    sol = Solution(x=x, y=y, f=f, objective=float(objective))
    if instance is not None:
        sol.validate(instance)
    return sol


# --- recourse program for a fixed first stage -------------------------------

@dataclass(frozen=True)
class RecourseProgram:
    """One scenario's recourse LP with the rhs decomposed as R x + rho.

    ``rhs_x`` maps first-stage allocations to row right-hand sides and
    ``rhs_const`` carries the demand-driven constants, so dual vectors can
    be turned into cuts affine in x.
    """

    program: LinearProgram
    rhs_x: np.ndarray          # (rows, R)
    rhs_const: np.ndarray      # (rows,)
    y_idx: tuple
    f_idx: tuple


def build_recourse(instance: Instance, demand, x_fixed, variant: str = AS_WRITTEN,
                   require_full_service: bool = False) -> RecourseProgram:
    """Recourse LP for one scenario: maximize r'f - t.y given allocation x."""
    _check_variant(variant)
    n = instance.n
    d = np.asarray(demand, dtype=float)
    x = np.asarray(x_fixed, dtype=float)
    lp = LinearProgram()
    y_idx = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j:
                y_idx[i][j] = lp.add_var(objective=-instance.transfer[i, j],
                                         name=f"y[{instance.locations[i]}->{instance.locations[j]}]")
    f_idx = [lp.add_var(objective=instance.revenue[i],
                        name=f"f[{instance.locations[i]}]") for i in range(n)]

    rows_x = []
    rows_const = []
    for i in range(n):
        coeffs = [(f_idx[i], 1.0)]
        if variant == AS_WRITTEN:
            coeffs += [(y_idx[i][j], -1.0) for j in range(n) if j != i]
        else:
            for j in range(n):
                if j == i:
                    continue
                coeffs.append((y_idx[j][i], -1.0))
                coeffs.append((y_idx[i][j], 1.0))
        lp.add_row(coeffs, LE, float(x[i]))
        e = np.zeros(n)
        e[i] = 1.0
        rows_x.append(e)
        rows_const.append(0.0)
    for i in range(n):
        lp.add_row([(f_idx[i], 1.0)], EQ if require_full_service else LE, float(d[i]))
        rows_x.append(np.zeros(n))
        rows_const.append(float(d[i]))
    for i in range(n):
        # Empty when |R| = 1: kept as a vacuous 0 <= x_i row so the row
        # indexing stays aligned with rhs_x / rhs_const.
        coeffs = [(y_idx[i][j], 1.0) for j in range(n) if j != i]
        lp.add_row(coeffs, LE, float(x[i]))
        e = np.zeros(n)
        e[i] = 1.0
        rows_x.append(e)
        rows_const.append(0.0)
    return RecourseProgram(program=lp, rhs_x=np.array(rows_x),
                           rhs_const=np.array(rows_const),
                           y_idx=tuple(tuple(r) for r in y_idx),
                           f_idx=tuple(f_idx))


def check_first_stage(instance: Instance, x_fixed, tol: float = 1e-6) -> np.ndarray:
    x = np.asarray(x_fixed, dtype=float)
    if x.shape != (instance.n,):
        raise ModelError("x must have one entry per location")
    if (x < -tol).any():
        raise ModelError("first-stage allocation must be nonnegative")
    if np.abs(x - np.rint(x)).max(initial=0.0) > tol:
        raise ModelError("first-stage allocation must be integral")
    if x.sum() > instance.capacity + tol:
        raise ModelError(f"allocation {x.sum():g} exceeds capacity {instance.capacity}")
    return np.rint(x)


@dataclass
class FirstStageEvaluation:
    expected_profit: float
    recourse_values: np.ndarray     # per scenario, before holding cost
    holding_cost: float
    probabilities: np.ndarray


def evaluate_first_stage(instance: Instance, x_fixed, scenarios,
                         variant: str = AS_WRITTEN,
                         require_full_service: bool = False,
                         tols: Tolerances = DEFAULT_TOLERANCES) -> FirstStageEvaluation:
    """Fix x, solve every scenario's recourse LP, and average with p^s."""
    _check_variant(variant)
    if tuple(scenarios.locations) != instance.locations:
        raise ModelError("scenario locations do not match the instance")
    x = check_first_stage(instance, x_fixed)
    values = np.zeros(scenarios.n_scenarios)
    for s in range(scenarios.n_scenarios):
        rec = build_recourse(instance, scenarios.demands[s], x, variant,
                             require_full_service)
        out = solve_lp(rec.program, tols)
        if out.status == "infeasible":
            raise InfeasibleModelError(
                f"recourse infeasible in scenario {s} for the given allocation")
        if out.status != "optimal":
            raise ModelError(f"recourse LP ended with status {out.status}")
        values[s] = out.objective
    holding = float(np.dot(instance.holding, x))
    expected = float(np.dot(scenarios.probabilities, values) - holding)
    return FirstStageEvaluation(expected_profit=expected, recourse_values=values,
                                holding_cost=holding,
                                probabilities=np.asarray(scenarios.probabilities))


# --- instance file round-trip -------------------------------------------------

def write_instance(instance: Instance, path):
    """CSV with a capacity comment line and one row per location."""
    ids = instance.locations
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# capacity = {instance.capacity}\n")
        fh.write("location,revenue,holding," +
                 ",".join(f"t_{j}" for j in ids) + "\n")
        for i, loc in enumerate(ids):
            t_row = ",".join(f"{instance.transfer[i, j]:.10g}"
                             for j in range(instance.n))
            fh.write(f"{loc},{instance.revenue[i]:.10g},"
                     f"{instance.holding[i]:.10g},{t_row}\n")


def read_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    capacity = None
    header_at = 0
    for k, ln in enumerate(lines):
        if ln.startswith("#"):
            text = ln.lstrip("#").strip()
            if text.startswith("capacity"):
                capacity = int(float(text.split("=", 1)[1]))
        else:
            header_at = k
            break
    if capacity is None:
        raise ModelError(f"{path}: missing '# capacity = ...' line")
    header = lines[header_at].split(",")
    if header[:3] != ["location", "revenue", "holding"]:
        raise ModelError(f"{path}: unexpected instance header {header[:3]}")
    locs, rev, hold, rows = [], [], [], []
    for ln in lines[header_at + 1:]:
        parts = ln.split(",")
        locs.append(int(parts[0]))
        rev.append(float(parts[1]))
        hold.append(float(parts[2]))
        rows.append([float(v) for v in parts[3:]])
    t = np.array(rows)
    return Instance(locations=tuple(locs), revenue=np.array(rev),
                    holding=np.array(hold), transfer=t, capacity=capacity)
