"""Self-contained dense LP/MIP solving.

Two-phase primal simplex on a dense tableau (Dantzig pricing with an
automatic switch to Bland's rule under degeneracy, so termination is
guaranteed), plus best-first branch-and-bound for integer variables.
Returns optimal primal/dual pairs, primal rays for unbounded programs and
Farkas certificates (dual rays) for infeasible ones.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

LE = "<="
EQ = "="
GE = ">="
_SENSES = (LE, EQ, GE)

_PIVOT_TOL = 1e-9
_RATIO_TIE_TOL = 1e-10


class SolverError(RuntimeError):
    """Numeric failure or solver misuse; never a silently wrong answer."""


@dataclass(frozen=True)
class Tolerances:
    """Central numeric tolerances shared by the LP and MIP paths."""

    feasibility: float = 1e-7
    reduced_cost: float = 1e-9
    integrality: float = 1e-6
    refactor_every: int = 50
    stall_limit: int = 40
    max_pivots: int = 200_000


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class Row:
    indices: tuple[int, ...]
    coeffs: tuple[float, ...]
    sense: str
    rhs: float


class LinearProgram:
    """A max-form LP/MIP: bounded variables, sparse rows, integrality marks.

    Variables are added first (each with objective coefficient, bounds and
    an optional integrality flag), rows afterwards as sparse coefficient
    lists over declared variable indices.
    """

    def __init__(self):
        self.objective: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integer: list[bool] = []
        self.names: list[str] = []
        self.rows: list[Row] = []
        self.layout = None  # optional builder-attached variable map

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_var(self, objective=0.0, lower=0.0, upper=math.inf,
                integer=False, name=None) -> int:
        if math.isnan(objective) or math.isinf(objective):
            raise ValueError("objective coefficient must be finite")
        if lower > upper:
            raise ValueError(f"lower bound {lower} exceeds upper bound {upper}")
        idx = len(self.objective)
        self.objective.append(float(objective))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.integer.append(bool(integer))
        self.names.append(name if name is not None else f"v{idx}")
        return idx

    def add_row(self, coeffs, sense, rhs) -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        idx_list, coef_list = [], []
        for j, a in coeffs:
            if not 0 <= j < self.num_vars:
                raise ValueError(f"row references undeclared variable {j}")
            if math.isnan(a) or math.isinf(a):
                raise ValueError("row coefficient must be finite")
            if a != 0.0:
                idx_list.append(int(j))
                coef_list.append(float(a))
        if math.isnan(rhs) or math.isinf(rhs):
            raise ValueError("right-hand side must be finite")
        self.rows.append(Row(tuple(idx_list), tuple(coef_list), sense, float(rhs)))
        return len(self.rows) - 1

    def with_bounds(self, lower, upper) -> "LinearProgram":
        """Shallow copy sharing rows, with replaced bound arrays (for B&B)."""
        clone = LinearProgram.__new__(LinearProgram)
        clone.objective = self.objective
        clone.lower = list(lower)
        clone.upper = list(upper)
        clone.integer = self.integer
        clone.names = self.names
        clone.rows = self.rows
        clone.layout = self.layout
        return clone

    def to_text(self) -> str:
        """LP-format-like plain-text dump with stable ordering, for debugging."""
        def term(c, name):
            return f"{'-' if c < 0 else '+'} {abs(c):g} {name}"

        lines = ["maximize"]
        obj = " ".join(term(c, self.names[j])
                       for j, c in enumerate(self.objective) if c != 0.0)
        lines.append("  " + (obj.lstrip("+ ") if obj else "0"))
        lines.append("subject to")
        for i, row in enumerate(self.rows):
            lhs = " ".join(term(a, self.names[j])
                           for j, a in zip(row.indices, row.coeffs))
            lines.append(f"  r{i}: {lhs.lstrip('+ ') if lhs else '0'} {row.sense} {row.rhs:g}")
        lines.append("bounds")
        for j in range(self.num_vars):
            lines.append(f"  {self.lower[j]:g} <= {self.names[j]} <= {self.upper[j]:g}")
        ints = [self.names[j] for j in range(self.num_vars) if self.integer[j]]
        if ints:
            lines.append("integers")
            lines.append("  " + " ".join(ints))
        return "\n".join(lines) + "\n"


@dataclass
class LpOutcome:
    """Result of an LP solve.

    ``duals`` has one entry per program row and is populated when optimal.
    ``ray`` is an improving feasible direction when unbounded (``x`` then
    holds the feasible point it was found at).  ``farkas`` is the dual ray
    certifying infeasibility: per-row multipliers y with y'A >= 0
    componentwise and y'b < 0 (exact for programs without finite upper
    bounds or negative lower bounds, which is the shape every recourse
    program here has).
    """

    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    ray: np.ndarray | None = None
    farkas: np.ndarray | None = None
    pivots: int = 0


@dataclass
class MipOutcome:
    """``objective`` is the incumbent value; ``bound`` is the proven upper
    bound on the optimum (equal to within the gap when status is optimal)."""

    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    nodes: int = 0
    bound: float = math.nan


# --- standard-form assembly ------------------------------------------------

@dataclass
class _StandardForm:
    A: np.ndarray          # rows x structural columns
    b: np.ndarray
    senses: list[str]
    c: np.ndarray          # max-form objective over structural columns
    var_map: list[tuple]   # per original var: ("shift", col, l) | ("mirror", col, u) | ("split", p, n)
    n_rows_orig: int


def _standardize(program: LinearProgram) -> _StandardForm:
    n = program.num_vars
    var_map: list[tuple] = []
    col_of: list[int] = []
    n_cols = 0
    for j in range(n):
        l, u = program.lower[j], program.upper[j]
        if l == -math.inf and u == math.inf:
            var_map.append(("split", n_cols, n_cols + 1))
            col_of.append(n_cols)
            n_cols += 2
        elif l == -math.inf:
            var_map.append(("mirror", n_cols, u))
            col_of.append(n_cols)
            n_cols += 1
        else:
            var_map.append(("shift", n_cols, l))
            col_of.append(n_cols)
            n_cols += 1

    bound_rows = [j for j in range(n)
                  if program.lower[j] != -math.inf and program.upper[j] != math.inf]
    m = program.num_rows + len(bound_rows)
    A = np.zeros((m, n_cols))
    b = np.zeros(m)
    senses = []

    for i, row in enumerate(program.rows):
        rhs = row.rhs
        for j, a in zip(row.indices, row.coeffs):
            kind = var_map[j]
            if kind[0] == "shift":
                A[i, kind[1]] = a
                rhs -= a * kind[2]
            elif kind[0] == "mirror":
                A[i, kind[1]] = -a
                rhs -= a * kind[2]
            else:
                A[i, kind[1]] = a
                A[i, kind[2]] = -a
        b[i] = rhs
        senses.append(row.sense)

    for k, j in enumerate(bound_rows):
        i = program.num_rows + k
        kind = var_map[j]
        A[i, kind[1]] = 1.0
        b[i] = program.upper[j] - program.lower[j]
        senses.append(LE)

    c = np.zeros(n_cols)
    for j in range(n):
        kind = var_map[j]
        cj = program.objective[j]
        if kind[0] == "shift":
            c[kind[1]] = cj
        elif kind[0] == "mirror":
            c[kind[1]] = -cj
        else:
            c[kind[1]] = cj
            c[kind[2]] = -cj
    return _StandardForm(A, b, senses, c, var_map, program.num_rows)


def _map_point(var_map, w) -> np.ndarray:
    x = np.empty(len(var_map))
    for j, kind in enumerate(var_map):
        if kind[0] == "shift":
            x[j] = w[kind[1]] + kind[2]
        elif kind[0] == "mirror":
            x[j] = kind[2] - w[kind[1]]
        else:
            x[j] = w[kind[1]] - w[kind[2]]
    return x


def _map_direction(var_map, d) -> np.ndarray:
    x = np.empty(len(var_map))
    for j, kind in enumerate(var_map):
        if kind[0] == "shift":
            x[j] = d[kind[1]]
        elif kind[0] == "mirror":
            x[j] = -d[kind[1]]
        else:
            x[j] = d[kind[1]] - d[kind[2]]
    return x


# --- simplex core -----------------------------------------------------------

def _refactor(A, b, c, basis, tols):
    """Rebuild the full tableau [B^-1 A | B^-1 b; rc | -z] from scratch."""
    m, ncols = A.shape
    if m == 0:
        T = np.empty((1, ncols + 1))
        T[0, :ncols] = c
        T[0, ncols] = 0.0
        return T
    B = A[:, basis]
    try:
        body = np.linalg.solve(B, np.column_stack([A, b]))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular basis during refactorization: {exc}") from exc
    resid = np.abs(B @ body[:, ncols] - b).max() if m else 0.0
    if not np.isfinite(body).all() or resid > 1e-6 * (1.0 + np.abs(b).max()):
        raise SolverError("numerically singular basis after refactorization")
    cb = c[basis]
    T = np.empty((m + 1, ncols + 1))
    T[:m] = body
    T[m, :ncols] = c - cb @ body[:, :ncols]
    T[m, ncols] = -(cb @ body[:, ncols])
    # Hygiene: snap slightly negative basics introduced by roundoff.
    rhs = T[:m, ncols]
    rhs[(rhs < 0) & (rhs > -tols.feasibility)] = 0.0
    return T


def _run_simplex(A, b, c, basis, allowed, tols, retire_mask=None,
                 log_pivots=False):
    """Minimize c'w over {Aw = b, w >= 0} from a starting basis.

    Returns (status, entering_col_or_None, tableau, pivot_count); status is
    "optimal" or "unbounded".  ``allowed`` masks columns eligible to enter;
    columns in ``retire_mask`` are permanently disallowed once they leave
    the basis (used to keep artificials from re-entering).
    """
    m, ncols = A.shape
    T = _refactor(A, b, c, basis, tols)
    pivots = 0
    since_refactor = 0
    degenerate_run = 0
    bland = False
    while True:
        rc = T[m, :ncols]
        cand = allowed & (rc < -tols.reduced_cost)
        if not cand.any():
            return "optimal", None, T, pivots
        if bland:
            q = int(np.flatnonzero(cand)[0])
        else:
            masked = np.where(cand, rc, np.inf)
            q = int(np.argmin(masked))
        col = T[:m, q]
        pos = col > _PIVOT_TOL
        if not pos.any():
            return "unbounded", q, T, pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, ncols][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _RATIO_TIE_TOL)
        r = int(min(ties, key=lambda i: basis[i]))

        z_before = -T[m, ncols]
        piv = T[r, q]
        T[r] /= piv
        colvals = T[:, q].copy()
        colvals[r] = 0.0
        T -= np.outer(colvals, T[r])
        T[:, q] = 0.0
        T[r, q] = 1.0
        leaving = basis[r]
        basis[r] = q
        if retire_mask is not None and retire_mask[leaving]:
            allowed[leaving] = False
        if log_pivots:
            log.debug("pivot %d: col %d enters, col %d leaves row %d, obj %.12g%s",
                      pivots + 1, q, leaving, r, -T[m, ncols],
                      " [bland]" if bland else "")

        pivots += 1
        since_refactor += 1
        if pivots > tols.max_pivots:
            raise SolverError("pivot limit exceeded")
        z_after = -T[m, ncols]
        if z_before - z_after > 1e-12 * (1.0 + abs(z_before)):
            degenerate_run = 0
            bland = False
        else:
            degenerate_run += 1
            if degenerate_run >= tols.stall_limit:
                bland = True
        if since_refactor >= tols.refactor_every:
            T = _refactor(A, b, c, basis, tols)
            since_refactor = 0


def _duals_from_basis(A, c, basis) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0)
    B = A[:, basis]
    try:
        return np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular basis while extracting duals: {exc}") from exc


def solve_lp(program: LinearProgram, tols: Tolerances = DEFAULT_TOLERANCES,
             verbose: bool = False) -> LpOutcome:
    """Solve the LP relaxation of ``program`` (integrality flags ignored)."""
    if program.num_vars < 1:
        raise ValueError("program has no variables")
    std = _standardize(program)
    A0, b0, senses = std.A, std.b.copy(), list(std.senses)
    m = A0.shape[0]
    n_struct = A0.shape[1]

    # Orient every row to nonnegative rhs; remember flips for dual mapping.
    sign = np.ones(m)
    for i in range(m):
        if b0[i] < 0:
            sign[i] = -1.0
            A0[i] *= -1.0
            b0[i] = -b0[i]
            if senses[i] == LE:
                senses[i] = GE
            elif senses[i] == GE:
                senses[i] = LE

    slack_col = {}
    art_col = {}
    extra = []
    for i, s in enumerate(senses):
        if s == LE:
            slack_col[i] = n_struct + len(extra)
            extra.append((i, 1.0, False))
        elif s == GE:
            slack_col[i] = n_struct + len(extra)
            extra.append((i, -1.0, False))
            art_col[i] = n_struct + len(extra)
            extra.append((i, 1.0, True))
        else:
            art_col[i] = n_struct + len(extra)
            extra.append((i, 1.0, True))

    n_total = n_struct + len(extra)
    A = np.zeros((m, n_total))
    A[:, :n_struct] = A0
    art_mask = np.zeros(n_total, dtype=bool)
    for k, (i, coef, is_art) in enumerate(extra):
        A[i, n_struct + k] = coef
        art_mask[n_struct + k] = is_art
    b = b0

    basis = [art_col.get(i, slack_col.get(i)) for i in range(m)]
    row_ids = list(range(m))
    total_pivots = 0

    c_min = np.zeros(n_total)
    c_min[:n_struct] = -std.c

    def emit_duals(y_internal):
        """Map internal equality-system duals to original-row max-form duals."""
        out = np.zeros(std.n_rows_orig)
        for pos, rid in enumerate(row_ids):
            if rid < std.n_rows_orig:
                out[rid] = -sign[rid] * y_internal[pos]
        return out

    if art_mask.any():
        c1 = art_mask.astype(float)
        allowed = np.ones(n_total, dtype=bool)
        status, _, T, p1 = _run_simplex(A, b, c1, basis, allowed, tols,
                                        retire_mask=art_mask,
                                        log_pivots=verbose)
        total_pivots += p1
        if status != "optimal":
            raise SolverError("phase 1 reported unbounded; program is malformed")
        z1 = -T[m, n_total]
        if z1 > tols.feasibility * (1.0 + np.abs(b).max()):
            y1 = _duals_from_basis(A, c1, basis)
            farkas = emit_duals(y1)
            if verbose:
                log.debug("infeasible after %d pivots, phase-1 residual %g", p1, z1)
            return LpOutcome(status="infeasible", farkas=farkas, pivots=total_pivots)

        # Drive remaining artificials out of the basis; drop redundant rows.
        drop = []
        for r in range(m):
            if not art_mask[basis[r]]:
                continue
            pivot_col = None
            for q in range(n_total):
                if not art_mask[q] and abs(T[r, q]) > _PIVOT_TOL:
                    pivot_col = q
                    break
            if pivot_col is None:
                drop.append(r)
                continue
            piv = T[r, pivot_col]
            T[r] /= piv
            colvals = T[:, pivot_col].copy()
            colvals[r] = 0.0
            T -= np.outer(colvals, T[r])
            T[:, pivot_col] = 0.0
            T[r, pivot_col] = 1.0
            basis[r] = pivot_col
        if drop:
            keep = [i for i in range(m) if i not in set(drop)]
            A = A[keep]
            b = b[keep]
            basis = [basis[i] for i in keep]
            row_ids = [row_ids[i] for i in keep]
            m = len(keep)

    allowed = ~art_mask
    status, enter_q, T, p2 = _run_simplex(A, b, c_min, basis, allowed, tols,
                                          log_pivots=verbose)
    total_pivots += p2
    if verbose:
        log.debug("phase 2 finished %s after %d pivots; basis=%s",
                  status, p2, basis)

    w = np.zeros(n_total)
    for r in range(m):
        w[basis[r]] = T[r, A.shape[1]]
    x = _map_point(std.var_map, w)

    if status == "unbounded":
        d = np.zeros(n_total)
        d[enter_q] = 1.0
        for r in range(m):
            d[basis[r]] = -T[r, enter_q]
        ray = _map_direction(std.var_map, d)
        return LpOutcome(status="unbounded", x=x, objective=math.inf,
                         ray=ray, pivots=total_pivots)

    y2 = _duals_from_basis(A, c_min, basis)
    duals = emit_duals(y2)
    objective = float(np.dot(program.objective, x))
    return LpOutcome(status="optimal", x=x, objective=objective,
                     duals=duals, pivots=total_pivots)


# --- branch and bound --------------------------------------------------------

def solve_mip(program: LinearProgram, tols: Tolerances = DEFAULT_TOLERANCES,
              node_limit: int = 200_000, gap: float = 0.0,
              on_limit: str = "raise") -> MipOutcome:
    """Best-first branch-and-bound on the integer-flagged variables.

    Branches on the most fractional flagged variable (ties to the lowest
    index); bound ties pop newest-first so symmetric plateaus are plunged
    rather than swept.  Optimality is proven to absolute gap
    ``max(tols.integrality, gap)``; the returned ``bound`` stays valid for
    any gap.  Hitting ``node_limit`` raises by default; with
    ``on_limit="bound"`` it returns the incumbent and the proven bound
    with status "node_limit" instead.
    """
    int_idx = [j for j in range(program.num_vars) if program.integer[j]]
    root = solve_lp(program, tols)
    if root.status == "infeasible":
        return MipOutcome(status="infeasible", nodes=1, bound=-math.inf)
    if root.status == "unbounded":
        raise SolverError("LP relaxation is unbounded; MIP outcome undefined")
    if not int_idx:
        return MipOutcome(status="optimal", x=root.x, objective=root.objective,
                          nodes=1, bound=root.objective)
    eps = max(tols.integrality, gap)

    best_x = None
    best_obj = -math.inf
    pruned_bound = -math.inf
    counter = 0
    heap = []

    def push(bound, lower, upper):
        nonlocal counter, pruned_bound
        if bound <= best_obj + eps:
            pruned_bound = max(pruned_bound, bound)
            return
        counter += 1
        heapq.heappush(heap, (-bound, -counter, lower, upper))

    def fractional(x):
        fracs = [(abs(x[j] - round(x[j])), j) for j in int_idx]
        worst, j = max(fracs, key=lambda t: (t[0], -t[1]))
        return (None if worst <= tols.integrality else j)

    def offer(x, objective):
        nonlocal best_x, best_obj
        if objective > best_obj:
            best_obj = objective
            best_x = x

    def consider(outcome, lower, upper):
        j = fractional(outcome.x)
        if j is None:
            offer(outcome.x, outcome.objective)
            return
        push(outcome.objective, lower, upper)

    def clamp(j, v):
        if program.lower[j] != -math.inf:
            v = max(v, math.ceil(program.lower[j] - tols.integrality))
        if program.upper[j] != math.inf:
            v = min(v, math.floor(program.upper[j] + tols.integrality))
        return v

    nodes = 1
    if fractional(root.x) is not None:
        # Rounding dive: repeatedly fix the most fractional integer
        # variable at its nearest feasible integer and re-solve, so the
        # incumbent keeps the mass a one-shot floor would drop.  A good
        # incumbent up front prunes plateau-heavy trees.  Bounded by
        # construction (at most two LPs per integer variable), so it runs
        # outside the tree-search node budget.
        dive_lower = list(program.lower)
        dive_upper = list(program.upper)
        current = root
        while True:
            j = fractional(current.x)
            if j is None:
                offer(current.x, current.objective)
                break
            tried = None
            for v in (clamp(j, round(current.x[j])),
                      clamp(j, math.floor(current.x[j] + tols.integrality))):
                if v == tried or v < dive_lower[j] or v > dive_upper[j]:
                    continue
                tried = v
                lo, up = list(dive_lower), list(dive_upper)
                lo[j] = up[j] = v
                attempt = solve_lp(program.with_bounds(lo, up), tols)
                nodes += 1
                if attempt.status == "optimal":
                    dive_lower, dive_upper = lo, up
                    current = attempt
                    break
            else:
                break

    consider(root, list(program.lower), list(program.upper))
    status = "optimal"
    while heap:
        neg_bound, _, lower, upper = heapq.heappop(heap)
        if -neg_bound <= best_obj + eps:
            pruned_bound = max(pruned_bound, -neg_bound)
            break
        if nodes >= node_limit:
            if on_limit == "raise":
                raise SolverError(f"branch-and-bound node limit {node_limit} exceeded")
            pruned_bound = max(pruned_bound, -neg_bound)
            status = "node_limit"
            break
        sub = solve_lp(program.with_bounds(lower, upper), tols)
        nodes += 1
        if sub.status == "infeasible":
            continue
        if sub.status == "unbounded":
            raise SolverError("unbounded node in branch-and-bound")
        if sub.objective <= best_obj + eps:
            pruned_bound = max(pruned_bound, sub.objective)
            continue
        j = fractional(sub.x)
        if j is None:
            offer(sub.x, sub.objective)
            continue
        down_upper = list(upper)
        down_upper[j] = math.floor(sub.x[j])
        if lower[j] <= down_upper[j]:
            lo = list(lower)
            push(sub.objective, lo, down_upper)
        up_lower = list(lower)
        up_lower[j] = math.ceil(sub.x[j])
        if up_lower[j] <= upper[j]:
            up = list(upper)
            push(sub.objective, up_lower, up)

    if best_x is None:
        if status == "node_limit":
            raise SolverError(
                f"node limit {node_limit} hit with no incumbent found")
        return MipOutcome(status="infeasible", nodes=nodes, bound=-math.inf)
    return MipOutcome(status=status, x=best_x, objective=best_obj, nodes=nodes,
                      bound=max(best_obj, pruned_bound))
