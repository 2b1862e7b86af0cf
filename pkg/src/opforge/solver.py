"""Desk-scale exact MILP solver: two-phase primal simplex plus branch & bound.

The simplex works on a dense tableau and pivots with Bland's rule, which
cannot cycle; instances here are tiny, so simplicity wins over sparse
machinery. Integer and binary columns are handled by depth-first branch and
bound with best-incumbent pruning.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .formula import Relation
from .instantiate import ConcreteModel
from .schema import Sense, VarType

PIVOT_TOL = 1e-9
FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6

DEFAULT_MAX_PIVOTS = 10_000
DEFAULT_MAX_NODES = 100_000


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    objective_value: float | None = None
    assignment: dict[int, float] | None = None


_FLIP = {Relation.LE: Relation.GE, Relation.GE: Relation.LE, Relation.EQ: Relation.EQ}


class _Simplex:
    """One tableau for one LP: maximize c'x subject to rows, x >= 0."""

    def __init__(
        self,
        n: int,
        objective: list[float],
        rows: list[tuple[list[float], Relation, float]],
        max_pivots: int,
    ) -> None:
        self.n = n
        self.objective = objective
        self.max_pivots = max_pivots
        self.pivots = 0

        normalized = []
        for coeffs, relation, rhs in rows:
            if rhs < 0:
                coeffs = [-a for a in coeffs]
                rhs = -rhs
                relation = _FLIP[relation]
            normalized.append((coeffs, relation, rhs))

        m = len(normalized)
        ncols = n
        slack_col = {}
        for i, (_, relation, _) in enumerate(normalized):
            if relation is not Relation.EQ:
                slack_col[i] = ncols
                ncols += 1
        art_col = {}
        for i, (_, relation, _) in enumerate(normalized):
            if relation is not Relation.LE:
                art_col[i] = ncols
                ncols += 1

        self.m = m
        self.ncols = ncols
        self.artificials = frozenset(art_col.values())
        self.tableau = [[0.0] * (ncols + 1) for _ in range(m)]
        self.basis = [0] * m
        for i, (coeffs, relation, rhs) in enumerate(normalized):
            row = self.tableau[i]
            for j, a in enumerate(coeffs):
                row[j] = a
            if relation is Relation.LE:
                row[slack_col[i]] = 1.0
                self.basis[i] = slack_col[i]
            elif relation is Relation.GE:
                row[slack_col[i]] = -1.0
                row[art_col[i]] = 1.0
                self.basis[i] = art_col[i]
            else:
                row[art_col[i]] = 1.0
                self.basis[i] = art_col[i]
            row[ncols] = rhs

    def _pivot(self, row: int, col: int) -> None:
        tableau = self.tableau
        pivot_row = tableau[row]
        pivot = pivot_row[col]
        inv = 1.0 / pivot
        for j in range(self.ncols + 1):
            pivot_row[j] *= inv
        for i in range(self.m):
            if i == row:
                continue
            factor = tableau[i][col]
            if factor != 0.0:
                target = tableau[i]
                for j in range(self.ncols + 1):
                    target[j] -= factor * pivot_row[j]
        self.basis[row] = col

    def _optimize(self, costs: list[float], banned: frozenset[int]) -> str:
        ncols, m = self.ncols, self.m
        tableau, basis = self.tableau, self.basis
        zrow = [0.0] * (ncols + 1)
        for j in range(ncols + 1):
            total = 0.0
            for i in range(m):
                cb = costs[basis[i]]
                if cb != 0.0:
                    total += cb * tableau[i][j]
            zrow[j] = total - (costs[j] if j < ncols else 0.0)

        while True:
            enter = -1
            for j in range(ncols):  # Bland: smallest improving index
                if j in banned:
                    continue
                if zrow[j] < -PIVOT_TOL:
                    enter = j
                    break
            if enter < 0:
                return "optimal"

            leave = -1
            best_ratio = math.inf
            for i in range(m):
                a = tableau[i][enter]
                if a > PIVOT_TOL:
                    ratio = tableau[i][ncols] / a
                    if ratio < best_ratio - PIVOT_TOL or (
                        abs(ratio - best_ratio) <= PIVOT_TOL
                        and (leave < 0 or basis[i] < basis[leave])
                    ):
                        best_ratio = ratio
                        leave = i
            if leave < 0:
                return "unbounded"
            if self.pivots >= self.max_pivots:
                return "limit"
            self.pivots += 1
            self._pivot(leave, enter)
            factor = zrow[enter]
            if factor != 0.0:
                pivot_row = self.tableau[leave]
                for j in range(ncols + 1):
                    zrow[j] -= factor * pivot_row[j]

    def solve(self) -> tuple[str, list[float] | None, float | None]:
        if self.artificials:
            phase1 = [0.0] * self.ncols
            for j in self.artificials:
                phase1[j] = -1.0
            outcome = self._optimize(phase1, frozenset())
            if outcome == "limit":
                return "limit", None, None
            if outcome == "unbounded":
                raise RuntimeError("phase-1 objective cannot be unbounded")
            infeasibility = sum(
                self.tableau[i][self.ncols]
                for i in range(self.m)
                if self.basis[i] in self.artificials
            )
            if infeasibility > FEASIBILITY_TOL:
                return "infeasible", None, None
            # drive remaining artificials out of the basis where possible
            for i in range(self.m):
                if self.basis[i] in self.artificials:
                    for j in range(self.ncols):
                        if j not in self.artificials and abs(self.tableau[i][j]) > PIVOT_TOL:
                            self._pivot(i, j)
                            break

        costs = [0.0] * self.ncols
        for j, value in enumerate(self.objective):
            costs[j] = value
        outcome = self._optimize(costs, self.artificials)
        if outcome != "optimal":
            return outcome, None, None

        x = [0.0] * self.n
        for i in range(self.m):
            if self.basis[i] < self.n:
                x[self.basis[i]] = self.tableau[i][self.ncols]
        value = sum(c * v for c, v in zip(self.objective, x))
        return "optimal", x, value


def _build_rows(
    model: ConcreteModel,
    lower: list[float] | None,
    upper: list[float] | None,
) -> list[tuple[list[float], Relation, float]]:
    n = len(model.variables)
    rows = []
    for constraint in model.constraints:
        coeffs = [0.0] * n
        for col, coeff in constraint.lhs.coefficients.items():
            coeffs[col] = coeff
        rows.append((coeffs, constraint.relation, constraint.rhs - constraint.lhs.constant))
    for j in range(n):
        ub = upper[j] if upper is not None else math.inf
        lb = lower[j] if lower is not None else 0.0
        if math.isfinite(ub):
            unit = [0.0] * n
            unit[j] = 1.0
            rows.append((unit, Relation.LE, ub))
        if lb > 0.0:
            unit = [0.0] * n
            unit[j] = 1.0
            rows.append((unit, Relation.GE, lb))
    return rows


def _default_bounds(model: ConcreteModel) -> tuple[list[float], list[float]]:
    lower = [0.0] * len(model.variables)
    upper = [
        1.0 if v.vartype is VarType.BINARY else math.inf for v in model.variables
    ]
    return lower, upper


def _solve_relaxation(
    model: ConcreteModel,
    lower: list[float],
    upper: list[float],
    max_pivots: int,
) -> tuple[str, list[float] | None, float | None]:
    n = len(model.variables)
    sign = 1.0 if model.sense is Sense.MAX else -1.0
    objective = [0.0] * n
    for col, coeff in model.objective.coefficients.items():
        objective[col] = sign * coeff
    simplex = _Simplex(n, objective, _build_rows(model, lower, upper), max_pivots)
    outcome, x, value = simplex.solve()
    if outcome != "optimal":
        return outcome, None, None
    assert x is not None and value is not None
    return "optimal", x, sign * (value + sign * model.objective.constant)


_STATUS = {
    "infeasible": SolveStatus.INFEASIBLE,
    "unbounded": SolveStatus.UNBOUNDED,
    "limit": SolveStatus.ITERATION_LIMIT,
}


def solve_lp(model: ConcreteModel, max_pivots: int = DEFAULT_MAX_PIVOTS) -> SolveResult:
    """Solve the LP relaxation of a concrete model (integrality ignored)."""
    lower, upper = _default_bounds(model)
    outcome, x, value = _solve_relaxation(model, lower, upper, max_pivots)
    if outcome != "optimal":
        return SolveResult(_STATUS[outcome])
    assert x is not None and value is not None
    return SolveResult(SolveStatus.OPTIMAL, value, dict(enumerate(x)))


def solve_mip(
    model: ConcreteModel,
    max_pivots: int = DEFAULT_MAX_PIVOTS,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> SolveResult:
    """Solve a concrete model exactly, branching on fractional integer columns."""
    int_cols = [
        v.column_id
        for v in model.variables
        if v.vartype in (VarType.INTEGER, VarType.BINARY)
    ]
    if not int_cols:
        return solve_lp(model, max_pivots)

    sign = 1.0 if model.sense is Sense.MAX else -1.0
    lower, upper = _default_bounds(model)

    best_score = -math.inf
    best_x: list[float] | None = None
    nodes = 0
    stack = [(lower, upper)]
    while stack:
        node_lower, node_upper = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            return SolveResult(SolveStatus.ITERATION_LIMIT)
        outcome, x, value = _solve_relaxation(model, node_lower, node_upper, max_pivots)
        if outcome == "limit":
            return SolveResult(SolveStatus.ITERATION_LIMIT)
        if outcome == "unbounded":
            if nodes == 1:
                return SolveResult(SolveStatus.UNBOUNDED)
            raise RuntimeError("bounded subproblem reported unbounded")
        if outcome == "infeasible":
            continue
        assert x is not None and value is not None
        score = sign * value
        if score <= best_score + PIVOT_TOL:
            continue  # cannot beat the incumbent

        branch_col = -1
        branch_frac = INTEGRALITY_TOL
        for col in int_cols:
            frac = abs(x[col] - round(x[col]))
            if frac > branch_frac:
                branch_frac = frac
                branch_col = col
        if branch_col < 0:
            best_score = score
            best_x = x
            continue

        floor_value = math.floor(x[branch_col])
        down_upper = list(node_upper)
        down_upper[branch_col] = float(floor_value)
        up_lower = list(node_lower)
        up_lower[branch_col] = float(floor_value + 1)
        stack.append((node_lower, down_upper))
        stack.append((up_lower, node_upper))

    if best_x is None:
        return SolveResult(SolveStatus.INFEASIBLE)
    return SolveResult(SolveStatus.OPTIMAL, sign * best_score, dict(enumerate(best_x)))
