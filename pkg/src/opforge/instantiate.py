"""Expansion of a structured model into a concrete linear/integer program.

Two independent evaluation routes are provided on purpose: ``expand`` builds
sparse affine carriers for the solver, while ``evaluate_naive`` interprets the
abstract formulas directly so the expansion can be cross-checked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

from . import formula as fl
from .schema import ParamDef, Sense, StructuredModel, VarType


class ExpansionError(ValueError):
    """Base error for failures while expanding a model."""


class NonlinearTermError(ExpansionError):
    """A product or quotient involves more than one variable reference."""


class UnknownSymbolError(ExpansionError):
    """A reference does not resolve to a parameter or variable."""


class SubscriptArityMismatchError(ExpansionError):
    """A reference carries the wrong number of subscripts."""


class UnboundIndexError(ExpansionError):
    """A subscript is not bound by the domain or an enclosing sum."""


_CONCRETE_RELATIONS = {
    fl.Relation.LE: fl.Relation.LE,
    fl.Relation.LT: fl.Relation.LE,
    fl.Relation.GE: fl.Relation.GE,
    fl.Relation.GT: fl.Relation.GE,
    fl.Relation.EQ: fl.Relation.EQ,
}


@dataclass(frozen=True)
class VarInstance:
    def_name: str
    index_tuple: tuple[int, ...]
    vartype: VarType
    column_id: int

    @property
    def lp_name(self) -> str:
        if not self.index_tuple:
            return self.def_name
        return self.def_name + "_" + "_".join(str(i) for i in self.index_tuple)


@dataclass(frozen=True)
class LinearExpr:
    coefficients: Mapping[int, float]
    constant: float = 0.0

    def value(self, assignment: Mapping[int, float]) -> float:
        return self.constant + sum(
            coeff * assignment[col] for col, coeff in self.coefficients.items()
        )


@dataclass(frozen=True)
class ConcreteConstraint:
    name: str
    lhs: LinearExpr
    relation: fl.Relation
    rhs: float


@dataclass(frozen=True)
class ConcreteModel:
    variables: tuple[VarInstance, ...]
    sense: Sense
    objective: LinearExpr
    constraints: tuple[ConcreteConstraint, ...]
    warnings: tuple[str, ...] = ()

    def column_of(self, def_name: str, index_tuple: tuple[int, ...]) -> int:
        for v in self.variables:
            if v.def_name == def_name and v.index_tuple == index_tuple:
                return v.column_id
        raise KeyError((def_name, index_tuple))


# ---------------------------------------------------------------------------
# Shared index machinery


def _set_sizes(model: StructuredModel) -> dict[str, int]:
    return {s.name: s.size for s in model.sets}


def _domain_bindings(domain: str) -> fl.DomainSpec:
    return fl.parse_domain(domain)


def iter_index_tuples(model: StructuredModel, domain: str) -> Iterator[tuple[int, ...]]:
    """All index tuples of a domain string, lexicographic; ``()`` for scalars."""
    spec = _domain_bindings(domain)
    sizes = _set_sizes(model)
    ranges = []
    for binding in spec.bindings:
        if binding.set_name not in sizes:
            raise UnknownSymbolError(f"unknown set {binding.set_name!r} in domain {domain!r}")
        ranges.append(range(1, sizes[binding.set_name] + 1))
    return itertools.product(*ranges)


def iter_var_instances(model: StructuredModel) -> Iterator[tuple[str, tuple[int, ...], VarType]]:
    for vdef in model.variables:
        for index_tuple in iter_index_tuples(model, vdef.domain):
            yield vdef.name, index_tuple, vdef.vartype


def _param_value(param: ParamDef, subscript_values: tuple[int, ...], arity: int) -> float:
    if len(subscript_values) != arity:
        raise SubscriptArityMismatchError(
            f"parameter {param.name!r} takes {arity} subscripts,"
            f" got {len(subscript_values)}"
        )
    data: Any = param.data
    for value in subscript_values:
        if not isinstance(data, tuple) or not 1 <= value <= len(data):
            raise ExpansionError(
                f"index value {value} out of range for parameter {param.name!r}"
            )
        data = data[value - 1]
    if isinstance(data, tuple):
        raise ExpansionError(f"parameter {param.name!r} data is deeper than its domain")
    return float(data)


class _Symbols:
    """Name resolution shared by the affine and the naive evaluator."""

    def __init__(self, model: StructuredModel) -> None:
        self.model = model
        self.params = {p.name: (p, len(_domain_bindings(p.domain))) for p in model.parameters}
        self.vars = {v.name: (v, len(_domain_bindings(v.domain))) for v in model.variables}

    def resolve_subscripts(self, ref: fl.Ref, env: Mapping[str, int]) -> tuple[int, ...]:
        values = []
        for sub in ref.subscripts:
            if sub not in env:
                raise UnboundIndexError(
                    f"index {sub!r} in reference to {ref.name!r} is not bound"
                )
            values.append(env[sub])
        return tuple(values)

    def var_arity(self, name: str) -> int:
        return self.vars[name][1]


def constraint_instance_name(
    def_name: str, index_tuple: tuple[int, ...], segment: int, link: int
) -> str:
    parts = [def_name] + [str(i) for i in index_tuple] + [f"s{segment}", f"c{link}"]
    return "_".join(parts)


# ---------------------------------------------------------------------------
# Affine expansion


def _affine(
    node: fl.FormulaAst,
    env: dict[str, int],
    symbols: _Symbols,
    columns: Mapping[tuple[str, tuple[int, ...]], int],
    sizes: Mapping[str, int],
) -> tuple[dict[int, float], float]:
    if isinstance(node, fl.Number):
        return {}, node.value
    if isinstance(node, fl.Ref):
        if node.name in symbols.params:
            param, arity = symbols.params[node.name]
            values = symbols.resolve_subscripts(node, env)
            return {}, _param_value(param, values, arity)
        if node.name in symbols.vars:
            _, arity = symbols.vars[node.name]
            values = symbols.resolve_subscripts(node, env)
            if len(values) != arity:
                raise SubscriptArityMismatchError(
                    f"variable {node.name!r} takes {arity} subscripts, got {len(values)}"
                )
            key = (node.name, values)
            if key not in columns:
                raise ExpansionError(
                    f"index value {values} out of range for variable {node.name!r}"
                )
            return {columns[key]: 1.0}, 0.0
        raise UnknownSymbolError(f"unknown symbol {node.name!r}")
    if isinstance(node, fl.Add):
        lc, lk = _affine(node.left, env, symbols, columns, sizes)
        rc, rk = _affine(node.right, env, symbols, columns, sizes)
        out = dict(lc)
        for col, coeff in rc.items():
            out[col] = out.get(col, 0.0) + coeff
        return out, lk + rk
    if isinstance(node, fl.Sub):
        lc, lk = _affine(node.left, env, symbols, columns, sizes)
        rc, rk = _affine(node.right, env, symbols, columns, sizes)
        out = dict(lc)
        for col, coeff in rc.items():
            out[col] = out.get(col, 0.0) - coeff
        return out, lk - rk
    if isinstance(node, fl.Neg):
        coeffs, const = _affine(node.operand, env, symbols, columns, sizes)
        return {col: -coeff for col, coeff in coeffs.items()}, -const
    if isinstance(node, fl.Mul):
        lc, lk = _affine(node.left, env, symbols, columns, sizes)
        rc, rk = _affine(node.right, env, symbols, columns, sizes)
        if lc and rc:
            raise NonlinearTermError("product of two variable expressions is not linear")
        if lc:
            return {col: coeff * rk for col, coeff in lc.items()}, lk * rk
        return {col: coeff * lk for col, coeff in rc.items()}, lk * rk
    if isinstance(node, fl.Div):
        lc, lk = _affine(node.left, env, symbols, columns, sizes)
        rc, rk = _affine(node.right, env, symbols, columns, sizes)
        if rc:
            raise NonlinearTermError("division by a variable expression is not linear")
        if rk == 0.0:
            raise ExpansionError(
                f"division by zero at index {tuple(sorted(env.items()))!r}"
            )
        return {col: coeff / rk for col, coeff in lc.items()}, lk / rk
    if isinstance(node, fl.Sum):
        out: dict[int, float] = {}
        const = 0.0
        names = [b.set_name for b in node.bindings.bindings]
        for name in names:
            if name not in sizes:
                raise UnknownSymbolError(f"unknown set {name!r} in summation domain")
        for combo in itertools.product(*(range(1, sizes[n] + 1) for n in names)):
            inner = dict(env)
            for binding, value in zip(node.bindings.bindings, combo):
                inner[binding.index] = value
            coeffs, k = _affine(node.body, inner, symbols, columns, sizes)
            for col, coeff in coeffs.items():
                out[col] = out.get(col, 0.0) + coeff
            const += k
        return out, const
    if isinstance(node, fl.CompareChain):
        raise ExpansionError("comparison not allowed inside an expression")
    raise TypeError(f"unknown node {node!r}")


def _to_linear(coeffs: dict[int, float], const: float) -> LinearExpr:
    return LinearExpr({col: c for col, c in coeffs.items() if c != 0.0}, const)


def expand(model: StructuredModel) -> ConcreteModel:
    """Expand a validated model into a concrete LP/MIP instance.

    One variable instance is created per variable definition and index tuple;
    one concrete constraint per constraint definition, index tuple, comma
    segment, and comparison link. Strict inequalities are mapped to their
    non-strict counterparts, with a warning recorded per mapped relation.
    """
    sizes = _set_sizes(model)
    symbols = _Symbols(model)
    warnings: list[str] = []

    variables: list[VarInstance] = []
    columns: dict[tuple[str, tuple[int, ...]], int] = {}
    for def_name, index_tuple, vartype in iter_var_instances(model):
        column = len(variables)
        variables.append(VarInstance(def_name, index_tuple, vartype, column))
        columns[(def_name, index_tuple)] = column

    objective_def = model.objectives[0]
    segments = fl.parse_formula(objective_def.function)
    if len(segments) != 1 or isinstance(segments[0], fl.CompareChain):
        raise ExpansionError("objective must be a single comparison-free expression")
    obj_coeffs, obj_const = _affine(segments[0], {}, symbols, columns, sizes)
    objective = _to_linear(obj_coeffs, obj_const)

    constraints: list[ConcreteConstraint] = []
    for cdef in model.constraints:
        spec = _domain_bindings(cdef.domain)
        parsed = fl.parse_formula(cdef.function)
        for index_tuple in iter_index_tuples(model, cdef.domain):
            env = {b.index: v for b, v in zip(spec.bindings, index_tuple)}
            for seg_no, segment in enumerate(parsed, start=1):
                if not isinstance(segment, fl.CompareChain):
                    raise ExpansionError(
                        f"constraint {cdef.name!r} segment {seg_no} has no comparison"
                    )
                expanded = [
                    _affine(op, dict(env), symbols, columns, sizes)
                    for op in segment.operands
                ]
                for link_no, relation in enumerate(segment.relations, start=1):
                    lc, lk = expanded[link_no - 1]
                    rc, rk = expanded[link_no]
                    diff = dict(lc)
                    for col, coeff in rc.items():
                        diff[col] = diff.get(col, 0.0) - coeff
                    name = constraint_instance_name(cdef.name, index_tuple, seg_no, link_no)
                    if relation in (fl.Relation.LT, fl.Relation.GT):
                        warnings.append(
                            f"{name}: strict '{relation.value}' mapped to"
                            f" '{_CONCRETE_RELATIONS[relation].value}'"
                        )
                    constraints.append(
                        ConcreteConstraint(
                            name,
                            _to_linear(diff, 0.0),
                            _CONCRETE_RELATIONS[relation],
                            rk - lk,
                        )
                    )

    return ConcreteModel(
        variables=tuple(variables),
        sense=objective_def.sense,
        objective=objective,
        constraints=tuple(constraints),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Naive interpretation (independent oracle)


SATISFACTION_TOL = 1e-6


@dataclass(frozen=True)
class NaiveEvaluation:
    objective_value: float
    satisfaction: Mapping[str, bool]

    @property
    def all_satisfied(self) -> bool:
        return all(self.satisfaction.values())


def _interpret(
    node: fl.FormulaAst,
    env: dict[str, int],
    symbols: _Symbols,
    assignment: Mapping[tuple[str, tuple[int, ...]], float],
    sizes: Mapping[str, int],
) -> float:
    if isinstance(node, fl.Number):
        return node.value
    if isinstance(node, fl.Ref):
        if node.name in symbols.params:
            param, arity = symbols.params[node.name]
            return _param_value(param, symbols.resolve_subscripts(node, env), arity)
        if node.name in symbols.vars:
            _, arity = symbols.vars[node.name]
            values = symbols.resolve_subscripts(node, env)
            if len(values) != arity:
                raise SubscriptArityMismatchError(
                    f"variable {node.name!r} takes {arity} subscripts, got {len(values)}"
                )
            try:
                return float(assignment[(node.name, values)])
            except KeyError:
                raise ExpansionError(
                    f"assignment missing value for {node.name!r}{values}"
                ) from None
        raise UnknownSymbolError(f"unknown symbol {node.name!r}")
    if isinstance(node, fl.Add):
        return _interpret(node.left, env, symbols, assignment, sizes) + _interpret(
            node.right, env, symbols, assignment, sizes
        )
    if isinstance(node, fl.Sub):
        return _interpret(node.left, env, symbols, assignment, sizes) - _interpret(
            node.right, env, symbols, assignment, sizes
        )
    if isinstance(node, fl.Mul):
        return _interpret(node.left, env, symbols, assignment, sizes) * _interpret(
            node.right, env, symbols, assignment, sizes
        )
    if isinstance(node, fl.Div):
        denom = _interpret(node.right, env, symbols, assignment, sizes)
        if denom == 0.0:
            raise ExpansionError(f"division by zero at index {tuple(sorted(env.items()))!r}")
        return _interpret(node.left, env, symbols, assignment, sizes) / denom
    if isinstance(node, fl.Neg):
        return -_interpret(node.operand, env, symbols, assignment, sizes)
    if isinstance(node, fl.Sum):
        total = 0.0
        names = [b.set_name for b in node.bindings.bindings]
        for name in names:
            if name not in sizes:
                raise UnknownSymbolError(f"unknown set {name!r} in summation domain")
        for combo in itertools.product(*(range(1, sizes[n] + 1) for n in names)):
            inner = dict(env)
            for binding, value in zip(node.bindings.bindings, combo):
                inner[binding.index] = value
            total += _interpret(node.body, inner, symbols, assignment, sizes)
        return total
    if isinstance(node, fl.CompareChain):
        raise ExpansionError("comparison not allowed inside an expression")
    raise TypeError(f"unknown node {node!r}")


def _link_satisfied(lhs: float, relation: fl.Relation, rhs: float, tol: float) -> bool:
    # strict relations are checked like their non-strict forms at tolerance,
    # mirroring the LT/GT mapping applied during expansion
    if relation in (fl.Relation.LE, fl.Relation.LT):
        return lhs <= rhs + tol
    if relation in (fl.Relation.GE, fl.Relation.GT):
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


def evaluate_naive(
    model: StructuredModel,
    assignment: Mapping[tuple[str, tuple[int, ...]], float],
    tol: float = SATISFACTION_TOL,
) -> NaiveEvaluation:
    """Evaluate objective and constraints by direct recursive interpretation.

    The assignment maps ``(variable name, index tuple)`` to a value and must
    cover every variable instance that the formulas touch.
    """
    sizes = _set_sizes(model)
    symbols = _Symbols(model)

    objective_def = model.objectives[0]
    segments = fl.parse_formula(objective_def.function)
    if len(segments) != 1 or isinstance(segments[0], fl.CompareChain):
        raise ExpansionError("objective must be a single comparison-free expression")
    objective_value = _interpret(segments[0], {}, symbols, assignment, sizes)

    satisfaction: dict[str, bool] = {}
    for cdef in model.constraints:
        spec = _domain_bindings(cdef.domain)
        parsed = fl.parse_formula(cdef.function)
        for index_tuple in iter_index_tuples(model, cdef.domain):
            env = {b.index: v for b, v in zip(spec.bindings, index_tuple)}
            for seg_no, segment in enumerate(parsed, start=1):
                if not isinstance(segment, fl.CompareChain):
                    raise ExpansionError(
                        f"constraint {cdef.name!r} segment {seg_no} has no comparison"
                    )
                values = [
                    _interpret(op, dict(env), symbols, assignment, sizes)
                    for op in segment.operands
                ]
                for link_no, relation in enumerate(segment.relations, start=1):
                    name = constraint_instance_name(cdef.name, index_tuple, seg_no, link_no)
                    satisfaction[name] = _link_satisfied(
                        values[link_no - 1], relation, values[link_no], tol
                    )

    return NaiveEvaluation(objective_value, satisfaction)


# ---------------------------------------------------------------------------
# LP format emission


def _format_coeff(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def _format_terms(expr: LinearExpr, variables: tuple[VarInstance, ...]) -> str:
    parts: list[str] = []
    for col in sorted(expr.coefficients):
        coeff = expr.coefficients[col]
        name = variables[col].lp_name
        magnitude = abs(coeff)
        body = name if magnitude == 1.0 else f"{_format_coeff(magnitude)} {name}"
        if not parts:
            parts.append(body if coeff > 0 else f"- {body}")
        else:
            parts.append(f"+ {body}" if coeff > 0 else f"- {body}")
    if expr.constant != 0.0 or not parts:
        constant = expr.constant
        if not parts:
            parts.append(_format_coeff(constant))
        elif constant > 0:
            parts.append(f"+ {_format_coeff(constant)}")
        else:
            parts.append(f"- {_format_coeff(-constant)}")
    return " ".join(parts)


def emit_lp(model: ConcreteModel) -> str:
    """Emit a deterministic CPLEX-style LP document for a concrete model."""
    lines: list[str] = []
    lines.append("Maximize" if model.sense is Sense.MAX else "Minimize")
    lines.append(f"obj: {_format_terms(model.objective, model.variables)}")
    lines.append("Subject To")
    for constraint in model.constraints:
        lines.append(
            f"{constraint.name}: {_format_terms(constraint.lhs, model.variables)}"
            f" {constraint.relation.value} {_format_coeff(constraint.rhs)}"
        )
    lines.append("Bounds")
    # all instances use the default bounds: [0, +inf), or {0, 1} for binaries
    generals = [v.lp_name for v in model.variables if v.vartype is VarType.INTEGER]
    binaries = [v.lp_name for v in model.variables if v.vartype is VarType.BINARY]
    if generals:
        lines.append("Generals")
        lines.extend(generals)
    if binaries:
        lines.append("Binaries")
        lines.extend(binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"
