"""Structured optimization-model schema: types, parsing, validation, rendering.

A model document is a JSON object with the component keys ``set``,
``parameter``, ``variable``, ``objective``, and ``constraint``, each holding a
list of component records. ``variable`` and ``objective`` are required.
Domain strings use the literal ``<in>`` token inside braces, e.g.
``{a <in> Aircraft}``.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Any

from .formula import DomainSpec, FormulaError, free_indices, parse_domain, parse_formula

IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

COMPONENT_KEYS = ("set", "parameter", "variable", "objective", "constraint")
REQUIRED_COMPONENT_KEYS = ("variable", "objective")


class ModelFormatError(ValueError):
    """A model document could not be turned into a StructuredModel."""

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DocumentSyntaxError(ModelFormatError):
    """The document is not syntactically well-formed JSON."""


class MissingComponentError(ModelFormatError):
    """A required component list or record field is absent."""


class UnknownFieldError(ModelFormatError):
    """A record carries a field the schema does not define."""


class FieldTypeError(ModelFormatError):
    """A field holds a value of the wrong type."""


class VarType(enum.Enum):
    CONTINUOUS = "CONTINUOUS"
    INTEGER = "INTEGER"
    BINARY = "BINARY"


class Sense(enum.Enum):
    MIN = "min"
    MAX = "max"


_SENSE_ALIASES = {
    "min": Sense.MIN,
    "minimize": Sense.MIN,
    "max": Sense.MAX,
    "maximize": Sense.MAX,
}


@dataclass(frozen=True)
class SetDef:
    name: str
    description: str
    data: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class ParamDef:
    name: str
    description: str
    domain: str
    data: Any  # float for scalars, nested tuples of float otherwise


@dataclass(frozen=True)
class VarDef:
    name: str
    description: str
    domain: str
    vartype: VarType = VarType.CONTINUOUS


@dataclass(frozen=True)
class ObjectiveDef:
    name: str
    description: str
    sense: Sense
    function: str


@dataclass(frozen=True)
class ConstraintDef:
    name: str
    description: str
    domain: str
    function: str


@dataclass(frozen=True)
class StructuredModel:
    sets: tuple[SetDef, ...] = ()
    parameters: tuple[ParamDef, ...] = ()
    variables: tuple[VarDef, ...] = ()
    objectives: tuple[ObjectiveDef, ...] = ()
    constraints: tuple[ConstraintDef, ...] = ()

    def set_by_name(self, name: str) -> SetDef | None:
        for s in self.sets:
            if s.name == name:
                return s
        return None

    def param_by_name(self, name: str) -> ParamDef | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def var_by_name(self, name: str) -> VarDef | None:
        for v in self.variables:
            if v.name == name:
                return v
        return None


class ViolationCode(enum.Enum):
    BAD_IDENTIFIER = "BadIdentifier"
    SET_NOT_CONTIGUOUS = "SetNotContiguous"
    DIMENSION_MISMATCH = "DimensionMismatch"
    MALFORMED_DOMAIN = "MalformedDomain"
    UNKNOWN_SET = "UnknownSet"
    DUPLICATE_NAME = "DuplicateName"
    MISSING_VARIABLES = "MissingVariables"
    OBJECTIVE_COUNT = "ObjectiveCount"
    BAD_FORMULA = "BadFormula"
    UNBOUND_INDEX = "UnboundIndex"


@dataclass(frozen=True)
class Violation:
    component: str
    rule: ViolationCode
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.rule.value} {self.component}: {self.message} ({self.path})"


# ---------------------------------------------------------------------------
# Parsing


def _expect_str(record: dict, key: str, path: str) -> str:
    if key not in record:
        raise MissingComponentError(f"missing field '{key}'", path)
    value = record[key]
    if not isinstance(value, str):
        raise FieldTypeError(f"field '{key}' must be a string", path)
    return value


def _coerce_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FieldTypeError("expected a number", path)
    return float(value)


def _coerce_int(value: Any, path: str) -> int:
    number = _coerce_number(value, path)
    if number != int(number):
        raise FieldTypeError("expected an integer", path)
    return int(number)


def _coerce_data(value: Any, path: str) -> Any:
    if isinstance(value, list):
        return tuple(_coerce_data(item, f"{path}[{i}]") for i, item in enumerate(value))
    return _coerce_number(value, path)


def _check_fields(record: dict, allowed: set[str], path: str) -> None:
    for key in record:
        if key not in allowed:
            raise UnknownFieldError(f"unknown field '{key}'", path)


def _parse_set(record: dict, path: str) -> SetDef:
    _check_fields(record, {"name", "description", "data"}, path)
    name = _expect_str(record, "name", path)
    description = _expect_str(record, "description", path)
    if "data" not in record:
        raise MissingComponentError("missing field 'data'", path)
    raw = record["data"]
    if not isinstance(raw, list):
        raise FieldTypeError("set data must be a list", f"{path}.data")
    data = tuple(_coerce_int(v, f"{path}.data[{i}]") for i, v in enumerate(raw))
    return SetDef(name, description, data)


def _parse_parameter(record: dict, path: str) -> ParamDef:
    _check_fields(record, {"name", "description", "domain", "data"}, path)
    name = _expect_str(record, "name", path)
    description = _expect_str(record, "description", path)
    domain = _expect_str(record, "domain", path)
    if "data" not in record:
        raise MissingComponentError("missing field 'data'", path)
    data = _coerce_data(record["data"], f"{path}.data")
    return ParamDef(name, description, domain, data)


def _parse_variable(record: dict, path: str) -> VarDef:
    _check_fields(record, {"name", "description", "domain", "type"}, path)
    name = _expect_str(record, "name", path)
    description = _expect_str(record, "description", path)
    domain = _expect_str(record, "domain", path)
    vartype = VarType.CONTINUOUS
    if "type" in record:
        raw = record["type"]
        if not isinstance(raw, str):
            raise FieldTypeError("field 'type' must be a string", path)
        try:
            vartype = VarType[raw.upper()]
        except KeyError:
            raise FieldTypeError(
                f"unknown variable type {raw!r} (expected CONTINUOUS, INTEGER, or BINARY)",
                path,
            ) from None
    return VarDef(name, description, domain, vartype)


def _parse_objective(record: dict, path: str) -> ObjectiveDef:
    _check_fields(record, {"name", "description", "sense", "function"}, path)
    name = _expect_str(record, "name", path)
    description = _expect_str(record, "description", path)
    raw_sense = _expect_str(record, "sense", path)
    sense = _SENSE_ALIASES.get(raw_sense.lower())
    if sense is None:
        raise FieldTypeError(
            f"unknown sense {raw_sense!r} (expected min, max, minimize, or maximize)", path
        )
    function = _expect_str(record, "function", path)
    return ObjectiveDef(name, description, sense, function)


def _parse_constraint(record: dict, path: str) -> ConstraintDef:
    _check_fields(record, {"name", "description", "domain", "function"}, path)
    name = _expect_str(record, "name", path)
    description = _expect_str(record, "description", path)
    domain = _expect_str(record, "domain", path)
    function = _expect_str(record, "function", path)
    return ConstraintDef(name, description, domain, function)


_COMPONENT_PARSERS = {
    "set": _parse_set,
    "parameter": _parse_parameter,
    "variable": _parse_variable,
    "objective": _parse_objective,
    "constraint": _parse_constraint,
}


def parse_model(text: str) -> StructuredModel:
    """Parse a JSON model document into a StructuredModel.

    Raises a ModelFormatError subclass on syntax errors, unknown fields,
    missing required components, or wrongly typed values. Defaults are
    applied (variable type falls back to CONTINUOUS).
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(document, dict):
        raise DocumentSyntaxError("model document must be a JSON object")
    for key in document:
        if key not in COMPONENT_KEYS:
            raise UnknownFieldError(f"unknown component key '{key}'")
    for key in REQUIRED_COMPONENT_KEYS:
        if key not in document:
            raise MissingComponentError(f"missing required component '{key}'")

    parsed: dict[str, list] = {}
    for key in COMPONENT_KEYS:
        records = document.get(key, [])
        if not isinstance(records, list):
            raise FieldTypeError(f"component '{key}' must be a list", key)
        items = []
        for i, record in enumerate(records):
            path = f"{key}[{i}]"
            if not isinstance(record, dict):
                raise FieldTypeError("component record must be an object", path)
            items.append(_COMPONENT_PARSERS[key](record, path))
        parsed[key] = items

    if not parsed["variable"]:
        raise MissingComponentError("component 'variable' must not be empty")
    if not parsed["objective"]:
        raise MissingComponentError("component 'objective' must not be empty")

    return StructuredModel(
        sets=tuple(parsed["set"]),
        parameters=tuple(parsed["parameter"]),
        variables=tuple(parsed["variable"]),
        objectives=tuple(parsed["objective"]),
        constraints=tuple(parsed["constraint"]),
    )


# ---------------------------------------------------------------------------
# Serialization


def format_number(value: float) -> str:
    """Render a float; integral values print without a decimal point."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _data_to_json(data: Any) -> Any:
    if isinstance(data, tuple):
        return [_data_to_json(item) for item in data]
    value = float(data)
    if value.is_integer() and abs(value) < 1e16:
        return int(value)
    return value


def model_to_document(model: StructuredModel) -> dict:
    """Build the plain JSON-ready document object for a model."""
    return {
        "set": [
            {"name": s.name, "description": s.description, "data": list(s.data)}
            for s in model.sets
        ],
        "parameter": [
            {
                "name": p.name,
                "description": p.description,
                "domain": p.domain,
                "data": _data_to_json(p.data),
            }
            for p in model.parameters
        ],
        "variable": [
            {
                "name": v.name,
                "description": v.description,
                "domain": v.domain,
                "type": v.vartype.value,
            }
            for v in model.variables
        ],
        "objective": [
            {
                "name": o.name,
                "description": o.description,
                "sense": o.sense.value,
                "function": o.function,
            }
            for o in model.objectives
        ],
        "constraint": [
            {
                "name": c.name,
                "description": c.description,
                "domain": c.domain,
                "function": c.function,
            }
            for c in model.constraints
        ],
    }


def serialize_model(model: StructuredModel) -> str:
    """Render a model back to canonical JSON document text."""
    return json.dumps(model_to_document(model), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation


def _data_shape_matches(data: Any, extents: tuple[int, ...]) -> bool:
    if not extents:
        return not isinstance(data, tuple)
    if not isinstance(data, tuple) or len(data) != extents[0]:
        return False
    return all(_data_shape_matches(item, extents[1:]) for item in data)


def _check_name(name: str, component: str, path: str, out: list[Violation]) -> None:
    if not IDENTIFIER_RE.match(name):
        out.append(
            Violation(
                component,
                ViolationCode.BAD_IDENTIFIER,
                path,
                f"name {name!r} is not a valid identifier",
            )
        )


def _check_domain(
    domain: str, component: str, path: str, model: StructuredModel, out: list[Violation]
) -> DomainSpec | None:
    try:
        spec = parse_domain(domain)
    except FormulaError as exc:
        out.append(Violation(component, ViolationCode.MALFORMED_DOMAIN, path, str(exc)))
        return None
    for binding in spec.bindings:
        if model.set_by_name(binding.set_name) is None:
            out.append(
                Violation(
                    component,
                    ViolationCode.UNKNOWN_SET,
                    path,
                    f"domain references unknown set {binding.set_name!r}",
                )
            )
            return None
    return spec


def _check_formula(
    function: str,
    domain_spec: DomainSpec | None,
    component: str,
    path: str,
    out: list[Violation],
) -> None:
    try:
        segments = parse_formula(function)
    except FormulaError as exc:
        out.append(Violation(component, ViolationCode.BAD_FORMULA, path, str(exc)))
        return
    if domain_spec is None:
        return
    allowed = {binding.index for binding in domain_spec.bindings}
    for segment in segments:
        loose = free_indices(segment) - allowed
        if loose:
            out.append(
                Violation(
                    component,
                    ViolationCode.UNBOUND_INDEX,
                    path,
                    f"free indices {sorted(loose)} not bound by the domain",
                )
            )


def validate(model: StructuredModel) -> list[Violation]:
    """Check every schema invariant; returns violations instead of raising."""
    out: list[Violation] = []

    seen: dict[str, str] = {}
    components: list[tuple[str, str, str]] = []
    for kind, defs in (
        ("set", model.sets),
        ("parameter", model.parameters),
        ("variable", model.variables),
        ("objective", model.objectives),
        ("constraint", model.constraints),
    ):
        for i, item in enumerate(defs):
            components.append((kind, item.name, f"{kind}[{i}]"))
    for kind, name, path in components:
        _check_name(name, name, path, out)
        if name in seen:
            out.append(
                Violation(
                    name,
                    ViolationCode.DUPLICATE_NAME,
                    path,
                    f"name {name!r} already used by {seen[name]}",
                )
            )
        else:
            seen[name] = path

    if not model.variables:
        out.append(
            Violation(
                "variable",
                ViolationCode.MISSING_VARIABLES,
                "variable",
                "at least one variable is required",
            )
        )
    if len(model.objectives) != 1:
        out.append(
            Violation(
                "objective",
                ViolationCode.OBJECTIVE_COUNT,
                "objective",
                f"exactly one objective is required, found {len(model.objectives)}",
            )
        )

    for i, s in enumerate(model.sets):
        path = f"set[{i}].data"
        if s.data != tuple(range(1, len(s.data) + 1)) or not s.data:
            out.append(
                Violation(
                    s.name,
                    ViolationCode.SET_NOT_CONTIGUOUS,
                    path,
                    f"set data must be the contiguous sequence 1..n, got {list(s.data)}",
                )
            )

    for i, p in enumerate(model.parameters):
        path = f"parameter[{i}]"
        spec = _check_domain(p.domain, p.name, f"{path}.domain", model, out)
        if spec is None:
            continue
        extents = tuple(
            model.set_by_name(b.set_name).size for b in spec.bindings  # type: ignore[union-attr]
        )
        if not _data_shape_matches(p.data, extents):
            expected = "a scalar" if not extents else f"nested extents {list(extents)}"
            out.append(
                Violation(
                    p.name,
                    ViolationCode.DIMENSION_MISMATCH,
                    f"{path}.data",
                    f"data does not match the domain (expected {expected})",
                )
            )

    for i, v in enumerate(model.variables):
        _check_domain(v.domain, v.name, f"variable[{i}].domain", model, out)

    for i, o in enumerate(model.objectives):
        path = f"objective[{i}]"
        _check_formula(o.function, DomainSpec(()), o.name, f"{path}.function", out)

    for i, c in enumerate(model.constraints):
        path = f"constraint[{i}]"
        spec = _check_domain(c.domain, c.name, f"{path}.domain", model, out)
        _check_formula(c.function, spec, c.name, f"{path}.function", out)

    return out


# ---------------------------------------------------------------------------
# Markdown rendering


def _render_values(data: Any) -> str:
    if isinstance(data, tuple):
        return "[" + ", ".join(_render_values(item) for item in data) + "]"
    return format_number(data)


def render_markdown(model: StructuredModel) -> str:
    """Render set and parameter data as a deterministic markdown listing."""
    lines: list[str] = []
    if model.sets:
        lines.append("## Sets")
        lines.append("")
        for s in model.sets:
            lines.append(f"- {s.name}: {s.description}, {s.size} elements")
        lines.append("")
    if model.parameters:
        lines.append("## Parameters")
        lines.append("")
        for p in model.parameters:
            if p.domain.strip():
                lines.append(
                    f"- {p.name} (domain `{p.domain}`): {p.description},"
                    f" values {_render_values(p.data)}"
                )
            else:
                lines.append(f"- {p.name}: {p.description}, value {_render_values(p.data)}")
        lines.append("")
    return "\n".join(lines)
