"""Intermediate representation for AI chains.

The IR is a tree of units: leaf workers (prompt + engine + inputs),
containers (composite workers) and traditional statements (console I/O,
assignment, if/while/for, output wrappers).  Conditions and assignments use a
small dynamically-typed expression language.

Trees are built in memory, validated with :func:`validate`, serialized with
``unit_to_dict``/``unit_from_dict`` and compared with
:func:`structural_equal`.  Unit ids identify blocks for editors and
transcripts; names are the semantic identity.
"""

from __future__ import annotations

import math
import re
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Union

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

#: Operators accepted by Binary expressions.
BINARY_OPS = ("==", "!=", "<", "<=", ">", ">=", "+", "contains", "and", "or")


def is_identifier(text: str) -> bool:
    """True iff `text` is a valid chain identifier (letters, digits, underscore)."""
    return isinstance(text, str) and _IDENT_RE.fullmatch(text) is not None


def new_unit_id() -> str:
    """Fresh editor identity for a block. Stable once created."""
    return uuid.uuid4().hex[:12]


class IRError(Exception):
    """Malformed IR construction or serialization input."""


# ---------------------------------------------------------------------------
# Runtime values
# ---------------------------------------------------------------------------


class ValueTag(str, Enum):
    TEXT = "text"
    NUMBER = "number"
    BOOLEAN = "boolean"
    IMAGE_REF = "image-ref"


@dataclass(frozen=True)
class Value:
    """A runtime value flowing between workers: exactly one tag, explicit coercion."""

    tag: ValueTag
    payload: Any

    def __post_init__(self) -> None:
        if self.tag is ValueTag.NUMBER:
            if not isinstance(self.payload, (int, float)) or isinstance(self.payload, bool):
                raise IRError("number payload must be int or float")
            if not math.isfinite(self.payload):
                raise IRError("number payload must be finite")
        elif self.tag is ValueTag.BOOLEAN:
            if not isinstance(self.payload, bool):
                raise IRError("boolean payload must be bool")
        elif self.tag is ValueTag.IMAGE_REF:
            if not isinstance(self.payload, str) or not self.payload:
                raise IRError("image-ref payload must be a non-empty string")
        elif self.tag is ValueTag.TEXT:
            if not isinstance(self.payload, str):
                raise IRError("text payload must be a string")
        else:
            raise IRError(f"unknown value tag: {self.tag!r}")

    @staticmethod
    def text(payload: str) -> "Value":
        return Value(ValueTag.TEXT, payload)

    @staticmethod
    def number(payload: float) -> "Value":
        return Value(ValueTag.NUMBER, payload)

    @staticmethod
    def boolean(payload: bool) -> "Value":
        return Value(ValueTag.BOOLEAN, payload)

    @staticmethod
    def image_ref(payload: str) -> "Value":
        return Value(ValueTag.IMAGE_REF, payload)

    def as_text(self) -> str:
        """Canonical text form: numbers without trailing zeros, booleans as true/false."""
        if self.tag is ValueTag.BOOLEAN:
            return "true" if self.payload else "false"
        if self.tag is ValueTag.NUMBER:
            return format_number(self.payload)
        return str(self.payload)

    def as_number(self) -> float | None:
        """Numeric coercion: numbers as-is, text parsing as a finite number; else None."""
        if self.tag is ValueTag.NUMBER:
            return float(self.payload)
        if self.tag is ValueTag.TEXT:
            try:
                parsed = float(self.payload)
            except ValueError:
                return None
            return parsed if math.isfinite(parsed) else None
        return None

    def as_bool(self) -> bool:
        """Truthiness: booleans as-is, nonzero numbers, non-empty text/image-ref."""
        if self.tag is ValueTag.BOOLEAN:
            return bool(self.payload)
        if self.tag is ValueTag.NUMBER:
            return self.payload != 0
        return bool(self.payload)

    def to_dict(self) -> dict[str, Any]:
        return {"tag": self.tag.value, "payload": self.payload}

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "Value":
        try:
            tag = ValueTag(data["tag"])
        except (KeyError, ValueError, TypeError) as exc:
            raise IRError(f"bad value: {data!r}") from exc
        return Value(tag, data.get("payload"))


def format_number(num: float) -> str:
    """Render a number without a trailing ``.0``; non-integral floats use repr."""
    if isinstance(num, int):
        return str(num)
    if float(num).is_integer():
        return str(int(num))
    return repr(num)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Not:
    expr: "Expr"


Expr = Union[Literal, Var, Binary, Not]


# ---------------------------------------------------------------------------
# Units
# ---------------------------------------------------------------------------


@dataclass
class BlockMeta:
    """Editor state attached to every block; only `enabled` affects execution."""

    enabled: bool = True
    collapsed: bool = False
    comment: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def is_default(self) -> bool:
        return self.enabled and not self.collapsed and self.comment is None and not self.extra


@dataclass
class ConsoleInput:
    """Input slot that asks the console; `prompt_text` doubles as the input's name."""

    prompt_text: str


@dataclass
class VariableRef:
    """Input slot that reads a declared variable or an earlier step's output."""

    name: str


InputSource = Union[ConsoleInput, VariableRef]


@dataclass
class WorkerSpec:
    """Leaf execution unit: inputs (preworkers), a prompt and an engine."""

    name: str
    prompt_ref: str
    engine_ref: str
    preworkers: list[Union[InputSource, "WorkerSpec"]] = field(default_factory=list)
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class ContainerSpec:
    """Composite worker: preunits run first, then the unit hierarchy inside."""

    name: str
    preunits: list["Unit"] = field(default_factory=list)
    units: list["Unit"] = field(default_factory=list)
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class ConsoleOutput:
    expr: Expr
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class Assign:
    var: str
    expr: Expr
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class If:
    cond: Expr
    then: list["Unit"] = field(default_factory=list)
    orelse: list["Unit"] = field(default_factory=list)
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class While:
    cond: Expr
    body: list["Unit"] = field(default_factory=list)
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class For:
    """Inclusive integer range loop: `var` runs from `start` to `stop` ascending."""

    var: str
    start: Expr
    stop: Expr
    body: list["Unit"] = field(default_factory=list)
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class OutputWrapper:
    """Marks a worker whose output is routed to the end-user Output window."""

    worker: WorkerSpec
    id: str = field(default_factory=new_unit_id)
    meta: BlockMeta = field(default_factory=BlockMeta)
    extra: dict[str, Any] = field(default_factory=dict)


Statement = Union[ConsoleOutput, Assign, If, While, For, OutputWrapper]
Unit = Union[WorkerSpec, ContainerSpec, Statement]


@dataclass
class ChainProgram:
    """A named chain: declared variables plus the ordered top-level units."""

    name: str
    variables: list[tuple[str, Value]] = field(default_factory=list)
    top_level: list[Unit] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)


def child_units(unit: Unit) -> list[Unit]:
    """Direct child units of `unit` (nested preworker workers included)."""
    if isinstance(unit, WorkerSpec):
        return [p for p in unit.preworkers if isinstance(p, WorkerSpec)]
    if isinstance(unit, ContainerSpec):
        return list(unit.preunits) + list(unit.units)
    if isinstance(unit, If):
        return list(unit.then) + list(unit.orelse)
    if isinstance(unit, (While, For)):
        return list(unit.body)
    if isinstance(unit, OutputWrapper):
        return [unit.worker]
    return []


def iter_units(units: list[Unit]) -> Iterator[Unit]:
    """Depth-first pre-order walk over every unit in the forest."""
    for unit in units:
        yield unit
        yield from iter_units(child_units(unit))


def _unit_exprs(unit: Unit) -> list[Expr]:
    if isinstance(unit, ConsoleOutput):
        return [unit.expr]
    if isinstance(unit, Assign):
        return [unit.expr]
    if isinstance(unit, If):
        return [unit.cond]
    if isinstance(unit, While):
        return [unit.cond]
    if isinstance(unit, For):
        return [unit.start, unit.stop]
    return []


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    unit_id: str
    severity: str  # "error" | "warning"
    message: str


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors()

    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "valid": self.ok,
            "diagnostics": [
                {"unit_id": d.unit_id, "severity": d.severity, "message": d.message}
                for d in self.diagnostics
            ],
        }


def validate(program: ChainProgram, prompts: set[str], engines: set[str]) -> ValidationReport:
    """Check every IR invariant against the project's prompt and engine names.

    Pure: the program is never mutated and repeated calls return the same
    report.  Diagnostics are data; a program is valid iff no diagnostic has
    error severity.
    """
    diags: list[Diagnostic] = []

    def err(unit_id: str, message: str) -> None:
        diags.append(Diagnostic(unit_id, "error", message))

    var_names: list[str] = []
    for var_name, initial in program.variables:
        if not is_identifier(var_name):
            err("", f"invalid variable name {var_name!r}")
        if var_name in var_names:
            err("", f"duplicate variable name {var_name!r}")
        var_names.append(var_name)
        _check_value(initial, "", diags)

    workers = [u for u in iter_units(program.top_level) if isinstance(u, WorkerSpec)]
    step_names: dict[str, str] = {}
    for worker in workers:
        if not is_identifier(worker.name):
            err(worker.id, f"invalid step name {worker.name!r}")
        if worker.name in step_names or worker.name in var_names:
            err(worker.id, f"duplicate step name {worker.name!r}")
        else:
            step_names[worker.name] = worker.id

    known_names = set(var_names) | set(step_names)
    declared = set(var_names)

    seen_objects: set[int] = set()
    seen_ids: set[str] = set()
    for unit in iter_units(program.top_level):
        if id(unit) in seen_objects:
            err(getattr(unit, "id", ""), "unit appears in more than one place (tree, not DAG)")
            continue
        seen_objects.add(id(unit))
        if unit.id in seen_ids:
            err(unit.id, f"duplicate unit id {unit.id!r}")
        seen_ids.add(unit.id)

        if isinstance(unit, WorkerSpec):
            if unit.prompt_ref not in prompts:
                err(unit.id, f"unresolved prompt reference {unit.prompt_ref!r}")
            if unit.engine_ref not in engines:
                err(unit.id, f"unresolved engine reference {unit.engine_ref!r}")
            for pre in unit.preworkers:
                if isinstance(pre, VariableRef) and pre.name not in known_names:
                    err(unit.id, f"unresolved variable reference {pre.name!r}")
        elif isinstance(unit, ContainerSpec):
            if not is_identifier(unit.name):
                err(unit.id, f"invalid container name {unit.name!r}")
            if not unit.units:
                err(unit.id, "container has an empty units slot")
        elif isinstance(unit, (Assign, For)):
            if unit.var not in declared:
                err(unit.id, f"assignment target {unit.var!r} is not a declared variable")
        elif isinstance(unit, OutputWrapper):
            if not isinstance(unit.worker, WorkerSpec):
                err(unit.id, "output block must contain exactly one worker")

        for expr in _unit_exprs(unit):
            _check_expr(expr, unit.id, known_names, diags)

    return ValidationReport(diags)


def _check_value(value: Value, unit_id: str, diags: list[Diagnostic]) -> None:
    # Construction enforces Value invariants; re-check here so hand-built or
    # deserialized payloads surface as diagnostics instead of crashes.
    try:
        Value(value.tag, value.payload)
    except IRError as exc:
        diags.append(Diagnostic(unit_id, "error", str(exc)))


def _check_expr(expr: Expr, unit_id: str, known: set[str], diags: list[Diagnostic]) -> None:
    if isinstance(expr, Literal):
        _check_value(expr.value, unit_id, diags)
    elif isinstance(expr, Var):
        if not is_identifier(expr.name):
            diags.append(Diagnostic(unit_id, "error", f"invalid identifier {expr.name!r}"))
        elif expr.name not in known:
            diags.append(Diagnostic(unit_id, "error", f"unresolved variable reference {expr.name!r}"))
    elif isinstance(expr, Binary):
        if expr.op not in BINARY_OPS:
            diags.append(Diagnostic(unit_id, "error", f"unknown operator {expr.op!r}"))
        _check_expr(expr.lhs, unit_id, known, diags)
        _check_expr(expr.rhs, unit_id, known, diags)
    elif isinstance(expr, Not):
        _check_expr(expr.expr, unit_id, known, diags)
    else:
        diags.append(Diagnostic(unit_id, "error", f"unknown expression node {expr!r}"))


# ---------------------------------------------------------------------------
# Structural equality
# ---------------------------------------------------------------------------


def structural_equal(a: ChainProgram, b: ChainProgram) -> bool:
    """True iff the programs are identical trees up to unit ids.

    Collapsed flags and unknown extra fields are editor noise and ignored;
    enabled flags, names, order, references and expressions all count.
    """
    if a.name != b.name:
        return False
    if len(a.variables) != len(b.variables):
        return False
    for (name_a, val_a), (name_b, val_b) in zip(a.variables, b.variables):
        if name_a != name_b or val_a != val_b:
            return False
    return _units_equal(a.top_level, b.top_level)


def _units_equal(xs: list[Unit], ys: list[Unit]) -> bool:
    return len(xs) == len(ys) and all(_unit_equal(x, y) for x, y in zip(xs, ys))


def _meta_equal(a: BlockMeta, b: BlockMeta) -> bool:
    return a.enabled == b.enabled and a.comment == b.comment


def _unit_equal(x: Unit, y: Unit) -> bool:
    if type(x) is not type(y) or not _meta_equal(x.meta, y.meta):
        return False
    if isinstance(x, WorkerSpec):
        if (x.name, x.prompt_ref, x.engine_ref) != (y.name, y.prompt_ref, y.engine_ref):
            return False
        if len(x.preworkers) != len(y.preworkers):
            return False
        for px, py in zip(x.preworkers, y.preworkers):
            if isinstance(px, WorkerSpec) and isinstance(py, WorkerSpec):
                if not _unit_equal(px, py):
                    return False
            elif px != py:  # dataclass equality on input sources
                return False
        return True
    if isinstance(x, ContainerSpec):
        return (
            x.name == y.name
            and _units_equal(x.preunits, y.preunits)
            and _units_equal(x.units, y.units)
        )
    if isinstance(x, ConsoleOutput):
        return x.expr == y.expr
    if isinstance(x, Assign):
        return x.var == y.var and x.expr == y.expr
    if isinstance(x, If):
        return x.cond == y.cond and _units_equal(x.then, y.then) and _units_equal(x.orelse, y.orelse)
    if isinstance(x, While):
        return x.cond == y.cond and _units_equal(x.body, y.body)
    if isinstance(x, For):
        return (
            x.var == y.var
            and x.start == y.start
            and x.stop == y.stop
            and _units_equal(x.body, y.body)
        )
    if isinstance(x, OutputWrapper):
        return _unit_equal(x.worker, y.worker)
    raise IRError(f"unknown unit type: {type(x).__name__}")


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

_EXPR_KINDS = {"literal", "var", "binary", "not"}


def expr_to_dict(expr: Expr) -> dict[str, Any]:
    if isinstance(expr, Literal):
        return {"kind": "literal", "value": expr.value.to_dict()}
    if isinstance(expr, Var):
        return {"kind": "var", "name": expr.name}
    if isinstance(expr, Binary):
        return {
            "kind": "binary",
            "op": expr.op,
            "lhs": expr_to_dict(expr.lhs),
            "rhs": expr_to_dict(expr.rhs),
        }
    if isinstance(expr, Not):
        return {"kind": "not", "expr": expr_to_dict(expr.expr)}
    raise IRError(f"unknown expression node: {expr!r}")


def expr_from_dict(data: dict[str, Any]) -> Expr:
    kind = data.get("kind")
    if kind == "literal":
        return Literal(Value.from_dict(data["value"]))
    if kind == "var":
        return Var(data["name"])
    if kind == "binary":
        return Binary(data["op"], expr_from_dict(data["lhs"]), expr_from_dict(data["rhs"]))
    if kind == "not":
        return Not(expr_from_dict(data["expr"]))
    raise IRError(f"unknown expression kind: {kind!r}")


def _meta_to_dict(meta: BlockMeta) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if not meta.enabled:
        out["enabled"] = False
    if meta.collapsed:
        out["collapsed"] = True
    if meta.comment is not None:
        out["comment"] = meta.comment
    out.update(meta.extra)
    return out


def _meta_from_dict(data: dict[str, Any]) -> BlockMeta:
    data = dict(data)
    return BlockMeta(
        enabled=data.pop("enabled", True),
        collapsed=data.pop("collapsed", False),
        comment=data.pop("comment", None),
        extra=data,
    )


def _input_source_to_dict(source: InputSource) -> dict[str, Any]:
    if isinstance(source, ConsoleInput):
        return {"kind": "console_input", "prompt": source.prompt_text}
    return {"kind": "variable_ref", "name": source.name}


def unit_to_dict(unit: Unit) -> dict[str, Any]:
    """Serialize one unit to its wire form (`kind` discriminator first)."""
    out: dict[str, Any]
    if isinstance(unit, WorkerSpec):
        out = {
            "kind": "worker",
            "id": unit.id,
            "name": unit.name,
            "preworkers": [
                unit_to_dict(p) if isinstance(p, WorkerSpec) else _input_source_to_dict(p)
                for p in unit.preworkers
            ],
            "prompt": unit.prompt_ref,
            "engine": unit.engine_ref,
        }
    elif isinstance(unit, ContainerSpec):
        out = {
            "kind": "container",
            "id": unit.id,
            "name": unit.name,
            "preunits": [unit_to_dict(u) for u in unit.preunits],
            "units": [unit_to_dict(u) for u in unit.units],
        }
    elif isinstance(unit, ConsoleOutput):
        out = {"kind": "console_output", "id": unit.id, "expr": expr_to_dict(unit.expr)}
    elif isinstance(unit, Assign):
        out = {"kind": "assign", "id": unit.id, "var": unit.var, "expr": expr_to_dict(unit.expr)}
    elif isinstance(unit, If):
        out = {
            "kind": "if",
            "id": unit.id,
            "cond": expr_to_dict(unit.cond),
            "then": [unit_to_dict(u) for u in unit.then],
            "else": [unit_to_dict(u) for u in unit.orelse],
        }
    elif isinstance(unit, While):
        out = {
            "kind": "while",
            "id": unit.id,
            "cond": expr_to_dict(unit.cond),
            "body": [unit_to_dict(u) for u in unit.body],
        }
    elif isinstance(unit, For):
        out = {
            "kind": "for",
            "id": unit.id,
            "var": unit.var,
            "from": expr_to_dict(unit.start),
            "to": expr_to_dict(unit.stop),
            "body": [unit_to_dict(u) for u in unit.body],
        }
    elif isinstance(unit, OutputWrapper):
        out = {"kind": "output", "id": unit.id, "worker": unit_to_dict(unit.worker)}
    else:
        raise IRError(f"unknown unit type: {type(unit).__name__}")

    meta = _meta_to_dict(unit.meta)
    if meta:
        out["meta"] = meta
    out.update(unit.extra)
    return out


_KNOWN_UNIT_KEYS = {
    "worker": {"kind", "id", "name", "preworkers", "prompt", "engine", "meta"},
    "container": {"kind", "id", "name", "preunits", "units", "meta"},
    "console_output": {"kind", "id", "expr", "meta"},
    "assign": {"kind", "id", "var", "expr", "meta"},
    "if": {"kind", "id", "cond", "then", "else", "meta"},
    "while": {"kind", "id", "cond", "body", "meta"},
    "for": {"kind", "id", "var", "from", "to", "body", "meta"},
    "output": {"kind", "id", "worker", "meta"},
}


def unit_from_dict(data: dict[str, Any]) -> Unit:
    """Parse one unit from its wire form; unknown fields are kept in `extra`."""
    if not isinstance(data, dict):
        raise IRError(f"unit must be an object, got {type(data).__name__}")
    kind = data.get("kind")
    if kind not in _KNOWN_UNIT_KEYS:
        raise IRError(f"unknown unit kind: {kind!r}")
    common = {
        "id": data.get("id") or new_unit_id(),
        "meta": _meta_from_dict(data.get("meta", {})),
        "extra": {k: v for k, v in data.items() if k not in _KNOWN_UNIT_KEYS[kind]},
    }
    try:
        if kind == "worker":
            return WorkerSpec(
                name=data["name"],
                prompt_ref=data["prompt"],
                engine_ref=data["engine"],
                preworkers=[_preworker_from_dict(p) for p in data.get("preworkers", [])],
                **common,
            )
        if kind == "container":
            return ContainerSpec(
                name=data["name"],
                preunits=[unit_from_dict(u) for u in data.get("preunits", [])],
                units=[unit_from_dict(u) for u in data.get("units", [])],
                **common,
            )
        if kind == "console_output":
            return ConsoleOutput(expr=expr_from_dict(data["expr"]), **common)
        if kind == "assign":
            return Assign(var=data["var"], expr=expr_from_dict(data["expr"]), **common)
        if kind == "if":
            return If(
                cond=expr_from_dict(data["cond"]),
                then=[unit_from_dict(u) for u in data.get("then", [])],
                orelse=[unit_from_dict(u) for u in data.get("else", [])],
                **common,
            )
        if kind == "while":
            return While(
                cond=expr_from_dict(data["cond"]),
                body=[unit_from_dict(u) for u in data.get("body", [])],
                **common,
            )
        if kind == "for":
            return For(
                var=data["var"],
                start=expr_from_dict(data["from"]),
                stop=expr_from_dict(data["to"]),
                body=[unit_from_dict(u) for u in data.get("body", [])],
                **common,
            )
        worker = unit_from_dict(data["worker"])
        if not isinstance(worker, WorkerSpec):
            raise IRError("output block must contain a worker")
        return OutputWrapper(worker=worker, **common)
    except KeyError as exc:
        raise IRError(f"unit kind {kind!r} is missing field {exc.args[0]!r}") from exc


def _preworker_from_dict(data: dict[str, Any]) -> Union[InputSource, WorkerSpec]:
    kind = data.get("kind")
    if kind == "console_input":
        return ConsoleInput(prompt_text=data.get("prompt", ""))
    if kind == "variable_ref":
        return VariableRef(name=data["name"])
    if kind == "worker":
        worker = unit_from_dict(data)
        assert isinstance(worker, WorkerSpec)
        return worker
    raise IRError(f"unknown preworker kind: {kind!r}")


_PROGRAM_KEYS = {"name", "variables", "chain"}


def program_to_dict(program: ChainProgram) -> dict[str, Any]:
    """Program fields of the project document: name, variables, chain."""
    out: dict[str, Any] = {
        "name": program.name,
        "variables": [
            {"name": name, "value": value.to_dict()} for name, value in program.variables
        ],
        "chain": [unit_to_dict(u) for u in program.top_level],
    }
    out.update(program.extra)
    return out


def program_from_dict(data: dict[str, Any], *, reserved: set[str] = frozenset()) -> ChainProgram:
    """Inverse of :func:`program_to_dict`; `reserved` keys belong to the caller."""
    variables: list[tuple[str, Value]] = []
    for entry in data.get("variables", []):
        variables.append((entry["name"], Value.from_dict(entry["value"])))
    skip = _PROGRAM_KEYS | set(reserved)
    return ChainProgram(
        name=data.get("name", ""),
        variables=variables,
        top_level=[unit_from_dict(u) for u in data.get("chain", [])],
        extra={k: v for k, v in data.items() if k not in skip},
    )


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------


class EvalError(Exception):
    """Runtime expression failure: unbound variable or bad operand types."""


def eval_expr(env: dict[str, Value], expr: Expr) -> Value:
    """Evaluate `expr` against immutable bindings `env`. Pure.

    Coercion rules: ordering comparisons require both operands numeric (text
    parsing as a finite number counts); `==`/`!=` compare numerically when
    both operands coerce, else compare text forms; `+` adds when both
    coerce, else concatenates text forms; `contains` is a substring test on
    text forms; `and`/`or`/`not` use truthiness and yield booleans.
    """
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in env:
            raise EvalError(f"unbound variable {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, Not):
        return Value.boolean(not eval_expr(env, expr.expr).as_bool())
    if isinstance(expr, Binary):
        if expr.op == "and":
            return Value.boolean(
                eval_expr(env, expr.lhs).as_bool() and eval_expr(env, expr.rhs).as_bool()
            )
        if expr.op == "or":
            return Value.boolean(
                eval_expr(env, expr.lhs).as_bool() or eval_expr(env, expr.rhs).as_bool()
            )
        lhs = eval_expr(env, expr.lhs)
        rhs = eval_expr(env, expr.rhs)
        if expr.op == "contains":
            return Value.boolean(rhs.as_text() in lhs.as_text())
        left_num, right_num = lhs.as_number(), rhs.as_number()
        if expr.op in ("<", "<=", ">", ">="):
            if left_num is None or right_num is None:
                raise EvalError(f"non-numeric operand to ordering comparison {expr.op!r}")
            if expr.op == "<":
                return Value.boolean(left_num < right_num)
            if expr.op == "<=":
                return Value.boolean(left_num <= right_num)
            if expr.op == ">":
                return Value.boolean(left_num > right_num)
            return Value.boolean(left_num >= right_num)
        if expr.op in ("==", "!="):
            if left_num is not None and right_num is not None:
                equal = left_num == right_num
            else:
                equal = lhs.as_text() == rhs.as_text()
            return Value.boolean(equal if expr.op == "==" else not equal)
        if expr.op == "+":
            if left_num is not None and right_num is not None:
                total = left_num + right_num
                if not math.isfinite(total):
                    raise EvalError("numeric overflow in addition")
                return Value.number(total)
            return Value.text(lhs.as_text() + rhs.as_text())
        raise EvalError(f"unknown operator {expr.op!r}")
    raise EvalError(f"unknown expression node {expr!r}")


# ---------------------------------------------------------------------------
# Expression parsing (used by the code-exec engine and the debug REPL)
# ---------------------------------------------------------------------------


class ExprSyntaxError(Exception):
    """Raised when text does not parse as an expression."""


_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<string>"[^"]*"|'[^']*')
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>==|!=|<=|>=|<|>|\+|\(|\))
    )""",
    re.VERBOSE,
)

_KEYWORD_OPS = {"and", "or", "not", "contains", "true", "false"}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise ExprSyntaxError(f"unexpected character {text[pos:].strip()[0]!r} at offset {pos}")
        pos = match.end()
        for group, token in match.groupdict().items():
            if token is not None:
                tokens.append((group, token))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        token = self.peek()
        if token is None:
            raise ExprSyntaxError("unexpected end of expression")
        self.pos += 1
        return token

    def parse(self) -> Expr:
        expr = self.or_expr()
        if self.peek() is not None:
            raise ExprSyntaxError(f"trailing input at token {self.peek()[1]!r}")
        return expr

    def or_expr(self) -> Expr:
        expr = self.and_expr()
        while self._keyword("or"):
            expr = Binary("or", expr, self.and_expr())
        return expr

    def and_expr(self) -> Expr:
        expr = self.not_expr()
        while self._keyword("and"):
            expr = Binary("and", expr, self.not_expr())
        return expr

    def not_expr(self) -> Expr:
        if self._keyword("not"):
            return Not(self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        expr = self.add_expr()
        token = self.peek()
        if token is not None and (
            token[0] == "op" and token[1] in ("==", "!=", "<", "<=", ">", ">=")
            or token == ("ident", "contains")
        ):
            self.take()
            return Binary(token[1], expr, self.add_expr())
        return expr

    def add_expr(self) -> Expr:
        expr = self.primary()
        while True:
            token = self.peek()
            if token == ("op", "+"):
                self.take()
                expr = Binary("+", expr, self.primary())
            else:
                return expr

    def primary(self) -> Expr:
        group, token = self.take()
        if group == "number":
            number = float(token)
            return Literal(Value.number(int(number) if number.is_integer() else number))
        if group == "string":
            return Literal(Value.text(token[1:-1]))
        if group == "ident":
            if token == "true":
                return Literal(Value.boolean(True))
            if token == "false":
                return Literal(Value.boolean(False))
            if token in _KEYWORD_OPS:
                raise ExprSyntaxError(f"unexpected keyword {token!r}")
            return Var(token)
        if token == "(":
            expr = self.or_expr()
            closing = self.take()
            if closing != ("op", ")"):
                raise ExprSyntaxError("expected ')'")
            return expr
        raise ExprSyntaxError(f"unexpected token {token!r}")

    def _keyword(self, word: str) -> bool:
        if self.peek() == ("ident", word):
            self.take()
            return True
        return False


def parse_expr(text: str) -> Expr:
    """Parse expression text into an :data:`Expr` tree.

    Grammar, loosest to tightest binding: `or`, `and`, `not`, a single
    comparison (`== != < <= > >= contains`), then `+`.  Literals are numbers,
    single- or double-quoted strings, `true`/`false`.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ExprSyntaxError("empty expression")
    return _Parser(tokens).parse()
