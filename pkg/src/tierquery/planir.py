"""Relational plan IR: expression trees, operator chain, validation, text form.

Plans are rooted chains: a Read source followed by zero or more of Filter,
Project, Aggregate, Sort.  Expressions are immutable trees; array elements are
addressed with 1-based ordinals.  The text serialization is line-oriented with
``registry`` / ``schema`` / ``node`` sections; node bodies and expressions are
s-expressions.  Comparison, boolean, and arithmetic operators are core;
named scalar functions and aggregate functions must be declared in the
registry section of the text form.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .columnar import DataType, Field, Schema, datatype_from_name
from .errors import GrammarError, UnknownFunction

SCALAR_FUNCTIONS = ("sqrt", "cosh", "cos", "abs")
AGGREGATE_FUNCTIONS = ("min", "max", "sum", "count", "avg", "median")
DECOMPOSABLE_AGGREGATES = ("min", "max", "sum", "count", "avg")

CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/", "%")

# Internal marker for predicate type checking; not a storable column type.
BOOL = "bool"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class Expr:
    """Base class; all variants are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class ColumnRef(Expr):
    name: str


@dataclass(frozen=True)
class Literal(Expr):
    value: object
    dtype: DataType


@dataclass(frozen=True)
class ArrayIndex(Expr):
    column: Expr  # must be a ColumnRef of list type
    index: int  # 1-based ordinal


@dataclass(frozen=True)
class Cmp(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Arith(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Func(Expr):
    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class And(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Or(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Between(Expr):
    expr: Expr
    lo: Expr
    hi: Expr


@dataclass(frozen=True)
class IsNotNull(Expr):
    expr: Expr


def expr_children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, (ColumnRef, Literal)):
        return ()
    if isinstance(expr, ArrayIndex):
        return (expr.column,)
    if isinstance(expr, (Cmp, Arith)):
        return (expr.lhs, expr.rhs)
    if isinstance(expr, Func):
        return expr.args
    if isinstance(expr, (And, Or)):
        return expr.terms
    if isinstance(expr, Between):
        return (expr.expr, expr.lo, expr.hi)
    if isinstance(expr, IsNotNull):
        return (expr.expr,)
    raise TypeError(f"not an expression: {expr!r}")


def walk_expr(expr: Expr) -> Iterable[Expr]:
    yield expr
    for child in expr_children(expr):
        yield from walk_expr(child)


def expr_contains_array_access(expr: Expr) -> bool:
    return any(isinstance(e, ArrayIndex) for e in walk_expr(expr))


def expr_column_refs(expr: Expr) -> list[str]:
    return [e.name for e in walk_expr(expr) if isinstance(e, ColumnRef)]


def expr_function_names(expr: Expr) -> set[str]:
    return {e.name for e in walk_expr(expr) if isinstance(e, Func)}


def rewrite_column_refs(expr: Expr, mapping: dict[str, str]) -> Expr:
    """Return a copy of expr with column names substituted."""
    if isinstance(expr, ColumnRef):
        return ColumnRef(mapping.get(expr.name, expr.name))
    if isinstance(expr, Literal):
        return expr
    if isinstance(expr, ArrayIndex):
        return ArrayIndex(rewrite_column_refs(expr.column, mapping), expr.index)
    if isinstance(expr, Cmp):
        return Cmp(expr.op, rewrite_column_refs(expr.lhs, mapping),
                   rewrite_column_refs(expr.rhs, mapping))
    if isinstance(expr, Arith):
        return Arith(expr.op, rewrite_column_refs(expr.lhs, mapping),
                     rewrite_column_refs(expr.rhs, mapping))
    if isinstance(expr, Func):
        return Func(expr.name, tuple(rewrite_column_refs(a, mapping) for a in expr.args))
    if isinstance(expr, And):
        return And(tuple(rewrite_column_refs(t, mapping) for t in expr.terms))
    if isinstance(expr, Or):
        return Or(tuple(rewrite_column_refs(t, mapping) for t in expr.terms))
    if isinstance(expr, Between):
        return Between(rewrite_column_refs(expr.expr, mapping),
                       rewrite_column_refs(expr.lo, mapping),
                       rewrite_column_refs(expr.hi, mapping))
    if isinstance(expr, IsNotNull):
        return IsNotNull(rewrite_column_refs(expr.expr, mapping))
    raise TypeError(f"not an expression: {expr!r}")


# ---------------------------------------------------------------------------
# Plan nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Read:
    table_ref: str
    base_schema: Schema | None = None
    inline_filter: Expr | None = None


@dataclass(frozen=True)
class Filter:
    predicate: Expr


@dataclass(frozen=True)
class Project:
    outputs: tuple[tuple[Expr, str], ...]


@dataclass(frozen=True)
class Measure:
    fn: str
    expr: Expr | None  # None only for count(*)
    name: str
    # Final-phase avg merges a (sum, count) state pair; count_expr addresses
    # the count column.  Unused in full/partial phases.
    count_expr: Expr | None = None


@dataclass(frozen=True)
class Aggregate:
    groupings: tuple[str, ...]
    measures: tuple[Measure, ...]
    phase: str = "full"  # full | partial | final


@dataclass(frozen=True)
class SortKey:
    expr: Expr
    ascending: bool = True


@dataclass(frozen=True)
class Sort:
    keys: tuple[SortKey, ...]


PlanNode = (Read, Filter, Project, Aggregate, Sort)


@dataclass(frozen=True)
class Plan:
    nodes: tuple
    annotations: tuple[tuple[str, str], ...] = ()

    def __len__(self) -> int:
        return len(self.nodes)

    def with_annotations(self, items: dict[str, str]) -> "Plan":
        merged = dict(self.annotations)
        merged.update(items)
        return Plan(self.nodes, tuple(sorted(merged.items())))

    @property
    def annotation_map(self) -> dict[str, str]:
        return dict(self.annotations)


class OpClass(Enum):
    OP1 = 1  # single parent, 1:1
    OP2 = 2  # single parent, 1:x with x <= 1
    OP3 = 3  # single parent, 1:x with x > 1 (recognized, rejected)
    OP4 = 4  # dual parent (recognized, rejected)


_NAME_CLASSES = {
    "read": OpClass.OP1,
    "sort": OpClass.OP1,
    "filter": OpClass.OP2,
    "project": OpClass.OP2,
    "aggregate": OpClass.OP2,
    "expand": OpClass.OP3,
    "join": OpClass.OP4,
    "set": OpClass.OP4,
}


def node_name(node) -> str:
    return type(node).__name__.lower()


def classify(node) -> OpClass:
    """Operator class of a plan node or a bare operator name."""
    name = node if isinstance(node, str) else node_name(node)
    try:
        return _NAME_CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown operator {name!r}") from None


def node_exprs(node) -> list[Expr]:
    if isinstance(node, Read):
        return [node.inline_filter] if node.inline_filter is not None else []
    if isinstance(node, Filter):
        return [node.predicate]
    if isinstance(node, Project):
        return [e for e, _ in node.outputs]
    if isinstance(node, Aggregate):
        out = []
        for m in node.measures:
            if m.expr is not None:
                out.append(m.expr)
            if m.count_expr is not None:
                out.append(m.count_expr)
        return out
    if isinstance(node, Sort):
        return [k.expr for k in node.keys]
    raise TypeError(f"not a plan node: {node!r}")


def contains_array_access(obj) -> bool:
    """True iff any ArrayIndex occurs in a plan, node, or expression."""
    if isinstance(obj, Plan):
        return any(contains_array_access(n) for n in obj.nodes)
    if isinstance(obj, Expr):
        return expr_contains_array_access(obj)
    return any(expr_contains_array_access(e) for e in node_exprs(obj))


def node_function_names(node) -> set[str]:
    names: set[str] = set()
    for e in node_exprs(node):
        names |= expr_function_names(e)
    if isinstance(node, Aggregate):
        names |= {m.fn for m in node.measures}
    return names


def plan_function_names(plan: Plan) -> set[str]:
    names: set[str] = set()
    for n in plan.nodes:
        names |= node_function_names(n)
    return names


# ---------------------------------------------------------------------------
# Typing and validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    node_index: int | None
    message: str

    def __str__(self):
        where = f"node {self.node_index}: " if self.node_index is not None else ""
        return where + self.message


class _TypeError(Exception):
    pass


def _numeric(kind) -> bool:
    return kind in (DataType.INT32, DataType.INT64, DataType.FLOAT64)


def _promote(a: DataType, b: DataType) -> DataType:
    if DataType.FLOAT64 in (a, b):
        return DataType.FLOAT64
    return DataType.INT64


def infer_expr_type(expr: Expr, schema: Schema):
    """Result kind of an expression: a DataType, or BOOL for predicates.

    Raises _TypeError with a message when the tree is ill-typed against the
    schema; validate() converts these into diagnostics.
    """
    if isinstance(expr, ColumnRef):
        try:
            return schema.field(expr.name).dtype
        except KeyError:
            raise _TypeError(f"unknown column {expr.name!r}") from None
    if isinstance(expr, Literal):
        return expr.dtype
    if isinstance(expr, ArrayIndex):
        if not isinstance(expr.column, ColumnRef):
            raise _TypeError("array index must apply directly to a column")
        base = infer_expr_type(expr.column, schema)
        if not isinstance(base, DataType) or not base.is_list:
            raise _TypeError(
                f"array index on non-list column {expr.column.name!r} ({base})")
        if expr.index < 1:
            raise _TypeError(f"array ordinal must be >= 1, got {expr.index}")
        return base.element_type
    if isinstance(expr, Cmp):
        lt = infer_expr_type(expr.lhs, schema)
        rt = infer_expr_type(expr.rhs, schema)
        if lt is DataType.UTF8 and rt is DataType.UTF8 and expr.op in ("=", "!="):
            return BOOL
        if not (_numeric(lt) and _numeric(rt)):
            raise _TypeError(f"comparison {expr.op} over non-numeric operands ({lt}, {rt})")
        return BOOL
    if isinstance(expr, Arith):
        lt = infer_expr_type(expr.lhs, schema)
        rt = infer_expr_type(expr.rhs, schema)
        if not (_numeric(lt) and _numeric(rt)):
            raise _TypeError(f"arithmetic {expr.op} over non-numeric operands ({lt}, {rt})")
        if expr.op == "%":
            return _promote(lt, rt)
        return _promote(lt, rt)
    if isinstance(expr, Func):
        if expr.name not in SCALAR_FUNCTIONS:
            raise _TypeError(f"unknown scalar function {expr.name!r}")
        if len(expr.args) != 1:
            raise _TypeError(f"{expr.name} takes one argument")
        at = infer_expr_type(expr.args[0], schema)
        if not _numeric(at):
            raise _TypeError(f"{expr.name} over non-numeric operand ({at})")
        return at if expr.name == "abs" else DataType.FLOAT64
    if isinstance(expr, (And, Or)):
        for t in expr.terms:
            if infer_expr_type(t, schema) is not BOOL:
                raise _TypeError("boolean connective over non-predicate term")
        return BOOL
    if isinstance(expr, Between):
        for part in (expr.expr, expr.lo, expr.hi):
            if not _numeric(infer_expr_type(part, schema)):
                raise _TypeError("between over non-numeric operand")
        return BOOL
    if isinstance(expr, IsNotNull):
        infer_expr_type(expr.expr, schema)
        return BOOL
    raise _TypeError(f"not an expression: {expr!r}")


def measure_result_type(fn: str, input_type: DataType | None) -> DataType:
    if fn == "count":
        return DataType.INT64
    if fn == "avg":
        return DataType.FLOAT64
    if fn == "sum":
        return DataType.FLOAT64 if input_type is DataType.FLOAT64 else DataType.INT64
    # min/max/median keep the input type
    return input_type


def _aggregate_output_fields(node: Aggregate, input_schema: Schema) -> list[Field]:
    fields = []
    for g in node.groupings:
        f = input_schema.field(g)
        fields.append(Field(g, f.dtype, f.nullable))
    for m in node.measures:
        in_type = None
        if m.expr is not None:
            kind = infer_expr_type(m.expr, input_schema)
            if kind is BOOL or (isinstance(kind, DataType) and kind.is_list):
                raise _TypeError(f"measure {m.fn} over non-scalar expression")
            in_type = kind
        elif m.fn != "count":
            raise _TypeError(f"measure {m.fn} requires an argument")
        if m.fn not in AGGREGATE_FUNCTIONS:
            raise _TypeError(f"unknown aggregate function {m.fn!r}")
        if m.fn != "count" and in_type is not None and not _numeric(in_type):
            raise _TypeError(f"measure {m.fn} over non-numeric expression ({in_type})")
        if node.phase == "partial" and m.fn == "avg":
            fields.append(Field(m.name + "_sum", DataType.FLOAT64, True))
            fields.append(Field(m.name + "_cnt", DataType.INT64, False))
            continue
        if node.phase == "final" and m.fn == "avg":
            fields.append(Field(m.name, DataType.FLOAT64, True))
            continue
        result = measure_result_type(m.fn, in_type)
        nullable = m.fn != "count"
        fields.append(Field(m.name, result, nullable))
    return fields


def node_output_schema(node, input_schema: Schema | None) -> Schema:
    """Schema produced by one node given its input schema.

    Raises _TypeError for ill-typed nodes; use validate() for diagnostics.
    """
    if isinstance(node, Read):
        if node.base_schema is None:
            raise _TypeError("read node lacks a base schema")
        if node.inline_filter is not None:
            if infer_expr_type(node.inline_filter, node.base_schema) is not BOOL:
                raise _TypeError("read inline filter is not a predicate")
        return node.base_schema
    if input_schema is None:
        raise _TypeError("non-read node has no input")
    if isinstance(node, Filter):
        if infer_expr_type(node.predicate, input_schema) is not BOOL:
            raise _TypeError("filter predicate is not a predicate")
        return input_schema
    if isinstance(node, Project):
        names = [name for _, name in node.outputs]
        if len(set(names)) != len(names):
            raise _TypeError(f"duplicate project output names: {names}")
        fields = []
        for expr, name in node.outputs:
            kind = infer_expr_type(expr, input_schema)
            if kind is BOOL:
                raise _TypeError(f"project output {name!r} has no storable type")
            nullable = True
            if isinstance(expr, ColumnRef):
                nullable = input_schema.field(expr.name).nullable
            fields.append(Field(name, kind, nullable))
        return Schema(tuple(fields))
    if isinstance(node, Aggregate):
        if node.phase not in ("full", "partial", "final"):
            raise _TypeError(f"unknown aggregate phase {node.phase!r}")
        for g in node.groupings:
            try:
                f = input_schema.field(g)
            except KeyError:
                raise _TypeError(f"unknown grouping column {g!r}") from None
            if f.dtype.is_list:
                raise _TypeError(f"cannot group by list column {g!r}")
        names = list(node.groupings) + [m.name for m in node.measures]
        if len(set(names)) != len(names):
            raise _TypeError(f"duplicate aggregate output names: {names}")
        if node.phase == "final":
            for m in node.measures:
                if m.fn == "avg" and m.count_expr is None:
                    raise _TypeError(f"final avg measure {m.name!r} lacks its count column")
        return Schema(tuple(_aggregate_output_fields(node, input_schema)))
    if isinstance(node, Sort):
        for k in node.keys:
            kind = infer_expr_type(k.expr, input_schema)
            if kind is BOOL or (isinstance(kind, DataType) and kind.is_list):
                raise _TypeError("sort key must be a scalar expression")
        return input_schema
    raise _TypeError(f"not a plan node: {node!r}")


def output_schema(plan: Plan) -> Schema:
    """Schema of the plan's final node; raises on ill-typed plans."""
    schema = None
    for node in plan.nodes:
        schema = node_output_schema(node, schema)
    if schema is None:
        raise _TypeError("empty plan")
    return schema


def validate(plan: Plan) -> list[Diagnostic]:
    """Full structural and type validation; empty list means valid."""
    diags: list[Diagnostic] = []
    if not plan.nodes:
        return [Diagnostic(None, "plan has no nodes")]
    if not isinstance(plan.nodes[0], Read):
        diags.append(Diagnostic(0, "plan must start with a read node"))
    for i, node in enumerate(plan.nodes[1:], start=1):
        if isinstance(node, Read):
            diags.append(Diagnostic(i, "read is only allowed as the first node"))
        elif not isinstance(node, PlanNode):
            diags.append(Diagnostic(i, f"unsupported operator {node!r}"))
    if diags:
        return diags
    schema = None
    for i, node in enumerate(plan.nodes):
        try:
            schema = node_output_schema(node, schema)
        except _TypeError as exc:
            diags.append(Diagnostic(i, str(exc)))
            break
    return diags


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------

_BARE_ATOM = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_HEADER = "tierplan 1"


def _quote_atom(text: str) -> str:
    if _BARE_ATOM.match(text):
        return text
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _expr_to_sexpr(expr: Expr) -> str:
    if isinstance(expr, ColumnRef):
        return f"(col {_quote_atom(expr.name)})"
    if isinstance(expr, Literal):
        if expr.value is None:
            return f"(null {expr.dtype.value})"
        if expr.dtype is DataType.INT32:
            return f"(i32 {expr.value})"
        if expr.dtype is DataType.INT64:
            return f"(i64 {expr.value})"
        if expr.dtype is DataType.FLOAT64:
            return f"(f64 {expr.value!r})"
        if expr.dtype is DataType.UTF8:
            return f"(str {_quote_atom(str(expr.value))})"
        raise ValueError(f"cannot serialize literal of type {expr.dtype}")
    if isinstance(expr, ArrayIndex):
        return f"(idx {_expr_to_sexpr(expr.column)} {expr.index})"
    if isinstance(expr, Cmp):
        return f"({expr.op} {_expr_to_sexpr(expr.lhs)} {_expr_to_sexpr(expr.rhs)})"
    if isinstance(expr, Arith):
        return f"({expr.op} {_expr_to_sexpr(expr.lhs)} {_expr_to_sexpr(expr.rhs)})"
    if isinstance(expr, Func):
        args = " ".join(_expr_to_sexpr(a) for a in expr.args)
        return f"({expr.name} {args})"
    if isinstance(expr, And):
        return "(and " + " ".join(_expr_to_sexpr(t) for t in expr.terms) + ")"
    if isinstance(expr, Or):
        return "(or " + " ".join(_expr_to_sexpr(t) for t in expr.terms) + ")"
    if isinstance(expr, Between):
        return (f"(between {_expr_to_sexpr(expr.expr)} "
                f"{_expr_to_sexpr(expr.lo)} {_expr_to_sexpr(expr.hi)})")
    if isinstance(expr, IsNotNull):
        return f"(notnull {_expr_to_sexpr(expr.expr)})"
    raise TypeError(f"not an expression: {expr!r}")


def _node_to_sexpr(node) -> str:
    if isinstance(node, Read):
        parts = ["read", _quote_atom(node.table_ref)]
        if node.inline_filter is not None:
            parts.append(f"(filter {_expr_to_sexpr(node.inline_filter)})")
        return "(" + " ".join(parts) + ")"
    if isinstance(node, Filter):
        return f"(filter {_expr_to_sexpr(node.predicate)})"
    if isinstance(node, Project):
        outs = " ".join(f"(out {_expr_to_sexpr(e)} {_quote_atom(n)})"
                        for e, n in node.outputs)
        return f"(project {outs})"
    if isinstance(node, Aggregate):
        groups = "(groups" + "".join(" " + _quote_atom(g) for g in node.groupings) + ")"
        ms = []
        for m in node.measures:
            body = "star" if m.expr is None else _expr_to_sexpr(m.expr)
            extra = "" if m.count_expr is None else " " + _expr_to_sexpr(m.count_expr)
            ms.append(f"(measure {m.fn} {body} {_quote_atom(m.name)}{extra})")
        measures = "(measures " + " ".join(ms) + ")" if ms else "(measures)"
        return f"(aggregate {node.phase} {groups} {measures})"
    if isinstance(node, Sort):
        keys = " ".join(
            f"(key {_expr_to_sexpr(k.expr)} {'asc' if k.ascending else 'desc'})"
            for k in node.keys)
        return f"(sort {keys})"
    raise TypeError(f"not a plan node: {node!r}")


def plan_to_text(plan: Plan) -> bytes:
    """Serialize a plan to its UTF-8 text form.

    The registry section lists every non-core function the plan uses, so each
    serialized subplan is self-contained.  The schema section carries the read
    node's base schema, making the plan self-describing.
    """
    out = io.StringIO()
    out.write(_HEADER + "\n")
    used = sorted(plan_function_names(plan))
    out.write("registry" + "".join(" " + name for name in used) + "\n")
    for node in plan.nodes:
        if isinstance(node, Read) and node.base_schema is not None:
            out.write(f"schema {_quote_atom(node.table_ref)}\n")
            for f in node.base_schema.fields:
                null = "nullable" if f.nullable else "required"
                out.write(f"field {_quote_atom(f.name)} {f.dtype.value} {null}\n")
            out.write("endschema\n")
    for node in plan.nodes:
        out.write("node " + _node_to_sexpr(node) + "\n")
    for key, value in plan.annotations:
        out.write(f"annotation {_quote_atom(key)} {_quote_atom(value)}\n")
    out.write("end\n")
    return out.getvalue().encode("utf-8")


# -- s-expression reader ----------------------------------------------------

class _SexprReader:
    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.pos = 0

    def error(self, message: str) -> GrammarError:
        return GrammarError(message, line=self.line, column=self.pos + 1)

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self._skip_ws()
        return self.pos >= len(self.text)

    def read(self):
        """Next value: nested list for (...) or an atom string."""
        self._skip_ws()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of expression")
        ch = self.text[self.pos]
        if ch == "(":
            self.pos += 1
            items = []
            while True:
                self._skip_ws()
                if self.pos >= len(self.text):
                    raise self.error("unterminated '('")
                if self.text[self.pos] == ")":
                    self.pos += 1
                    return items
                items.append(self.read())
        if ch == ")":
            raise self.error("unbalanced ')'")
        if ch == '"':
            self.pos += 1
            out = []
            while True:
                if self.pos >= len(self.text):
                    raise self.error("unterminated string")
                c = self.text[self.pos]
                self.pos += 1
                if c == '"':
                    return "".join(out)
                if c == "\\":
                    if self.pos >= len(self.text):
                        raise self.error("dangling escape")
                    out.append(self.text[self.pos])
                    self.pos += 1
                else:
                    out.append(c)
        start = self.pos
        while (self.pos < len(self.text)
               and not self.text[self.pos].isspace()
               and self.text[self.pos] not in "()"):
            self.pos += 1
        return self.text[start:self.pos]


class _PlanTextParser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.registry: set[str] = set()
        self.schemas: dict[str, Schema] = {}

    def _err(self, line_no: int, message: str) -> GrammarError:
        return GrammarError(message, line=line_no, column=1)

    def _check_function(self, name: str, line_no: int):
        if name in self.registry:
            if name not in SCALAR_FUNCTIONS and name not in AGGREGATE_FUNCTIONS:
                raise UnknownFunction(
                    f"registry declares {name!r}, which this engine does not define")
            return
        raise UnknownFunction(f"function {name!r} is not in the plan registry")

    def parse_expr(self, sexpr, line_no: int) -> Expr:
        if isinstance(sexpr, str):
            raise self._err(line_no, f"expected expression, got atom {sexpr!r}")
        if not sexpr:
            raise self._err(line_no, "empty expression")
        head = sexpr[0]
        args = sexpr[1:]
        if head == "col":
            if len(args) != 1 or not isinstance(args[0], str):
                raise self._err(line_no, "col takes one name")
            return ColumnRef(args[0])
        if head in ("i32", "i64"):
            dtype = DataType.INT32 if head == "i32" else DataType.INT64
            return Literal(int(args[0]), dtype)
        if head == "f64":
            return Literal(float(args[0]), DataType.FLOAT64)
        if head == "str":
            return Literal(args[0], DataType.UTF8)
        if head == "null":
            return Literal(None, datatype_from_name(args[0]))
        if head == "idx":
            if len(args) != 2:
                raise self._err(line_no, "idx takes a column and an ordinal")
            return ArrayIndex(self.parse_expr(args[0], line_no), int(args[1]))
        if head in CMP_OPS:
            if len(args) != 2:
                raise self._err(line_no, f"{head} takes two operands")
            return Cmp(head, self.parse_expr(args[0], line_no),
                       self.parse_expr(args[1], line_no))
        if head in ARITH_OPS:
            if len(args) != 2:
                raise self._err(line_no, f"{head} takes two operands")
            return Arith(head, self.parse_expr(args[0], line_no),
                         self.parse_expr(args[1], line_no))
        if head == "and":
            return And(tuple(self.parse_expr(a, line_no) for a in args))
        if head == "or":
            return Or(tuple(self.parse_expr(a, line_no) for a in args))
        if head == "between":
            if len(args) != 3:
                raise self._err(line_no, "between takes three operands")
            return Between(*(self.parse_expr(a, line_no) for a in args))
        if head == "notnull":
            if len(args) != 1:
                raise self._err(line_no, "notnull takes one operand")
            return IsNotNull(self.parse_expr(args[0], line_no))
        if isinstance(head, str):
            self._check_function(head, line_no)
            return Func(head, tuple(self.parse_expr(a, line_no) for a in args))
        raise self._err(line_no, f"bad expression head: {head!r}")

    def parse_node(self, sexpr, line_no: int):
        if not isinstance(sexpr, list) or not sexpr or not isinstance(sexpr[0], str):
            raise self._err(line_no, "node body must be an s-expression")
        head, args = sexpr[0], sexpr[1:]
        if head == "read":
            if not args or not isinstance(args[0], str):
                raise self._err(line_no, "read needs a table reference")
            table_ref = args[0]
            inline = None
            for extra in args[1:]:
                if isinstance(extra, list) and extra and extra[0] == "filter":
                    inline = self.parse_expr(extra[1], line_no)
                else:
                    raise self._err(line_no, f"bad read clause {extra!r}")
            return Read(table_ref, self.schemas.get(table_ref), inline)
        if head == "filter":
            if len(args) != 1:
                raise self._err(line_no, "filter takes one predicate")
            return Filter(self.parse_expr(args[0], line_no))
        if head == "project":
            outputs = []
            for item in args:
                if not (isinstance(item, list) and len(item) == 3 and item[0] == "out"):
                    raise self._err(line_no, "project entries look like (out EXPR NAME)")
                outputs.append((self.parse_expr(item[1], line_no), item[2]))
            return Project(tuple(outputs))
        if head == "aggregate":
            if len(args) != 3 or not isinstance(args[0], str):
                raise self._err(line_no, "aggregate takes phase, groups, measures")
            phase = args[0]
            groups_s, measures_s = args[1], args[2]
            if not (isinstance(groups_s, list) and groups_s and groups_s[0] == "groups"):
                raise self._err(line_no, "missing (groups ...) clause")
            if not (isinstance(measures_s, list) and measures_s
                    and measures_s[0] == "measures"):
                raise self._err(line_no, "missing (measures ...) clause")
            groupings = tuple(groups_s[1:])
            measures = []
            for item in measures_s[1:]:
                if not (isinstance(item, list) and len(item) >= 4 and item[0] == "measure"):
                    raise self._err(
                        line_no, "measure entries look like (measure FN EXPR NAME)")
                fn = item[1]
                self._check_function(fn, line_no)
                expr = None if item[2] == "star" else self.parse_expr(item[2], line_no)
                name = item[3]
                count_expr = self.parse_expr(item[4], line_no) if len(item) > 4 else None
                measures.append(Measure(fn, expr, name, count_expr))
            return Aggregate(groupings, tuple(measures), phase)
        if head == "sort":
            keys = []
            for item in args:
                if not (isinstance(item, list) and len(item) == 3 and item[0] == "key"):
                    raise self._err(line_no, "sort entries look like (key EXPR asc|desc)")
                if item[2] not in ("asc", "desc"):
                    raise self._err(line_no, f"bad sort direction {item[2]!r}")
                keys.append(SortKey(self.parse_expr(item[1], line_no), item[2] == "asc"))
            return Sort(tuple(keys))
        raise self._err(line_no, f"unknown node kind {head!r}")

    def parse(self) -> Plan:
        if not self.lines or self.lines[0].strip() != _HEADER:
            raise GrammarError(f"missing {_HEADER!r} header", line=1, column=1)
        nodes = []
        annotations = []
        i = 1
        current_schema: tuple[str, list[Field]] | None = None
        saw_end = False
        while i < len(self.lines):
            line_no = i + 1
            line = self.lines[i].strip()
            i += 1
            if not line or line.startswith("#"):
                continue
            reader = _SexprReader(line, line_no)
            word = reader.read()
            if current_schema is not None:
                if word == "endschema":
                    name, fields = current_schema
                    self.schemas[name] = Schema(tuple(fields))
                    current_schema = None
                    continue
                if word != "field":
                    raise self._err(line_no, "expected field or endschema")
                fname = reader.read()
                ftype = datatype_from_name(reader.read())
                nullability = reader.read()
                if nullability not in ("nullable", "required"):
                    raise self._err(line_no, f"bad nullability {nullability!r}")
                current_schema[1].append(Field(fname, ftype, nullability == "nullable"))
                continue
            if word == "registry":
                while not reader.at_end():
                    self.registry.add(reader.read())
            elif word == "schema":
                current_schema = (reader.read(), [])
            elif word == "node":
                nodes.append(self.parse_node(reader.read(), line_no))
            elif word == "annotation":
                key = reader.read()
                value = reader.read()
                annotations.append((key, value))
            elif word == "end":
                saw_end = True
                break
            else:
                raise self._err(line_no, f"unknown section {word!r}")
        if current_schema is not None:
            raise GrammarError("unterminated schema section", line=len(self.lines), column=1)
        if not saw_end:
            raise GrammarError("missing end line", line=len(self.lines), column=1)
        return Plan(tuple(nodes), tuple(annotations))


def text_to_plan(data: bytes | str) -> Plan:
    """Parse the text form back into a Plan; inverse of plan_to_text."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    return _PlanTextParser(text).parse()
