"""Per-operator output/input byte coefficients and chained size inference.

Coefficients are byte ratios (output bytes / input bytes): projections change
row width, so bytes are the unit that models transfer cost.  Sources:

* ``fixed``        read and sort pass data through unchanged (1.0).
* ``histogram``    filters: per-column range predicates are merged into one
                   interval per column, estimated against that column's
                   histogram, and multiplied across columns (independence).
* ``width_ratio``  projections: output row width / input row width, with
                   computed scalar expressions at their result-type width.
* ``distinct_cap`` aggregates: distinct(group keys) x output row width,
                   capped at the input size.
* ``unknown``      anything the model refuses to guess: array-element access,
                   predicates that are not ranges or equalities on
                   histogrammed scalar columns, or references to columns
                   without histograms.  Unknown is sticky along the chain;
                   downstream sizes are never invented.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .columnar import DataType, Schema
from .errors import UnclassifiableOperator
from .planir import (
    Aggregate,
    And,
    ArrayIndex,
    Between,
    Cmp,
    ColumnRef,
    Expr,
    Filter,
    IsNotNull,
    Literal,
    OpClass,
    Plan,
    Project,
    Read,
    Sort,
    _TypeError,
    classify,
    contains_array_access,
    infer_expr_type,
    node_output_schema,
)
from .stats import NEG_INF, POS_INF, Histogram, estimate_range_selectivity

StatsCatalog = Mapping[str, Histogram]

SOURCE_FIXED = "fixed"
SOURCE_HISTOGRAM = "histogram"
SOURCE_WIDTH_RATIO = "width_ratio"
SOURCE_DISTINCT_CAP = "distinct_cap"
SOURCE_UNKNOWN = "unknown"


@dataclass(frozen=True)
class Coefficient:
    value: float | None  # output bytes / input bytes; None iff unknown
    source: str
    detail: str = ""

    @property
    def known(self) -> bool:
        return self.value is not None


UNKNOWN = Coefficient(None, SOURCE_UNKNOWN)


@dataclass(frozen=True)
class NodeEstimate:
    input_bytes: float | None
    output_bytes: float | None
    coefficient: Coefficient


@dataclass(frozen=True)
class SizeEstimate:
    read_bytes: float
    nodes: tuple[NodeEstimate, ...]

    @property
    def all_known(self) -> bool:
        return all(n.output_bytes is not None for n in self.nodes)


# ---------------------------------------------------------------------------
# Filter predicates -> per-column intervals
# ---------------------------------------------------------------------------

@dataclass
class _Interval:
    lo: float = NEG_INF
    lo_open: bool = False
    hi: float = POS_INF
    hi_open: bool = False
    has_range: bool = False
    not_null: bool = False

    def clamp_lo(self, value: float, open_: bool):
        if value > self.lo or (value == self.lo and open_):
            self.lo, self.lo_open = value, open_
        self.has_range = True

    def clamp_hi(self, value: float, open_: bool):
        if value < self.hi or (value == self.hi and open_):
            self.hi, self.hi_open = value, open_
        self.has_range = True


def split_conjuncts(pred: Expr) -> list[Expr]:
    if isinstance(pred, And):
        out = []
        for term in pred.terms:
            out.extend(split_conjuncts(term))
        return out
    return [pred]


def _numeric_literal(expr: Expr) -> float | None:
    if isinstance(expr, Literal) and isinstance(expr.value, (int, float)) \
            and not isinstance(expr.value, bool):
        return float(expr.value)
    return None


def _apply_conjunct(conjunct: Expr, intervals: dict[str, _Interval]) -> bool:
    """Fold one conjunct into the per-column interval map.

    Returns False when the conjunct is not a range/equality/not-null test on
    a bare column, which makes the whole filter unestimable.
    """
    if isinstance(conjunct, IsNotNull) and isinstance(conjunct.expr, ColumnRef):
        intervals.setdefault(conjunct.expr.name, _Interval()).not_null = True
        return True
    if isinstance(conjunct, Between) and isinstance(conjunct.expr, ColumnRef):
        lo = _numeric_literal(conjunct.lo)
        hi = _numeric_literal(conjunct.hi)
        if lo is None or hi is None:
            return False
        iv = intervals.setdefault(conjunct.expr.name, _Interval())
        iv.clamp_lo(lo, False)
        iv.clamp_hi(hi, False)
        return True
    if isinstance(conjunct, Cmp):
        lhs, rhs, op = conjunct.lhs, conjunct.rhs, conjunct.op
        if isinstance(rhs, ColumnRef) and _numeric_literal(lhs) is not None:
            flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
            lhs, rhs, op = rhs, lhs, flip[op]
        if not (isinstance(lhs, ColumnRef) and _numeric_literal(rhs) is not None):
            return False
        value = _numeric_literal(rhs)
        iv = intervals.setdefault(lhs.name, _Interval())
        if op == "=":
            iv.clamp_lo(value, False)
            iv.clamp_hi(value, False)
            return True
        if op == ">":
            iv.clamp_lo(value, True)
            return True
        if op == ">=":
            iv.clamp_lo(value, False)
            return True
        if op == "<":
            iv.clamp_hi(value, True)
            return True
        if op == "<=":
            iv.clamp_hi(value, False)
            return True
        return False  # != is not a range predicate
    return False


def filter_coefficient(pred: Expr, input_schema: Schema, stats: StatsCatalog) -> Coefficient:
    """Product of merged per-column range selectivities, or unknown."""
    if contains_array_access(pred):
        return UNKNOWN
    intervals: dict[str, _Interval] = {}
    for conjunct in split_conjuncts(pred):
        if not _apply_conjunct(conjunct, intervals):
            return UNKNOWN
    sel = 1.0
    for name, iv in intervals.items():
        try:
            f = input_schema.field(name)
        except KeyError:
            return UNKNOWN
        if not f.dtype.is_numeric_scalar or name not in stats:
            return UNKNOWN
        h = stats[name]
        if iv.has_range:
            sel *= estimate_range_selectivity(h, iv.lo, iv.hi, iv.lo_open, iv.hi_open)
        elif iv.not_null:
            sel *= 1.0 - h.null_fraction
    return Coefficient(sel, SOURCE_HISTOGRAM)


# ---------------------------------------------------------------------------
# Width arithmetic
# ---------------------------------------------------------------------------

def _scalar_width(dtype) -> int | None:
    if isinstance(dtype, DataType) and dtype.is_numeric_scalar:
        return dtype.width
    return None


def schema_row_bytes(schema: Schema) -> float | None:
    """Fixed per-row width; None when any field is var-length (list/Utf8)."""
    total = 0
    for f in schema.fields:
        w = _scalar_width(f.dtype)
        if w is None:
            return None
        total += w
    return float(total)


def project_coefficient(node: Project, input_schema: Schema) -> Coefficient:
    in_width = schema_row_bytes(input_schema)
    if in_width is None or in_width == 0:
        return UNKNOWN
    out_width = 0.0
    for expr, _name in node.outputs:
        if contains_array_access(expr):
            return UNKNOWN
        try:
            kind = infer_expr_type(expr, input_schema)
        except _TypeError:
            return UNKNOWN
        w = _scalar_width(kind)
        if w is None:
            return UNKNOWN
        out_width += w
    return Coefficient(out_width / in_width, SOURCE_WIDTH_RATIO,
                       detail=f"{out_width:.0f}B/{in_width:.0f}B per row")


def aggregate_coefficient(node: Aggregate, input_schema: Schema, stats: StatsCatalog,
                          input_bytes: float) -> Coefficient:
    distinct = 1.0
    out_width = 0.0
    for g in node.groupings:
        f = input_schema.field(g)
        w = _scalar_width(f.dtype)
        if w is None or g not in stats:
            return UNKNOWN
        distinct *= max(stats[g].distinct_estimate, 1.0)
        out_width += w
    for m in node.measures:
        if m.expr is None:
            out_width += DataType.INT64.width  # count(*)
            continue
        if contains_array_access(m.expr):
            return UNKNOWN
        try:
            kind = infer_expr_type(m.expr, input_schema)
        except _TypeError:
            return UNKNOWN
        if m.fn == "count":
            out_width += DataType.INT64.width
        elif m.fn == "avg":
            out_width += DataType.FLOAT64.width
        elif m.fn == "sum":
            w = DataType.FLOAT64.width if kind is DataType.FLOAT64 else DataType.INT64.width
            out_width += w
        else:
            w = _scalar_width(kind)
            if w is None:
                return UNKNOWN
            out_width += w
    in_width = schema_row_bytes(input_schema)
    if in_width is not None and in_width > 0:
        distinct = min(distinct, max(input_bytes / in_width, 1.0))
    if input_bytes <= 0:
        return Coefficient(0.0, SOURCE_DISTINCT_CAP, detail="empty input")
    value = min(1.0, distinct * out_width / input_bytes)
    return Coefficient(value, SOURCE_DISTINCT_CAP,
                       detail=f"~{distinct:.0f} groups x {out_width:.0f}B")


def estimate_coefficient(node, input_schema: Schema, stats: StatsCatalog,
                         input_bytes: float | None = None) -> Coefficient:
    """Output/input byte ratio of one operator.

    Aggregates need the absolute input size for the distinct cap, so callers
    walking a chain (propagate_sizes) pass ``input_bytes``.
    """
    op_class = classify(node)
    if op_class not in (OpClass.OP1, OpClass.OP2):
        raise UnclassifiableOperator(
            f"{node if isinstance(node, str) else type(node).__name__}: class {op_class.name}")
    if isinstance(node, (Read, Sort)):
        coeff = Coefficient(1.0, SOURCE_FIXED)
        if isinstance(node, Read) and node.inline_filter is not None:
            inner = filter_coefficient(node.inline_filter, node.base_schema, stats)
            if not inner.known:
                return UNKNOWN
            coeff = Coefficient(inner.value, SOURCE_HISTOGRAM, detail="inline filter")
        return coeff
    if isinstance(node, Filter):
        return filter_coefficient(node.predicate, input_schema, stats)
    if isinstance(node, Project):
        return project_coefficient(node, input_schema)
    if isinstance(node, Aggregate):
        if input_bytes is None:
            raise ValueError("aggregate coefficient needs input_bytes for its cap")
        return aggregate_coefficient(node, input_schema, stats, input_bytes)
    raise UnclassifiableOperator(f"unsupported node {node!r}")


def propagate_sizes(plan: Plan, read_bytes: float, stats: StatsCatalog) -> SizeEstimate:
    """Chain per-node size estimates from the initial read size.

    The first unknown coefficient truncates estimation: downstream sizes stay
    None rather than being guessed.
    """
    estimates = []
    schema = None
    current: float | None = float(read_bytes)
    for node in plan.nodes:
        in_schema = schema
        schema = node_output_schema(node, schema)
        if current is None:
            estimates.append(NodeEstimate(None, None, UNKNOWN))
            continue
        coeff = estimate_coefficient(node, in_schema, stats, input_bytes=current)
        if not coeff.known:
            estimates.append(NodeEstimate(current, None, coeff))
            current = None
            continue
        out = current * coeff.value
        estimates.append(NodeEstimate(current, out, coeff))
        current = out
    return SizeEstimate(float(read_bytes), tuple(estimates))
