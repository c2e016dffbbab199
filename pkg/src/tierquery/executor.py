"""Batch-at-a-time plan execution over columnar tables.

Semantics follow SQL conventions: filters keep rows whose predicate is true
(null drops the row), connectives use three-valued logic, arithmetic and
comparisons propagate nulls, aggregates skip nulls, and sort is stable with
nulls last under either direction.  Integer division and ``%`` truncate
toward zero; division by zero and out-of-domain math (sqrt of a negative)
yield null rather than errors.  Array elements are addressed with 1-based
ordinals; an out-of-range ordinal yields null.

Expression evaluation is vectorized over numpy arrays with explicit validity
masks.  Aggregation accumulates per-row in input order, which makes results
independent of batch boundaries (bit-exact for floats).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .columnar import (
    Column,
    ColumnBatch,
    DataType,
    Field,
    Schema,
    Table,
    _frozen,
    rebatch,
    take_batch,
)
from .errors import ExecError, NonDecomposableMeasure
from .planir import (
    BOOL,
    DECOMPOSABLE_AGGREGATES,
    Aggregate,
    And,
    Arith,
    ArrayIndex,
    Between,
    Cmp,
    ColumnRef,
    Expr,
    Filter,
    Func,
    IsNotNull,
    Literal,
    Or,
    Plan,
    Project,
    Read,
    Sort,
    node_output_schema,
)

ROWID = "rowid"


@dataclass
class ExecContext:
    """Execution environment: named tables plus batching configuration."""

    tables: dict[str, Table]
    batch_rows: int = 65536
    # Per-table first-row index, used when materializing the virtual rowid
    # for a shard of a larger object.
    rowid_offsets: dict[str, int] = dc_field(default_factory=dict)


@dataclass(frozen=True)
class Vec:
    """A evaluated value vector: values plus validity.

    kind is a DataType, or planir.BOOL for predicates (values are then a bool
    array).  List-typed vectors keep (flat values, offsets) pairs and only
    ever flow from a column reference into a projection output.
    """

    kind: object
    values: object
    validity: np.ndarray

    def __len__(self):
        return len(self.validity)


def _np_kind(kind) -> np.dtype:
    if kind == BOOL:
        return np.dtype(bool)
    return kind.numpy_dtype


def _promote(a, b) -> DataType:
    if DataType.FLOAT64 in (a, b):
        return DataType.FLOAT64
    return DataType.INT64


def _numeric_values(vec: Vec, target: DataType) -> np.ndarray:
    return np.asarray(vec.values, dtype=target.numpy_dtype)


def _trunc_div_int(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q = a // b
    r = a - q * b
    fix = (r != 0) & ((a < 0) != (b < 0))
    return q + fix


def _arith(op: str, lhs: Vec, rhs: Vec) -> Vec:
    kind = _promote(lhs.kind, rhs.kind)
    validity = lhs.validity & rhs.validity
    a = _numeric_values(lhs, kind)
    b = _numeric_values(rhs, kind)
    if op in ("/", "%"):
        zero = b == 0
        validity = validity & ~zero
        if zero.any():
            b = np.where(zero, 1, b)
    with np.errstate(all="ignore"):
        if op == "+":
            out = a + b
        elif op == "-":
            out = a - b
        elif op == "*":
            out = a * b
        elif op == "/":
            if kind is DataType.FLOAT64:
                out = a / b
            else:
                out = _trunc_div_int(a, b)
        elif op == "%":
            out = np.fmod(a, b)  # truncation semantics, sign of the dividend
        else:
            raise ExecError(None, f"unknown arithmetic operator {op!r}")
    return Vec(kind, out, validity)


_CMP = {
    "=": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


def _cmp(op: str, lhs: Vec, rhs: Vec) -> Vec:
    validity = lhs.validity & rhs.validity
    if lhs.kind is DataType.UTF8 or rhs.kind is DataType.UTF8:
        a = np.asarray(lhs.values, dtype=object)
        b = np.asarray(rhs.values, dtype=object)
        out = _CMP[op](a, b).astype(bool)
        return Vec(BOOL, out, validity)
    kind = _promote(lhs.kind, rhs.kind)
    out = _CMP[op](_numeric_values(lhs, kind), _numeric_values(rhs, kind))
    return Vec(BOOL, out, validity)


def _three_valued(terms: list[Vec], is_and: bool) -> Vec:
    n = len(terms[0])
    decided = np.zeros(n, dtype=bool)  # any term definitely False (And) / True (Or)
    all_opposite = np.ones(n, dtype=bool)  # all terms definitely True (And) / False (Or)
    for t in terms:
        if is_and:
            decided |= t.validity & ~t.values
            all_opposite &= t.validity & t.values
        else:
            decided |= t.validity & t.values
            all_opposite &= t.validity & ~t.values
    validity = decided | all_opposite
    values = all_opposite if is_and else decided
    return Vec(BOOL, values, validity)


def evaluate_expr(expr: Expr, batch: ColumnBatch) -> Vec:
    """Vectorized per-row evaluation of one expression over a batch."""
    n = batch.row_count
    if isinstance(expr, ColumnRef):
        col = batch.column(expr.name)
        if col.dtype.is_list:
            return Vec(col.dtype, (col.values, col.offsets), col.validity)
        return Vec(col.dtype, col.values, col.validity)
    if isinstance(expr, Literal):
        if expr.value is None:
            values = (tuple([""] * n) if expr.dtype is DataType.UTF8
                      else np.zeros(n, dtype=expr.dtype.numpy_dtype))
            return Vec(expr.dtype, values, np.zeros(n, dtype=bool))
        if expr.dtype is DataType.UTF8:
            return Vec(expr.dtype, tuple([expr.value] * n), np.ones(n, dtype=bool))
        return Vec(expr.dtype, np.full(n, expr.value, dtype=expr.dtype.numpy_dtype),
                   np.ones(n, dtype=bool))
    if isinstance(expr, ArrayIndex):
        if not isinstance(expr.column, ColumnRef):
            raise ExecError(None, "array index must apply directly to a column")
        col = batch.column(expr.column.name)
        flat, offsets = col.values, col.offsets
        lengths = offsets[1:] - offsets[:-1]
        ok = col.validity & (lengths >= expr.index)
        pos = offsets[:-1] + (expr.index - 1)
        if len(flat) == 0:
            values = np.zeros(n, dtype=col.dtype.element_type.numpy_dtype)
        else:
            values = flat[np.clip(pos, 0, len(flat) - 1)]
            values = np.where(ok, values, 0).astype(col.dtype.element_type.numpy_dtype)
        return Vec(col.dtype.element_type, values, ok)
    if isinstance(expr, Cmp):
        return _cmp(expr.op, evaluate_expr(expr.lhs, batch),
                    evaluate_expr(expr.rhs, batch))
    if isinstance(expr, Arith):
        return _arith(expr.op, evaluate_expr(expr.lhs, batch),
                      evaluate_expr(expr.rhs, batch))
    if isinstance(expr, Func):
        arg = evaluate_expr(expr.args[0], batch)
        values = _numeric_values(arg, DataType.FLOAT64)
        validity = arg.validity
        with np.errstate(all="ignore"):
            if expr.name == "sqrt":
                validity = validity & (values >= 0)
                out = np.sqrt(np.where(values >= 0, values, 0))
            elif expr.name == "cosh":
                out = np.cosh(values)
            elif expr.name == "cos":
                out = np.cos(values)
            elif expr.name == "abs":
                if arg.kind is not DataType.FLOAT64:
                    ints = _numeric_values(arg, arg.kind)
                    return Vec(arg.kind, np.abs(ints), validity)
                out = np.abs(values)
            else:
                raise ExecError(None, f"unknown function {expr.name!r}")
        return Vec(DataType.FLOAT64, out, validity)
    if isinstance(expr, And):
        return _three_valued([evaluate_expr(t, batch) for t in expr.terms], True)
    if isinstance(expr, Or):
        return _three_valued([evaluate_expr(t, batch) for t in expr.terms], False)
    if isinstance(expr, Between):
        x = evaluate_expr(expr.expr, batch)
        lo = evaluate_expr(expr.lo, batch)
        hi = evaluate_expr(expr.hi, batch)
        return _three_valued([_cmp(">=", x, lo), _cmp("<=", x, hi)], True)
    if isinstance(expr, IsNotNull):
        arg = evaluate_expr(expr.expr, batch)
        return Vec(BOOL, arg.validity.copy(), np.ones(n, dtype=bool))
    raise ExecError(None, f"cannot evaluate {expr!r}")


def _vec_to_column(vec: Vec, dtype: DataType) -> Column:
    if dtype.is_list:
        flat, offsets = vec.values
        return Column(dtype, flat, _frozen(np.asarray(vec.validity, dtype=bool)),
                      offsets)
    if dtype is DataType.UTF8:
        vals = tuple(v if ok else "" for v, ok in zip(vec.values, vec.validity))
        return Column(dtype, vals, _frozen(np.asarray(vec.validity, dtype=bool)))
    values = np.asarray(vec.values, dtype=dtype.numpy_dtype)
    return Column.from_numpy(dtype, values, vec.validity)


# ---------------------------------------------------------------------------
# Node application
# ---------------------------------------------------------------------------

def _read_batches(node: Read, ctx: ExecContext):
    try:
        table = ctx.tables[node.table_ref]
    except KeyError:
        raise ExecError(0, f"unknown table {node.table_ref!r}") from None
    schema = node.base_schema or table.schema
    wants_rowid = ROWID in schema and ROWID not in table.schema
    offset = ctx.rowid_offsets.get(node.table_ref, 0)
    row_base = offset
    for batch in rebatch(table, ctx.batch_rows):
        if wants_rowid:
            rowid = Column.from_numpy(
                DataType.INT64,
                np.arange(row_base, row_base + batch.row_count, dtype=np.int64))
            batch = ColumnBatch(schema, batch.columns + (rowid,), batch.row_count)
        elif batch.schema != schema:
            raise ExecError(0, f"table {node.table_ref!r} schema does not match read")
        row_base += batch.row_count
        if node.inline_filter is not None:
            batch = _filter_batch(batch, node.inline_filter)
        yield batch


def _filter_batch(batch: ColumnBatch, predicate: Expr) -> ColumnBatch:
    pred = evaluate_expr(predicate, batch)
    keep = pred.validity & np.asarray(pred.values, dtype=bool)
    if keep.all():
        return batch
    return take_batch(batch, np.nonzero(keep)[0])


def _project_batch(batch: ColumnBatch, node: Project, out_schema: Schema) -> ColumnBatch:
    cols = []
    for (expr, _name), f in zip(node.outputs, out_schema.fields):
        vec = evaluate_expr(expr, batch)
        cols.append(_vec_to_column(vec, f.dtype))
    return ColumnBatch(out_schema, tuple(cols), batch.row_count)


def _merge_batches(schema: Schema, batches: list[ColumnBatch]) -> ColumnBatch:
    if len(batches) == 1:
        return batches[0]
    rows = sum(b.row_count for b in batches)
    cols = []
    for i, f in enumerate(schema.fields):
        validity = np.concatenate([b.columns[i].validity for b in batches]) \
            if batches else np.zeros(0, dtype=bool)
        if f.dtype is DataType.UTF8:
            vals = tuple(v for b in batches for v in b.columns[i].values)
            cols.append(Column(f.dtype, vals, _frozen(validity)))
        elif f.dtype.is_list:
            flats = [b.columns[i].values for b in batches]
            flat = np.concatenate(flats) if flats else np.zeros(0)
            offsets = np.zeros(rows + 1, dtype=np.int64)
            pos = 0
            base = 0
            for b in batches:
                o = b.columns[i].offsets
                offsets[pos + 1:pos + b.row_count + 1] = o[1:] + base
                base += o[-1]
                pos += b.row_count
            cols.append(Column(f.dtype, _frozen(flat), _frozen(validity),
                               _frozen(offsets)))
        else:
            vals = np.concatenate([b.columns[i].values for b in batches]) \
                if batches else np.zeros(0, dtype=f.dtype.numpy_dtype)
            cols.append(Column(f.dtype, _frozen(vals), _frozen(validity)))
    return ColumnBatch(schema, tuple(cols), rows)


def _gather_table(schema: Schema, batches: list[ColumnBatch]) -> ColumnBatch:
    if not batches:
        empty = [Column.from_values(f.dtype, []) for f in schema.fields]
        return ColumnBatch(schema, tuple(empty), 0)
    return _merge_batches(schema, batches)


# -- sort ---------------------------------------------------------------------

def _sort_batch(batch: ColumnBatch, node: Sort) -> ColumnBatch:
    if batch.row_count == 0:
        return batch
    keys = [evaluate_expr(k.expr, batch) for k in node.keys]
    numeric = all(k.kind in (DataType.INT32, DataType.INT64, DataType.FLOAT64)
                  for k in keys)
    if numeric:
        # Build key arrays in priority order (major key first; within one
        # key the null flag dominates the value so nulls land last under
        # either direction), then reverse for lexsort, whose last key is
        # the primary one.
        priority = []
        for vec, spec in zip(keys, node.keys):
            vals = np.asarray(vec.values, dtype=np.float64
                              if vec.kind is DataType.FLOAT64 else np.int64)
            vals = np.where(vec.validity, vals, 0)
            if not spec.ascending:
                vals = -vals
            priority.append(~vec.validity)  # False (valid) sorts first
            priority.append(vals)
        order = np.lexsort(tuple(reversed(priority)))
    else:
        # Successive stable sorts, minor key first.  Each key needs two
        # passes: by value with its direction, then nulls pushed last.
        order_list = list(range(batch.row_count))
        for vec, spec in reversed(list(zip(keys, node.keys))):
            filler = "" if vec.kind is DataType.UTF8 else 0

            def value_key(i, vec=vec, filler=filler):
                return vec.values[i] if vec.validity[i] else filler

            order_list.sort(key=value_key, reverse=not spec.ascending)
            order_list.sort(key=lambda i, vec=vec: not vec.validity[i])
        order = np.asarray(order_list, dtype=np.int64)
    return take_batch(batch, order)


# -- aggregation ----------------------------------------------------------------

class _Acc:
    """Per-group accumulator for one measure."""

    __slots__ = ("fn", "count", "total", "low", "high", "items")

    def __init__(self, fn):
        self.fn = fn
        self.count = 0
        self.total = 0
        self.low = None
        self.high = None
        self.items = [] if fn == "median" else None

    def add(self, value):
        if value is None:
            return
        self.count += 1
        if self.fn in ("sum", "avg"):
            self.total += value
        elif self.fn == "min":
            if self.low is None or value < self.low:
                self.low = value
        elif self.fn == "max":
            if self.high is None or value > self.high:
                self.high = value
        elif self.fn == "median":
            self.items.append(value)

    def add_row(self):
        self.count += 1  # count(*)

    def final(self):
        if self.fn == "count":
            return self.count
        if self.count == 0:
            return None
        if self.fn == "sum":
            return self.total
        if self.fn == "avg":
            return self.total / self.count
        if self.fn == "min":
            return self.low
        if self.fn == "max":
            return self.high
        if self.fn == "median":
            ordered = sorted(self.items)
            return ordered[(len(ordered) - 1) // 2]  # lower median
        raise NonDecomposableMeasure(f"unknown aggregate {self.fn!r}")


def _run_aggregate(node: Aggregate, schema_in: Schema, batches, out_schema: Schema,
                   batch_rows: int) -> list[ColumnBatch]:
    groups: dict[tuple, list[_Acc]] = {}

    def fresh_entry():
        if node.phase != "final":
            return [_Acc(m.fn) for m in node.measures]
        # Final phase merges partial states: counts are summed, avg merges a
        # (sum, count) pair; min/max/sum merge with their own function.
        entry = []
        for m in node.measures:
            if m.fn == "avg":
                entry.append((_Acc("sum"), _Acc("sum")))
            elif m.fn == "count":
                entry.append((_Acc("sum"), None))
            else:
                entry.append((_Acc(m.fn), None))
        return entry

    def accs_for(key):
        entry = groups.get(key)
        if entry is None:
            entry = fresh_entry()
            groups[key] = entry
        return entry

    for batch in batches:
        n = batch.row_count
        key_cols = []
        for g in node.groupings:
            col = batch.column(g)
            vals = col.to_pylist()
            key_cols.append(vals)
        if node.phase == "final":
            m_vecs = []
            for m in node.measures:
                v = evaluate_expr(m.expr, batch)
                vals = [v.values[i].item() if v.validity[i] else None for i in range(n)]
                cvals = None
                if m.count_expr is not None:
                    cv = evaluate_expr(m.count_expr, batch)
                    cvals = [cv.values[i].item() if cv.validity[i] else None
                             for i in range(n)]
                m_vecs.append((vals, cvals))
            for i in range(n):
                key = tuple(kc[i] for kc in key_cols)
                entry = accs_for(key)
                for (vals, cvals), (acc, cacc) in zip(m_vecs, entry):
                    acc.add(vals[i])
                    if cacc is not None:
                        cacc.add(cvals[i] if cvals else None)
        else:
            m_vecs = []
            for m in node.measures:
                if m.expr is None:
                    m_vecs.append(None)  # count(*)
                    continue
                v = evaluate_expr(m.expr, batch)
                vals = [v.values[i].item() if v.validity[i] else None for i in range(n)]
                m_vecs.append(vals)
            for i in range(n):
                key = tuple(kc[i] for kc in key_cols)
                entry = accs_for(key)
                for vals, acc in zip(m_vecs, entry):
                    if vals is None:
                        acc.add_row()
                    else:
                        acc.add(vals[i])

    if not node.groupings and not groups:
        accs_for(())  # global aggregate over empty input still yields one row

    rows = []
    for key, entry in groups.items():
        row = {g: k for g, k in zip(node.groupings, key)}
        for m, acc in zip(node.measures, entry):
            if node.phase == "partial":
                if m.fn == "avg":
                    row[m.name + "_sum"] = float(acc.total) if acc.count else None
                    row[m.name + "_cnt"] = acc.count
                elif m.fn == "count":
                    row[m.name] = acc.count
                else:
                    row[m.name] = acc.final()
            elif node.phase == "final":
                acc_v, acc_c = acc
                if m.fn == "avg":
                    total = acc_v.final()
                    cnt = acc_c.final()
                    row[m.name] = (total / cnt) if cnt else None
                elif m.fn == "count":
                    row[m.name] = int(acc_v.final() or 0)
                else:
                    row[m.name] = acc_v.final()
            else:
                row[m.name] = acc.final()
        rows.append(row)

    # Coerce measure values to their declared output types.
    for row in rows:
        for f in out_schema.fields:
            v = row.get(f.name)
            if v is not None and f.dtype is DataType.FLOAT64:
                row[f.name] = float(v)
            elif v is not None and f.dtype in (DataType.INT32, DataType.INT64):
                row[f.name] = int(v)
    return list(Table.from_pylist(out_schema, rows, batch_rows).batches)


# ---------------------------------------------------------------------------
# Plan execution
# ---------------------------------------------------------------------------

def execute(plan: Plan, ctx: ExecContext) -> Table:
    """Run a validated plan against the context tables."""
    schema = None
    batches = None
    for index, node in enumerate(plan.nodes):
        try:
            out_schema = node_output_schema(node, schema)
            if isinstance(node, Read):
                batches = list(_read_batches(node, ctx))
            elif isinstance(node, Filter):
                batches = [_filter_batch(b, node.predicate) for b in batches]
            elif isinstance(node, Project):
                batches = [_project_batch(b, node, out_schema) for b in batches]
            elif isinstance(node, Aggregate):
                batches = _run_aggregate(node, schema, batches, out_schema,
                                         ctx.batch_rows)
            elif isinstance(node, Sort):
                merged = _gather_table(schema, batches)
                ordered = _sort_batch(merged, node)
                batches = list(rebatch(Table(schema, (ordered,)), ctx.batch_rows))
            else:
                raise ExecError(index, f"unsupported node {node!r}")
            schema = out_schema
        except ExecError:
            raise
        except Exception as exc:
            raise ExecError(index, str(exc)) from exc
    batches = [b for b in batches if b.row_count > 0]
    if not batches:
        return Table(schema, (_gather_table(schema, []),))
    return Table(schema, tuple(batches))


def apply_node(node, table: Table, batch_rows: int = 65536) -> Table:
    """Apply a single non-read node to a materialized table.

    Used by the orchestrator's lazy placement loop to push one more operator
    down to the array tier after measuring an intermediate.
    """
    schema = table.schema
    out_schema = node_output_schema(node, schema)
    batches = list(rebatch(table, batch_rows))
    if isinstance(node, Filter):
        batches = [_filter_batch(b, node.predicate) for b in batches]
    elif isinstance(node, Project):
        batches = [_project_batch(b, node, out_schema) for b in batches]
    elif isinstance(node, Aggregate):
        batches = _run_aggregate(node, schema, batches, out_schema, batch_rows)
    elif isinstance(node, Sort):
        merged = _gather_table(schema, batches)
        batches = list(rebatch(Table(schema, (_sort_batch(merged, node),)), batch_rows))
    else:
        raise ExecError(None, f"cannot apply node {node!r}")
    batches = [b for b in batches if b.row_count > 0]
    if not batches:
        return Table(out_schema, (_gather_table(out_schema, []),))
    return Table(out_schema, tuple(batches))


def execute_partial_aggregate(node: Aggregate, table: Table,
                              batch_rows: int = 65536) -> Table:
    """Partial-phase aggregation of one node's worth of data."""
    from .soda import rewrite_partial_aggregate

    partial, _final = rewrite_partial_aggregate(node)
    return apply_node(partial, table, batch_rows)


def execute_final_aggregate(node: Aggregate, partials: Table,
                            batch_rows: int = 65536) -> Table:
    """Merge concatenated partial states into final aggregate values."""
    from .soda import rewrite_partial_aggregate

    _partial, final = rewrite_partial_aggregate(node)
    return apply_node(final, partials, batch_rows)
