"""Shared comparison helpers and random table/plan generators for tests."""

from __future__ import annotations

import math
import random

from tierquery.columnar import DataType, Schema, Table

REL_TOL = 1e-9


def _cell_matches(a, b, rel: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, list) or isinstance(b, list):
        return (isinstance(a, list) and isinstance(b, list) and len(a) == len(b)
                and all(_cell_matches(x, y, rel) for x, y in zip(a, b)))
    if isinstance(a, float) or isinstance(b, float):
        if math.isnan(a) and math.isnan(b):
            return True
        return math.isclose(a, b, rel_tol=rel, abs_tol=1e-300)
    return a == b


def _sort_key(row: dict, names: list[str]):
    key = []
    for name in names:
        v = row[name]
        if v is None:
            key.append((0, 0.0))
        elif isinstance(v, str):
            key.append((2, v))
        elif isinstance(v, list):
            key.append((3, tuple(v)))
        else:
            key.append((1, float(v)))
    return tuple(key)


def rows_match(got: list[dict], want: list[dict], ordered: bool,
               rel: float = REL_TOL) -> str | None:
    """None when equal; otherwise a message describing the first mismatch."""
    if len(got) != len(want):
        return f"row count {len(got)} != {len(want)}"
    if not got:
        return None
    names = sorted(want[0].keys())
    if sorted(got[0].keys()) != names:
        return f"columns {sorted(got[0])} != {names}"
    if not ordered:
        got = sorted(got, key=lambda r: _sort_key(r, names))
        want = sorted(want, key=lambda r: _sort_key(r, names))
    for i, (a, b) in enumerate(zip(got, want)):
        for name in names:
            if not _cell_matches(a[name], b[name], rel):
                return f"row {i} column {name!r}: {a[name]!r} != {b[name]!r}"
    return None


def assert_rows_match(got, want, ordered, rel: float = REL_TOL):
    problem = rows_match(got, want, ordered, rel)
    assert problem is None, problem


def table_rows(table: Table) -> list[dict]:
    return table.to_pylist()


# ---------------------------------------------------------------------------
# Random tables (for round-trip and executor properties)
# ---------------------------------------------------------------------------

_SCALAR_POOL = (DataType.INT32, DataType.INT64, DataType.FLOAT64, DataType.UTF8)
_ALL_POOL = _SCALAR_POOL + (DataType.LIST_FLOAT64, DataType.LIST_INT32)


def random_table(rng: random.Random, max_rows: int = 40, max_cols: int = 5,
                 allow_lists: bool = True, null_rate: float = 0.15) -> Table:
    n_cols = rng.randint(1, max_cols)
    n_rows = rng.randint(0, max_rows)
    pool = _ALL_POOL if allow_lists else _SCALAR_POOL
    fields = []
    for i in range(n_cols):
        fields.append((f"c{i}", rng.choice(pool), True))
    schema = Schema.of(*fields)
    rows = []
    for _ in range(n_rows):
        row = {}
        for name, dtype, _null in fields:
            if rng.random() < null_rate:
                row[name] = None
            elif dtype is DataType.INT32:
                row[name] = rng.randint(-2**31, 2**31 - 1)
            elif dtype is DataType.INT64:
                row[name] = rng.randint(-2**53, 2**53)
            elif dtype is DataType.FLOAT64:
                row[name] = rng.uniform(-1e6, 1e6)
            elif dtype is DataType.UTF8:
                # Length >= 1: a null round-trips through CSV as the empty
                # cell, so the empty string is not representable there.
                row[name] = "".join(rng.choice("abc,\"\n xyzλ") for _ in
                                    range(rng.randint(1, 8)))
            elif dtype is DataType.LIST_FLOAT64:
                row[name] = [rng.uniform(-100, 100)
                             for _ in range(rng.randint(0, 4))]
            else:
                row[name] = [rng.randint(-5, 5) for _ in range(rng.randint(0, 4))]
        rows.append(row)
    batch_rows = rng.choice([1, 3, 7, 65536])
    return Table.from_pylist(schema, rows, batch_rows=batch_rows)
