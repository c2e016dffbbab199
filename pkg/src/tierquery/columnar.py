"""Columnar tables and the TIERCOL interchange format.

Data model
----------
A ``Table`` is an ordered list of immutable ``ColumnBatch`` objects sharing one
``Schema``.  Scalar columns are numpy arrays plus a validity mask; list columns
use the flat-values + offsets layout (null rows span zero elements); Utf8
columns hold Python strings.  Null slots are canonicalized (0 / "" / empty
list) so equality and serialization are value-exact.

TIERCOL stream layout (version 1)
---------------------------------
::

    header:  magic b"TCOL" + u8 version (=1) + u8 flags (=0, reserved)
    frame:   u8 frame_type + u32le payload_len + payload + u32le crc32(payload)

    schema frame (0x01): u32le field_count, then per field
        u16le name_len + name utf8 + u8 type_code + u8 nullable
    batch frame (0x02):  u32le row_count, then per column in schema order
        u32le validity_len + validity bitmap (LSB-first, ceil(rows/8) bytes)
        [var-length types only] u32le offsets_len + (rows+1) u32le offsets
        u32le data_len + data bytes
    end frame (0xFF): empty payload

    type codes: int32=0, int64=1, float64=2, utf8=3,
                list<float64>=4, list<int32>=5

Scalar data sections are dense (``rows * width`` bytes, zeros at null slots).
List data is the flat element vector; Utf8 data is the concatenated UTF-8
bytes addressed by the offsets vector.  All integers are little-endian.
``len(serialize_columnar(t))`` is the byte count used for transfer metering.
"""

from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .errors import CorruptFrame, ParseError, SchemaMismatch, VersionUnsupported

TIERCOL_MAGIC = b"TCOL"
TIERCOL_VERSION = 1

FRAME_SCHEMA = 0x01
FRAME_BATCH = 0x02
FRAME_END = 0xFF


class DataType(Enum):
    INT32 = "int32"
    INT64 = "int64"
    FLOAT64 = "float64"
    UTF8 = "utf8"
    LIST_FLOAT64 = "list<float64>"
    LIST_INT32 = "list<int32>"

    @property
    def is_list(self) -> bool:
        return self in (DataType.LIST_FLOAT64, DataType.LIST_INT32)

    @property
    def is_numeric_scalar(self) -> bool:
        return self in (DataType.INT32, DataType.INT64, DataType.FLOAT64)

    @property
    def element_type(self) -> "DataType":
        if self is DataType.LIST_FLOAT64:
            return DataType.FLOAT64
        if self is DataType.LIST_INT32:
            return DataType.INT32
        raise ValueError(f"{self} is not a list type")

    @property
    def width(self) -> int:
        """Byte width of one scalar value (element width for list types)."""
        if self in (DataType.INT32, DataType.LIST_INT32):
            return 4
        if self in (DataType.INT64, DataType.FLOAT64, DataType.LIST_FLOAT64):
            return 8
        # Utf8 has no fixed width; callers treating it as scalar use this
        # nominal figure only for reporting.
        return 16

    @property
    def numpy_dtype(self) -> np.dtype:
        return {
            DataType.INT32: np.dtype("<i4"),
            DataType.INT64: np.dtype("<i8"),
            DataType.FLOAT64: np.dtype("<f8"),
            DataType.LIST_INT32: np.dtype("<i4"),
            DataType.LIST_FLOAT64: np.dtype("<f8"),
        }[self]


TYPE_CODES = {
    DataType.INT32: 0,
    DataType.INT64: 1,
    DataType.FLOAT64: 2,
    DataType.UTF8: 3,
    DataType.LIST_FLOAT64: 4,
    DataType.LIST_INT32: 5,
}
CODE_TYPES = {v: k for k, v in TYPE_CODES.items()}

_TYPE_NAMES = {t.value: t for t in DataType}


def datatype_from_name(name: str) -> DataType:
    try:
        return _TYPE_NAMES[name]
    except KeyError:
        raise SchemaMismatch(f"unknown type name {name!r}") from None


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DataType
    nullable: bool = True


@dataclass(frozen=True)
class Schema:
    fields: tuple[Field, ...]

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate field names in schema: {names}")

    @staticmethod
    def of(*specs: tuple) -> "Schema":
        """Build a schema from (name, dtype[, nullable]) tuples."""
        fields = []
        for spec in specs:
            name, dtype = spec[0], spec[1]
            nullable = spec[2] if len(spec) > 2 else True
            fields.append(Field(name, dtype, nullable))
        return Schema(tuple(fields))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def __len__(self) -> int:
        return len(self.fields)

    def __contains__(self, name: str) -> bool:
        return any(f.name == name for f in self.fields)

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        raise KeyError(name)

    def rename(self, mapping: dict[str, str]) -> "Schema":
        return Schema(tuple(
            Field(mapping.get(f.name, f.name), f.dtype, f.nullable) for f in self.fields
        ))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Column:
    """One column of a batch.

    ``values`` is a numpy array for numeric types (flat element vector for
    list types) and a tuple of ``str`` for Utf8.  ``offsets`` is present only
    for var-length types (``len == rows + 1``).  Null slots are canonical:
    zero for numerics, "" for Utf8, an empty element span for lists.
    """

    dtype: DataType
    values: object
    validity: np.ndarray
    offsets: np.ndarray | None = None

    @staticmethod
    def from_values(dtype: DataType, values: Sequence) -> "Column":
        n = len(values)
        validity = np.fromiter((v is not None for v in values), dtype=bool, count=n)
        if dtype is DataType.UTF8:
            data = tuple("" if v is None else str(v) for v in values)
            return Column(dtype, data, _frozen(validity))
        if dtype.is_list:
            offsets = np.zeros(n + 1, dtype=np.int64)
            parts = []
            for i, v in enumerate(values):
                if v is None:
                    offsets[i + 1] = offsets[i]
                else:
                    parts.append(np.asarray(v, dtype=dtype.numpy_dtype))
                    offsets[i + 1] = offsets[i] + len(v)
            flat = (np.concatenate(parts) if parts
                    else np.empty(0, dtype=dtype.numpy_dtype))
            return Column(dtype, _frozen(flat), _frozen(validity), _frozen(offsets))
        data = np.zeros(n, dtype=dtype.numpy_dtype)
        if n:
            data[validity] = np.asarray(
                [v for v in values if v is not None], dtype=dtype.numpy_dtype)
        return Column(dtype, _frozen(data), _frozen(validity))

    @staticmethod
    def from_numpy(dtype: DataType, values: np.ndarray,
                   validity: np.ndarray | None = None,
                   offsets: np.ndarray | None = None) -> "Column":
        if validity is None:
            n = len(offsets) - 1 if offsets is not None else len(values)
            validity = np.ones(n, dtype=bool)
        validity = np.asarray(validity, dtype=bool)
        if dtype is DataType.UTF8:
            return Column(dtype, tuple(values), _frozen(validity))
        values = np.asarray(values, dtype=dtype.numpy_dtype)
        if dtype.is_list:
            offsets = np.asarray(offsets, dtype=np.int64)
            return Column(dtype, _frozen(values), _frozen(validity), _frozen(offsets))
        if not validity.all():
            values = values.copy()
            values[~validity] = 0
        return Column(dtype, _frozen(values), _frozen(validity))

    def __len__(self) -> int:
        return len(self.validity)

    def value_at(self, i: int):
        """Python value at row i (None when null)."""
        if not self.validity[i]:
            return None
        if self.dtype is DataType.UTF8:
            return self.values[i]
        if self.dtype.is_list:
            lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
            seq = self.values[lo:hi]
            return [v.item() for v in seq]
        return self.values[i].item()

    def to_pylist(self) -> list:
        return [self.value_at(i) for i in range(len(self))]

    def equals(self, other: "Column") -> bool:
        if self.dtype is not other.dtype or len(self) != len(other):
            return False
        if not np.array_equal(self.validity, other.validity):
            return False
        if self.dtype is DataType.UTF8:
            return self.values == other.values
        if self.dtype.is_list:
            return (np.array_equal(self.offsets, other.offsets)
                    and np.array_equal(self.values, other.values))
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ColumnBatch:
    schema: Schema
    columns: tuple[Column, ...]
    row_count: int

    def __post_init__(self):
        if len(self.columns) != len(self.schema):
            raise SchemaMismatch("column count does not match schema")
        for f, c in zip(self.schema.fields, self.columns):
            if c.dtype is not f.dtype:
                raise SchemaMismatch(f"column {f.name}: {c.dtype} != {f.dtype}")
            if len(c) != self.row_count:
                raise SchemaMismatch(f"column {f.name}: length {len(c)} != {self.row_count}")

    def column(self, name: str) -> Column:
        return self.columns[self.schema.index(name)]

    def equals(self, other: "ColumnBatch") -> bool:
        return (self.schema == other.schema
                and self.row_count == other.row_count
                and all(a.equals(b) for a, b in zip(self.columns, other.columns)))


@dataclass(frozen=True)
class Table:
    schema: Schema
    batches: tuple[ColumnBatch, ...] = ()

    def __post_init__(self):
        for b in self.batches:
            if b.schema != self.schema:
                raise SchemaMismatch("batch schema differs from table schema")

    @property
    def num_rows(self) -> int:
        return sum(b.row_count for b in self.batches)

    @staticmethod
    def from_pylist(schema: Schema, rows: Sequence[dict], batch_rows: int = 65536) -> "Table":
        """Build a table from row dicts; missing/None entries become null."""
        batches = []
        for start in range(0, len(rows), batch_rows):
            chunk = rows[start:start + batch_rows]
            cols = tuple(
                Column.from_values(f.dtype, [r.get(f.name) for r in chunk])
                for f in schema.fields)
            batches.append(ColumnBatch(schema, cols, len(chunk)))
        return Table(schema, tuple(batches))

    @staticmethod
    def from_columns(schema: Schema, columns: Sequence[Column]) -> "Table":
        n = len(columns[0]) if columns else 0
        return Table(schema, (ColumnBatch(schema, tuple(columns), n),))

    def to_pylist(self) -> list[dict]:
        out = []
        for b in self.batches:
            cols = [c.to_pylist() for c in b.columns]
            names = self.schema.names
            for i in range(b.row_count):
                out.append({name: col[i] for name, col in zip(names, cols)})
        return out

    def equals(self, other: "Table") -> bool:
        """Exact equality: schema, batch boundaries, values, and nulls."""
        return (self.schema == other.schema
                and len(self.batches) == len(other.batches)
                and all(a.equals(b) for a, b in zip(self.batches, other.batches)))


def concat_tables(tables: Sequence[Table]) -> Table:
    """Concatenate tables with identical schemas, preserving batch order."""
    if not tables:
        raise ValueError("need at least one table")
    schema = tables[0].schema
    batches = []
    for t in tables:
        if t.schema != schema:
            raise SchemaMismatch("cannot concatenate tables with differing schemas")
        batches.extend(t.batches)
    return Table(schema, tuple(batches))


def rename_columns(table: Table, mapping: dict[str, str]) -> Table:
    """Rename columns (metadata-only; shares column storage)."""
    schema = table.schema.rename(mapping)
    return Table(schema, tuple(
        ColumnBatch(schema, b.columns, b.row_count) for b in table.batches))


def slice_table(table: Table, start: int, stop: int) -> Table:
    """Row range [start, stop) as a new table (batch cuts preserved inside)."""
    seen = 0
    parts: list[ColumnBatch] = []
    for b in table.batches:
        b_start = max(start - seen, 0)
        b_stop = min(stop - seen, b.row_count)
        if b_start < b_stop:
            parts.append(take_batch(b, np.arange(b_start, b_stop)))
        seen += b.row_count
        if seen >= stop:
            break
    return Table(table.schema, tuple(parts))


def take_batch(batch: ColumnBatch, indices: np.ndarray) -> ColumnBatch:
    """Gather rows of a batch by position."""
    cols = []
    for c in batch.columns:
        validity = c.validity[indices]
        if c.dtype is DataType.UTF8:
            vals = tuple(c.values[i] for i in indices)
            cols.append(Column(c.dtype, vals, _frozen(validity)))
        elif c.dtype.is_list:
            lengths = (c.offsets[1:] - c.offsets[:-1])[indices]
            offsets = np.zeros(len(indices) + 1, dtype=np.int64)
            np.cumsum(lengths, out=offsets[1:])
            if len(indices) and len(c.values):
                flat_idx = np.concatenate([
                    np.arange(c.offsets[i], c.offsets[i + 1]) for i in indices
                ]) if len(indices) else np.empty(0, dtype=np.int64)
                flat = c.values[flat_idx] if len(flat_idx) else c.values[:0]
            else:
                flat = c.values[:0]
            cols.append(Column(c.dtype, _frozen(flat), _frozen(validity), _frozen(offsets)))
        else:
            cols.append(Column(c.dtype, _frozen(c.values[indices]), _frozen(validity)))
    return ColumnBatch(batch.schema, tuple(cols), len(indices))


def rebatch(table: Table, batch_rows: int) -> Iterator[ColumnBatch]:
    """Yield batches of at most batch_rows rows, re-cutting as needed."""
    for b in table.batches:
        if b.row_count <= batch_rows:
            yield b
            continue
        for start in range(0, b.row_count, batch_rows):
            idx = np.arange(start, min(start + batch_rows, b.row_count))
            yield take_batch(b, idx)


def logical_bytes(table: Table) -> int:
    """Deterministic logical size of a table.

    Per column: value width x non-null count for scalars; for var-length
    columns the element/codepoint bytes plus a 4-byte offset per row boundary;
    every column also pays ceil(rows/8) bytes of validity overhead.
    """
    total = 0
    for b in table.batches:
        for f, c in zip(table.schema.fields, b.columns):
            total += (b.row_count + 7) // 8  # validity
            if f.dtype is DataType.UTF8:
                total += 4 * (b.row_count + 1)
                total += sum(len(s.encode("utf-8")) for s, ok in zip(c.values, c.validity) if ok)
            elif f.dtype.is_list:
                total += 4 * (b.row_count + 1)
                total += f.dtype.width * int(c.offsets[-1]) if b.row_count else 0
            else:
                total += f.dtype.width * int(np.count_nonzero(c.validity))
    return total


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvOptions:
    batch_rows: int = 65536
    delimiter: str = ","


def _parse_list_literal(text: str, dtype: DataType, row: int, col: str):
    if not (text.startswith("[") and text.endswith("]")):
        raise ParseError(f"expected bracketed list literal, got {text!r}", row=row, column=col)
    body = text[1:-1].strip()
    if not body:
        return []
    conv = int if dtype is DataType.LIST_INT32 else float
    try:
        return [conv(part.strip()) for part in body.split(";")]
    except ValueError as exc:
        raise ParseError(f"bad list element: {exc}", row=row, column=col) from None


def _parse_cell(text: str, f: Field, row: int):
    if text == "":
        return None
    try:
        if f.dtype is DataType.INT32 or f.dtype is DataType.INT64:
            return int(text)
        if f.dtype is DataType.FLOAT64:
            return float(text)
        if f.dtype is DataType.UTF8:
            return text
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as {f.dtype.value}",
                         row=row, column=f.name) from None
    return _parse_list_literal(text, f.dtype, row, f.name)


def ingest_csv(source, schema: Schema, options: CsvOptions | None = None) -> Table:
    """Parse CSV bytes/stream into a Table.

    The header row must match the schema field names exactly.  Empty cells are
    nulls; list cells use the ``[a;b]`` bracketed form.  Raises SchemaMismatch
    on header divergence and ParseError (with row/column coordinates) on bad
    cells or ragged rows.
    """
    options = options or CsvOptions()
    if isinstance(source, (bytes, bytearray)):
        stream = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        stream = io.StringIO(source)
    else:
        stream = io.TextIOWrapper(source, encoding="utf-8")
    reader = csv.reader(stream, delimiter=options.delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatch("empty input: missing header row") from None
    if header != schema.names:
        raise SchemaMismatch(f"header {header!r} does not match schema fields {schema.names!r}")

    batches = []
    pending: list[list] = [[] for _ in schema.fields]
    pending_rows = 0

    def flush():
        nonlocal pending, pending_rows
        cols = tuple(Column.from_values(f.dtype, vals)
                     for f, vals in zip(schema.fields, pending))
        batches.append(ColumnBatch(schema, cols, pending_rows))
        pending = [[] for _ in schema.fields]
        pending_rows = 0

    for rownum, record in enumerate(reader):
        if not record:
            continue  # blank line
        if len(record) != len(schema):
            raise ParseError(
                f"ragged row: {len(record)} cells, schema has {len(schema)}", row=rownum)
        for f, cell, store in zip(schema.fields, record, pending):
            value = _parse_cell(cell, f, rownum)
            if value is None and not f.nullable:
                raise ParseError("null in non-nullable column", row=rownum, column=f.name)
            store.append(value)
        pending_rows += 1
        if pending_rows >= options.batch_rows:
            flush()
    if pending_rows:
        flush()
    return Table(schema, tuple(batches))


# ---------------------------------------------------------------------------
# TIERCOL serialization
# ---------------------------------------------------------------------------

def _write_frame(out: io.BytesIO, frame_type: int, payload: bytes) -> None:
    out.write(struct.pack("<BI", frame_type, len(payload)))
    out.write(payload)
    out.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def _schema_payload(schema: Schema) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", len(schema)))
    for f in schema.fields:
        name = f.name.encode("utf-8")
        out.write(struct.pack("<H", len(name)))
        out.write(name)
        out.write(struct.pack("<BB", TYPE_CODES[f.dtype], 1 if f.nullable else 0))
    return out.getvalue()


def _validity_bytes(validity: np.ndarray) -> bytes:
    return np.packbits(validity, bitorder="little").tobytes()


def _batch_payload(batch: ColumnBatch) -> bytes:
    out = io.BytesIO()
    out.write(struct.pack("<I", batch.row_count))
    for f, c in zip(batch.schema.fields, batch.columns):
        vbytes = _validity_bytes(c.validity)
        out.write(struct.pack("<I", len(vbytes)))
        out.write(vbytes)
        if f.dtype is DataType.UTF8:
            encoded = [s.encode("utf-8") if ok else b""
                       for s, ok in zip(c.values, c.validity)]
            offsets = np.zeros(batch.row_count + 1, dtype="<u4")
            np.cumsum([len(e) for e in encoded], out=offsets[1:])
            obytes = offsets.tobytes()
            data = b"".join(encoded)
            out.write(struct.pack("<I", len(obytes)))
            out.write(obytes)
            out.write(struct.pack("<I", len(data)))
            out.write(data)
        elif f.dtype.is_list:
            obytes = c.offsets.astype("<u4").tobytes()
            data = c.values.astype(f.dtype.numpy_dtype).tobytes()
            out.write(struct.pack("<I", len(obytes)))
            out.write(obytes)
            out.write(struct.pack("<I", len(data)))
            out.write(data)
        else:
            data = c.values.astype(f.dtype.numpy_dtype).tobytes()
            out.write(struct.pack("<I", len(data)))
            out.write(data)
    return out.getvalue()


def serialize_columnar(table: Table) -> bytes:
    """Encode a table as a TIERCOL byte stream.

    Total function on valid tables; the returned length is the figure used
    for all transfer metering.
    """
    out = io.BytesIO()
    out.write(TIERCOL_MAGIC)
    out.write(struct.pack("<BB", TIERCOL_VERSION, 0))
    _write_frame(out, FRAME_SCHEMA, _schema_payload(table.schema))
    for batch in table.batches:
        _write_frame(out, FRAME_BATCH, _batch_payload(batch))
    _write_frame(out, FRAME_END, b"")
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFrame("truncated stream")
        piece = self.data[self.pos:self.pos + n]
        self.pos += n
        return piece

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_frame(r: _Reader) -> tuple[int, bytes]:
    frame_type = r.u8()
    length = r.u32()
    payload = r.take(length)
    crc = r.u32()
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise CorruptFrame(f"checksum mismatch in frame type {frame_type:#x}")
    return frame_type, payload


def _decode_schema(payload: bytes) -> Schema:
    r = _Reader(payload)
    count = r.u32()
    fields = []
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        code = r.u8()
        nullable = r.u8() != 0
        if code not in CODE_TYPES:
            raise CorruptFrame(f"unknown type code {code}")
        fields.append(Field(name, CODE_TYPES[code], nullable))
    return Schema(tuple(fields))


def _decode_batch(payload: bytes, schema: Schema) -> ColumnBatch:
    r = _Reader(payload)
    rows = r.u32()
    vbits = (rows + 7) // 8
    cols = []
    for f in schema.fields:
        vlen = r.u32()
        if vlen != vbits:
            raise CorruptFrame(f"validity length {vlen} != {vbits}")
        validity = np.unpackbits(
            np.frombuffer(r.take(vlen), dtype=np.uint8),
            bitorder="little", count=rows).astype(bool)
        if f.dtype is DataType.UTF8:
            offsets = np.frombuffer(r.take(r.u32()), dtype="<u4")
            data = r.take(r.u32())
            vals = tuple(
                data[offsets[i]:offsets[i + 1]].decode("utf-8") if validity[i] else ""
                for i in range(rows))
            cols.append(Column(f.dtype, vals, _frozen(validity)))
        elif f.dtype.is_list:
            offsets = np.frombuffer(r.take(r.u32()), dtype="<u4").astype(np.int64)
            flat = np.frombuffer(r.take(r.u32()), dtype=f.dtype.numpy_dtype)
            cols.append(Column(f.dtype, _frozen(flat.copy()), _frozen(validity),
                               _frozen(offsets)))
        else:
            data = np.frombuffer(r.take(r.u32()), dtype=f.dtype.numpy_dtype)
            if len(data) != rows:
                raise CorruptFrame(f"column {f.name}: {len(data)} values for {rows} rows")
            cols.append(Column(f.dtype, _frozen(data.copy()), _frozen(validity)))
    return ColumnBatch(schema, tuple(cols), rows)


def deserialize_columnar(data: bytes) -> Table:
    """Decode a TIERCOL byte stream; exact inverse of serialize_columnar."""
    r = _Reader(data)
    if r.take(4) != TIERCOL_MAGIC:
        raise CorruptFrame("bad magic")
    version = r.u8()
    if version != TIERCOL_VERSION:
        raise VersionUnsupported(f"stream version {version}, supported {TIERCOL_VERSION}")
    flags = r.u8()
    if flags != 0:
        raise VersionUnsupported(f"reserved flags set: {flags:#x}")
    frame_type, payload = _read_frame(r)
    if frame_type != FRAME_SCHEMA:
        raise CorruptFrame("expected schema frame first")
    schema = _decode_schema(payload)
    batches = []
    while True:
        frame_type, payload = _read_frame(r)
        if frame_type == FRAME_END:
            break
        if frame_type != FRAME_BATCH:
            raise CorruptFrame(f"unexpected frame type {frame_type:#x}")
        batches.append(_decode_batch(payload, schema))
    return Table(schema, tuple(batches))


# ---------------------------------------------------------------------------
# Client output formats
# ---------------------------------------------------------------------------

def format_value(value, dtype: DataType) -> str:
    """Text form used by both CSV and list re-encoding.

    Floats use repr(), Python's shortest round-trip decimal.
    """
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_cell(value, dtype: DataType) -> str:
    if value is None:
        return ""
    if dtype.is_list:
        return "[" + ";".join(format_value(v, dtype.element_type) for v in value) + "]"
    return format_value(value, dtype)


def emit_csv(table: Table) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(table.schema.names)
    dtypes = [f.dtype for f in table.schema.fields]
    for b in table.batches:
        cols = [c.to_pylist() for c in b.columns]
        for i in range(b.row_count):
            writer.writerow([_csv_cell(col[i], dt) for col, dt in zip(cols, dtypes)])
    return out.getvalue().encode("utf-8")


def emit_json(table: Table) -> bytes:
    """Newline-delimited JSON, one object per row; null fields are omitted."""
    out = io.StringIO()
    names = table.schema.names
    for b in table.batches:
        cols = [c.to_pylist() for c in b.columns]
        for i in range(b.row_count):
            record = {name: col[i] for name, col in zip(names, cols) if col[i] is not None}
            out.write(json.dumps(record, separators=(",", ":")))
            out.write("\n")
    return out.getvalue().encode("utf-8")


OUTPUT_FORMATS = ("columnar", "csv", "json")


def emit_output(table: Table, fmt: str) -> bytes:
    """Encode a result table as columnar (TIERCOL), csv, or json bytes."""
    if fmt == "columnar":
        return serialize_columnar(table)
    if fmt == "csv":
        return emit_csv(table)
    if fmt == "json":
        return emit_json(table)
    raise ValueError(f"unknown output format {fmt!r}; expected one of {OUTPUT_FORMATS}")


def schema_to_json(schema: Schema) -> str:
    """Schema sidecar format used by the CLI (list of field objects)."""
    return json.dumps([
        {"name": f.name, "type": f.dtype.value, "nullable": f.nullable}
        for f in schema.fields
    ], indent=2) + "\n"


def schema_from_json(text: str | bytes) -> Schema:
    try:
        raw = json.loads(text)
        fields = tuple(
            Field(item["name"], datatype_from_name(item["type"]),
                  bool(item.get("nullable", True)))
            for item in raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaMismatch(f"bad schema file: {exc}") from None
    return Schema(fields)


def rows_from_json(data: bytes, schema: Schema) -> list[dict]:
    """Decode emit_json output back into row dicts (absent keys -> None)."""
    rows = []
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        row = {}
        for f in schema.fields:
            v = raw.get(f.name)
            if v is not None and f.dtype in (DataType.INT32, DataType.INT64):
                v = int(v)
            row[f.name] = v
        rows.append(row)
    return rows
