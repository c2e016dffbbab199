"""Simulated two-tier cluster: one frontend, N array nodes, byte metering.

Objects live in buckets.  Each bucket gets an object space id and a primary
array node at creation; an object put into a bucket with ``shards`` > 1 is cut
into contiguous row ranges assigned round-robin to array nodes starting at the
primary.  Shards are persisted as TIERCOL files, so the file size *is* the
exact transfer size when a full object moves.  At put time the frontend also
captures, per numeric scalar column, a sampled histogram (for the cost model)
and the exact min/max (for footer-style skipping in ``pred`` mode).

Query modes:

* ``baseline``  full object moves array -> FE -> client; the whole plan runs
  client-side.
* ``pred``      footer-emulation: per-column min/max decide object-granular
  skipping for range predicates; surviving objects move in full and the whole
  plan runs client-side.
* ``cos``       full object moves array -> FE; the FE runs the whole plan and
  ships only the final result to the client.
* ``oasis``     the split planner decides; array nodes run the lower subplan
  (concurrently, partial aggregation when sharded), intermediates are
  serialized, metered, and merged on the FE, which runs the upper subplan.

Transfers are in-process byte movements; simulated transfer time is
bytes/bandwidth and is reported, never slept.  On-disk layout::

    <root>/manifest.txt
    <root>/<bucket>/<space_id>/<object_id>.<shard>.tcol
    <root>/_meta/<bucket>/<object_id>.meta
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .columnar import (
    Schema,
    Table,
    _decode_schema,
    _read_frame,
    _Reader,
    _schema_payload,
    _write_frame,
    concat_tables,
    deserialize_columnar,
    emit_output,
    logical_bytes,
    serialize_columnar,
    slice_table,
)
from .costmodel import propagate_sizes
from .decomposer import DecomposedPlans, decompose
from .errors import (
    CorruptFrame,
    DuplicateKey,
    EstimationUnavailable,
    NoSuchBucket,
    NoSuchObject,
    TierqueryError,
)
from .executor import ExecContext, apply_node, execute
from .planir import (
    Aggregate,
    Filter,
    Plan,
    validate,
)
from .sqlfe import parse
from .soda import (
    STRATEGY_CAD,
    STRATEGY_SAP,
    SplitDecision,
    cad_split,
    choose_strategy,
    first_boundary_index,
    sap_place,
)
from .stats import Histogram, build_histogram, histogram_from_bytes, histogram_to_bytes

log = logging.getLogger(__name__)

MODES = ("baseline", "pred", "cos", "oasis")

# 10 Gb/s links on both hops by default.
DEFAULT_BANDWIDTH = 1.25e9

_META_MAGIC = b"TMET"
_FRAME_OBJECT = 0x01
_FRAME_HISTOGRAM = 0x03
_FRAME_META_END = 0xFF


@dataclass(frozen=True)
class ClusterConfig:
    array_nodes: int = 1
    interconnect_bandwidth: float = DEFAULT_BANDWIDTH
    client_bandwidth: float = DEFAULT_BANDWIDTH
    transfer_budget: int | None = None  # None = unlimited (transfer immediately)
    mode: str = "oasis"

    def __post_init__(self):
        if self.array_nodes < 1:
            raise ValueError("array_nodes must be >= 1")
        if self.interconnect_bandwidth <= 0 or self.client_bandwidth <= 0:
            raise ValueError("bandwidths must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class BucketInfo:
    name: str
    space_id: int
    shards: int
    primary_node: int
    next_object_id: int = 0


@dataclass
class ShardInfo:
    start: int
    stop: int
    node: int
    path: Path
    byte_size: int


@dataclass
class ObjectMeta:
    bucket: str
    key: str
    object_id: int
    schema: Schema
    row_count: int
    logical_bytes: int
    shards: list[ShardInfo]
    histograms: dict[str, Histogram]
    column_minmax: dict[str, tuple[float, float]]


@dataclass
class QueryReport:
    mode: str
    result: Table
    bytes_array_to_fe: int
    bytes_fe_to_client: int
    simulated_transfer_seconds: float
    timings: dict[str, float]
    split: SplitDecision | None
    output_format: str
    output_bytes: bytes

    @property
    def result_hash(self) -> str:
        return table_content_hash(self.result)

    def to_record(self) -> dict:
        rec = {
            "mode": self.mode,
            "rows": self.result.num_rows,
            "bytes_array_to_fe": self.bytes_array_to_fe,
            "bytes_fe_to_client": self.bytes_fe_to_client,
            "simulated_transfer_seconds": self.simulated_transfer_seconds,
            "result_hash": self.result_hash,
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
        }
        if self.split is not None:
            rec["strategy"] = self.split.strategy
            rec["split_after"] = self.split.split_after
            rec["partial_agg"] = self.split.partial_agg
        return rec


def _encode_value(value) -> bytes:
    if value is None:
        return b"\x00"
    if isinstance(value, bool):
        return b"\x01" + (b"\x01" if value else b"\x00")
    if isinstance(value, int):
        return b"\x02" + struct.pack("<q", value)
    if isinstance(value, float):
        return b"\x03" + struct.pack("<d", value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return b"\x04" + struct.pack("<I", len(raw)) + raw
    if isinstance(value, list):
        return b"\x05" + struct.pack("<I", len(value)) + b"".join(
            _encode_value(v) for v in value)
    raise TypeError(f"unhashable result value {value!r}")


def table_content_hash(table: Table) -> str:
    """Order-insensitive content hash of a result table (schema + rows)."""
    header = ";".join(f"{f.name}:{f.dtype.value}" for f in table.schema.fields)
    rows = sorted(
        b"|".join(_encode_value(v) for v in row.values())
        for row in table.to_pylist())
    digest = hashlib.sha256()
    digest.update(header.encode("utf-8"))
    for row in rows:
        digest.update(row)
    return digest.hexdigest()


class _Phases:
    def __init__(self):
        self.timings = {"plan": 0.0, "optimize": 0.0, "array_exec": 0.0,
                        "transfer": 0.0, "fe_exec": 0.0}

    def measure(self, phase):
        timings = self.timings

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timings[phase] += time.perf_counter() - self.t0

        return _Timer()


class Cluster:
    """Storage root plus orchestration; state reloads from disk on open."""

    def __init__(self, root: str | Path, config: ClusterConfig | None = None):
        self.root = Path(root)
        self.config = config or ClusterConfig()
        self.buckets: dict[str, BucketInfo] = {}
        self.objects: dict[tuple[str, str], ObjectMeta] = {}
        self._table_cache: dict[Path, Table] = {}
        self.root.mkdir(parents=True, exist_ok=True)
        self._load()

    # -- persistence ---------------------------------------------------------

    @property
    def _manifest_path(self) -> Path:
        return self.root / "manifest.txt"

    def _save_manifest(self):
        lines = ["# bucket <name> space <id> shards <n> node <primary> next <id>"]
        for b in sorted(self.buckets.values(), key=lambda b: b.space_id):
            lines.append(f"bucket {b.name} space {b.space_id} shards {b.shards} "
                         f"node {b.primary_node} next {b.next_object_id}")
        self._manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def _load(self):
        if self._manifest_path.exists():
            for line in self._manifest_path.read_text(encoding="utf-8").splitlines():
                parts = line.split()
                if not parts or parts[0] != "bucket":
                    continue
                info = BucketInfo(name=parts[1], space_id=int(parts[3]),
                                  shards=int(parts[5]), primary_node=int(parts[7]),
                                  next_object_id=int(parts[9]))
                self.buckets[info.name] = info
        meta_root = self.root / "_meta"
        if meta_root.exists():
            for meta_path in sorted(meta_root.glob("*/*.meta")):
                meta = self._read_meta(meta_path)
                self.objects[(meta.bucket, meta.key)] = meta

    def _write_meta(self, meta: ObjectMeta):
        out = io.BytesIO()
        out.write(_META_MAGIC)
        out.write(struct.pack("<BB", 1, 0))
        payload = io.BytesIO()
        for text in (meta.bucket, meta.key):
            raw = text.encode("utf-8")
            payload.write(struct.pack("<H", len(raw)))
            payload.write(raw)
        payload.write(struct.pack("<IQQ", meta.object_id, meta.row_count,
                                  meta.logical_bytes))
        schema_bytes = _schema_payload(meta.schema)
        payload.write(struct.pack("<I", len(schema_bytes)))
        payload.write(schema_bytes)
        payload.write(struct.pack("<H", len(meta.shards)))
        for s in meta.shards:
            payload.write(struct.pack("<QQHQ", s.start, s.stop, s.node, s.byte_size))
        payload.write(struct.pack("<H", len(meta.column_minmax)))
        for name, (lo, hi) in sorted(meta.column_minmax.items()):
            raw = name.encode("utf-8")
            payload.write(struct.pack("<H", len(raw)))
            payload.write(raw)
            payload.write(struct.pack("<dd", lo, hi))
        _write_frame(out, _FRAME_OBJECT, payload.getvalue())
        for h in meta.histograms.values():
            _write_frame(out, _FRAME_HISTOGRAM, histogram_to_bytes(h))
        _write_frame(out, _FRAME_META_END, b"")
        path = self.root / "_meta" / meta.bucket / f"{meta.object_id}.meta"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(out.getvalue())

    def _read_meta(self, path: Path) -> ObjectMeta:
        data = path.read_bytes()
        r = _Reader(data)
        if r.take(4) != _META_MAGIC:
            raise CorruptFrame(f"bad metadata magic in {path}")
        r.take(2)  # version, flags
        frame_type, payload = _read_frame(r)
        if frame_type != _FRAME_OBJECT:
            raise CorruptFrame("expected object frame first")
        p = _Reader(payload)
        bucket = p.take(p.u16()).decode("utf-8")
        key = p.take(p.u16()).decode("utf-8")
        object_id, row_count, logical = struct.unpack("<IQQ", p.take(20))
        schema = _decode_schema(p.take(p.u32()))
        shard_count = p.u16()
        shards = []
        for _ in range(shard_count):
            start, stop, node, size = struct.unpack("<QQHQ", p.take(26))
            shard_path = self._shard_path(bucket, object_id, len(shards))
            shards.append(ShardInfo(start, stop, node, shard_path, size))
        minmax = {}
        for _ in range(p.u16()):
            name = p.take(p.u16()).decode("utf-8")
            lo, hi = struct.unpack("<dd", p.take(16))
            minmax[name] = (lo, hi)
        histograms = {}
        while True:
            frame_type, payload = _read_frame(r)
            if frame_type == _FRAME_META_END:
                break
            if frame_type != _FRAME_HISTOGRAM:
                raise CorruptFrame(f"unexpected metadata frame {frame_type:#x}")
            h = histogram_from_bytes(payload)
            histograms[h.column] = h
        return ObjectMeta(bucket, key, object_id, schema, row_count, logical,
                          shards, histograms, minmax)

    def _shard_path(self, bucket: str, object_id: int, shard: int) -> Path:
        space = self.buckets[bucket].space_id
        return self.root / bucket / str(space) / f"{object_id}.{shard}.tcol"

    # -- bucket / object API ---------------------------------------------------

    def create_bucket(self, name: str, shards: int = 1) -> BucketInfo:
        if name in self.buckets:
            raise DuplicateKey(f"bucket {name!r} already exists")
        if shards < 1:
            raise ValueError("shards must be >= 1")
        space_id = len(self.buckets)
        primary = space_id % self.config.array_nodes
        info = BucketInfo(name, space_id, shards, primary)
        self.buckets[name] = info
        (self.root / name / str(space_id)).mkdir(parents=True, exist_ok=True)
        self._save_manifest()
        return info

    def put_object(self, bucket: str, key: str, table: Table,
                   stats_rate: float = 0.01, stats_bins: int = 64,
                   stats_seed: int = 0) -> ObjectMeta:
        """Persist a table under bucket/key; builds frontend-side statistics."""
        if bucket not in self.buckets:
            raise NoSuchBucket(f"bucket {bucket!r} does not exist")
        if (bucket, key) in self.objects:
            raise DuplicateKey(f"object {bucket}/{key} already exists")
        if len(table.schema) == 0:
            raise ValueError("object schema needs at least one column")
        info = self.buckets[bucket]
        object_id = info.next_object_id
        info.next_object_id += 1

        rows = table.num_rows
        shard_count = min(info.shards, max(rows, 1))
        bounds = [round(i * rows / shard_count) for i in range(shard_count + 1)]
        shards = []
        for i in range(shard_count):
            start, stop = bounds[i], bounds[i + 1]
            part = slice_table(table, start, stop)
            path = self._shard_path(bucket, object_id, i)
            path.parent.mkdir(parents=True, exist_ok=True)
            blob = serialize_columnar(part)
            path.write_bytes(blob)
            node = (info.primary_node + i) % self.config.array_nodes
            shards.append(ShardInfo(start, stop, node, path, len(blob)))
            self._table_cache[path] = part

        histograms = {}
        minmax = {}
        for f in table.schema.fields:
            if not f.dtype.is_numeric_scalar:
                continue
            histograms[f.name] = build_histogram(
                table, f.name, sample_rate=stats_rate, bins=stats_bins,
                seed=stats_seed)
            lo, hi = _column_minmax(table, f.name)
            if lo is not None:
                minmax[f.name] = (lo, hi)

        meta = ObjectMeta(bucket, key, object_id, table.schema, rows,
                          logical_bytes(table), shards, histograms, minmax)
        self.objects[(bucket, key)] = meta
        self._write_meta(meta)
        self._save_manifest()
        return meta

    def get_object(self, bucket: str, key: str) -> Table:
        meta = self._meta(bucket, key)
        return concat_tables([self._shard_table(s) for s in meta.shards])

    def object_meta(self, bucket: str, key: str) -> ObjectMeta:
        return self._meta(bucket, key)

    def _meta(self, bucket: str, key: str) -> ObjectMeta:
        if bucket not in self.buckets:
            raise NoSuchBucket(f"bucket {bucket!r} does not exist")
        try:
            return self.objects[(bucket, key)]
        except KeyError:
            raise NoSuchObject(f"object {bucket}/{key} does not exist") from None

    def _shard_table(self, shard: ShardInfo) -> Table:
        cached = self._table_cache.get(shard.path)
        if cached is None:
            cached = deserialize_columnar(shard.path.read_bytes())
            self._table_cache[shard.path] = cached
        return cached

    # -- querying ----------------------------------------------------------------

    def run_query(self, sql: str, object_ref: str, cfg: ClusterConfig | None = None,
                  output_format: str = "columnar",
                  forced_split: int | None = None) -> QueryReport:
        cfg = cfg or self.config
        bucket, _, key = object_ref.partition("/")
        meta = self._meta(bucket, key)
        phases = _Phases()

        with phases.measure("plan"):
            plan = parse(sql, schema=meta.schema)
            diags = validate(plan)
            if diags:
                raise TierqueryError(
                    "plan validation failed: " + "; ".join(str(d) for d in diags))

        if cfg.mode in ("baseline", "pred"):
            report = self._run_client_side(plan, meta, cfg, phases, output_format)
        elif cfg.mode == "cos":
            report = self._run_cos(plan, meta, cfg, phases, output_format)
        else:
            report = self._run_oasis(plan, meta, cfg, phases, output_format,
                                     forced_split)
        return report

    # baseline / pred: everything client-side, FE is a pass-through.
    def _run_client_side(self, plan: Plan, meta: ObjectMeta, cfg: ClusterConfig,
                         phases: _Phases, output_format: str) -> QueryReport:
        skipped = False
        if cfg.mode == "pred":
            with phases.measure("optimize"):
                skipped = self._pred_skips_object(plan, meta)
        with phases.measure("array_exec"):
            if skipped:
                table = Table(meta.schema, ())
                bytes_a2fe = len(serialize_columnar(table))
                bytes_fe2c = bytes_a2fe
            else:
                table = concat_tables([self._shard_table(s) for s in meta.shards])
                bytes_a2fe = sum(s.byte_size for s in meta.shards)
                # The FE relays the whole object to the client as one stream.
                bytes_fe2c = len(serialize_columnar(table))
        with phases.measure("fe_exec"):
            ctx = ExecContext(tables={plan.nodes[0].table_ref: table},
                              batch_rows=65536)
            result = execute(plan, ctx)
            out_bytes = emit_output(result, output_format)
        seconds = (bytes_a2fe / cfg.interconnect_bandwidth
                   + bytes_fe2c / cfg.client_bandwidth)
        phases.timings["transfer"] = seconds
        return QueryReport(cfg.mode, result, bytes_a2fe, bytes_fe2c, seconds,
                           phases.timings, None, output_format, out_bytes)

    def _pred_skips_object(self, plan: Plan, meta: ObjectMeta) -> bool:
        """Footer-style skip: object excluded when a range conjunct is
        provably empty against exact column min/max."""
        from .costmodel import split_conjuncts, _apply_conjunct, _Interval

        predicate = None
        for node in plan.nodes:
            if isinstance(node, Filter):
                predicate = node.predicate
                break
        if predicate is None:
            return False
        intervals: dict[str, _Interval] = {}
        for conjunct in split_conjuncts(predicate):
            _apply_conjunct(conjunct, intervals)  # unsupported conjuncts ignored
        for name, iv in intervals.items():
            if not iv.has_range or name not in meta.column_minmax:
                continue
            lo, hi = meta.column_minmax[name]
            if iv.lo > hi or (iv.lo == hi and iv.lo_open):
                return True
            if iv.hi < lo or (iv.hi == lo and iv.hi_open):
                return True
        return False

    def _run_cos(self, plan: Plan, meta: ObjectMeta, cfg: ClusterConfig,
                 phases: _Phases, output_format: str) -> QueryReport:
        with phases.measure("array_exec"):
            table = concat_tables([self._shard_table(s) for s in meta.shards])
            bytes_a2fe = sum(s.byte_size for s in meta.shards)
        with phases.measure("fe_exec"):
            ctx = ExecContext(tables={plan.nodes[0].table_ref: table},
                              batch_rows=65536)
            result = execute(plan, ctx)
            out_bytes = emit_output(result, output_format)
        bytes_fe2c = len(out_bytes)
        seconds = (bytes_a2fe / cfg.interconnect_bandwidth
                   + bytes_fe2c / cfg.client_bandwidth)
        phases.timings["transfer"] = seconds
        return QueryReport(cfg.mode, result, bytes_a2fe, bytes_fe2c, seconds,
                           phases.timings, None, output_format, out_bytes)

    def _run_oasis(self, plan: Plan, meta: ObjectMeta, cfg: ClusterConfig,
                   phases: _Phases, output_format: str,
                   forced_split: int | None) -> QueryReport:
        shard_count = len(meta.shards)
        table_ref = plan.nodes[0].table_ref
        with phases.measure("optimize"):
            if forced_split is not None:
                split = self._forced_split(plan, meta, forced_split, shard_count)
            else:
                strategy = choose_strategy(plan, meta.histograms, meta.logical_bytes)
                if strategy == STRATEGY_CAD:
                    split = cad_split(plan, meta.logical_bytes, meta.histograms,
                                      array_nodes=shard_count)
                else:
                    split = sap_place(plan, array_nodes=shard_count)
            dp = decompose(plan, split)

        with phases.measure("array_exec"):
            raw_parts = self._execute_array_side(dp.array_plan, meta, table_ref, cfg)

        if split.lazy:
            split, dp, raw_parts = self._lazy_extend(
                plan, split, dp, raw_parts, meta, cfg, phases)

        with phases.measure("transfer"):
            shipped = [dp.to_intermediate(t) for t in raw_parts]
            blobs = [serialize_columnar(t) for t in shipped]
            bytes_a2fe = sum(len(b) for b in blobs)
            intermediate = concat_tables(
                [deserialize_columnar(b) for b in blobs])

        with phases.measure("fe_exec"):
            fe_ctx = ExecContext(tables={dp.intermediate_ref: intermediate},
                                 batch_rows=65536)
            result = dp.restore_output_names(execute(dp.fe_plan, fe_ctx))
            out_bytes = emit_output(result, output_format)

        bytes_fe2c = len(out_bytes)
        seconds = (bytes_a2fe / cfg.interconnect_bandwidth
                   + bytes_fe2c / cfg.client_bandwidth)
        phases.timings["transfer"] = seconds
        return QueryReport(cfg.mode, result, bytes_a2fe, bytes_fe2c, seconds,
                           phases.timings, split, output_format, out_bytes)

    def _forced_split(self, plan: Plan, meta: ObjectMeta, split_after: int,
                      shard_count: int) -> SplitDecision:
        agg_index = next((i for i, n in enumerate(plan.nodes)
                          if isinstance(n, Aggregate)), None)
        partial = (shard_count > 1 and agg_index is not None
                   and agg_index <= split_after)
        try:
            estimates = propagate_sizes(plan, meta.logical_bytes, meta.histograms)
        except Exception:
            estimates = None
        return SplitDecision(
            strategy=STRATEGY_CAD, split_after=split_after,
            estimates=estimates, partial_agg=partial, lazy=False,
            boundary_index=first_boundary_index(plan))

    def _execute_array_side(self, array_plan: Plan, meta: ObjectMeta,
                            table_ref: str, cfg: ClusterConfig) -> list[Table]:
        def run_shard(shard: ShardInfo) -> Table:
            ctx = ExecContext(
                tables={table_ref: self._shard_table(shard)},
                batch_rows=65536,
                rowid_offsets={table_ref: shard.start})
            return execute(array_plan, ctx)

        if len(meta.shards) == 1:
            return [run_shard(meta.shards[0])]
        with ThreadPoolExecutor(max_workers=cfg.array_nodes) as pool:
            return list(pool.map(run_shard, meta.shards))

    def _lazy_extend(self, plan: Plan, split: SplitDecision, dp: DecomposedPlans,
                     raw_parts: list[Table], meta: ObjectMeta, cfg: ClusterConfig,
                     phases: _Phases):
        """Structure-aware lazy transfer: extend array-side execution while
        the measured intermediate exceeds the byte budget."""
        shard_count = len(meta.shards)
        budget = cfg.transfer_budget

        def measured() -> int:
            return sum(len(serialize_columnar(dp.to_intermediate(t)))
                       for t in raw_parts)

        size = measured()
        if size > sum(s.byte_size for s in meta.shards):
            log.warning("lazy intermediate (%d B) exceeds the full object size "
                        "(%d B); transferring anyway",
                        size, sum(s.byte_size for s in meta.shards))
        if budget is None:
            return split, dp, raw_parts

        limit = split.boundary_index if split.boundary_index is not None \
            else len(plan.nodes)
        current = split.split_after
        while size > budget and current + 1 < limit:
            next_node = plan.nodes[current + 1]
            partial = split.partial_agg
            with phases.measure("array_exec"):
                if isinstance(next_node, Aggregate) and shard_count > 1:
                    from .soda import rewrite_partial_aggregate
                    partial_node, _ = rewrite_partial_aggregate(next_node)
                    raw_parts = [apply_node(partial_node, t) for t in raw_parts]
                    partial = True
                    current += 1
                    split = replace(split, split_after=current, partial_agg=partial)
                    dp = decompose(plan, split)
                    size = measured()
                    break  # nothing may run below past a sharded aggregate
                raw_parts = [apply_node(next_node, t) for t in raw_parts]
                current += 1
                split = replace(split, split_after=current, partial_agg=partial)
                dp = decompose(plan, split)
                size = measured()
        return split, dp, raw_parts

    # -- benchmarking ---------------------------------------------------------

    def feasible_splits(self, plan: Plan, shard_count: int) -> list[int]:
        """Split points that preserve semantics for the given sharding."""
        n = len(plan.nodes)
        if shard_count <= 1:
            return list(range(n))
        boundary = first_boundary_index(plan)
        limit = boundary if boundary is not None else n
        agg_index = next((i for i, nd in enumerate(plan.nodes)
                          if isinstance(nd, Aggregate)), None)
        out = []
        for s in range(limit):
            if agg_index is not None and s > agg_index:
                break
            out.append(s)
        return out

    def bench_splits(self, sql: str, object_ref: str,
                     cfg: ClusterConfig | None = None,
                     output_format: str = "columnar") -> list[dict]:
        """Execute every feasible split end-to-end and mark the planner's pick.

        Raises EstimationUnavailable for plans outside coefficient-based
        splitting (use mode comparison for those).
        """
        cfg = cfg or self.config
        bucket, _, key = object_ref.partition("/")
        meta = self._meta(bucket, key)
        plan = parse(sql, schema=meta.schema)
        diags = validate(plan)
        if diags:
            raise TierqueryError(
                "plan validation failed: " + "; ".join(str(d) for d in diags))
        strategy = choose_strategy(plan, meta.histograms, meta.logical_bytes)
        if strategy != STRATEGY_CAD:
            raise EstimationUnavailable(
                "bench enumerates coefficient-based splits only")
        shard_count = len(meta.shards)
        chosen = cad_split(plan, meta.logical_bytes, meta.histograms,
                           array_nodes=shard_count).split_after
        oasis_cfg = replace(cfg, mode="oasis")
        rows = []
        for s in self.feasible_splits(plan, shard_count):
            report = self.run_query(sql, object_ref, oasis_cfg,
                                    output_format=output_format, forced_split=s)
            est = report.split.estimates
            est_bytes = None
            if est is not None and est.nodes[s].output_bytes is not None:
                est_bytes = est.nodes[s].output_bytes
            rows.append({
                "split_after": s,
                "chosen": s == chosen,
                "estimated_bytes": est_bytes,
                "bytes_array_to_fe": report.bytes_array_to_fe,
                "bytes_fe_to_client": report.bytes_fe_to_client,
                "simulated_transfer_seconds": report.simulated_transfer_seconds,
                "timings": {k: round(v, 6) for k, v in report.timings.items()},
                "result_hash": report.result_hash,
                "rows": report.result.num_rows,
            })
        return rows


def _column_minmax(table: Table, column: str):
    lo = None
    hi = None
    for batch in table.batches:
        col = batch.column(column)
        vals = col.values[col.validity]
        if len(vals) == 0:
            continue
        b_lo = float(vals.min())
        b_hi = float(vals.max())
        lo = b_lo if lo is None else min(lo, b_lo)
        hi = b_hi if hi is None else max(hi, b_hi)
    return lo, hi
