"""Command-line surface: ingest, plan inspection, execution, benchmarks.

Machine-readable output (one JSON record per line) goes to stdout; human
summaries go to stderr, so the two never interleave on one stream.  Exit
codes: 0 success, 1 runtime/storage error, 2 usage or parse error.

The storage root comes from --root, the TIERQUERY_ROOT environment variable,
or ./tierquery-store.  Cluster defaults can be loaded from a key=value config
file (keys: array_nodes, interconnect_bandwidth, client_bandwidth,
transfer_budget, mode); command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen
from .cluster import Cluster, ClusterConfig, MODES
from .columnar import (
    CsvOptions,
    OUTPUT_FORMATS,
    emit_output,
    ingest_csv,
    logical_bytes,
    schema_from_json,
    schema_to_json,
)
from .costmodel import propagate_sizes
from .decomposer import decompose
from .errors import (
    GrammarError,
    SqlSyntaxError,
    TierqueryError,
    UnsupportedFeature,
)
from .planir import node_name, plan_to_text, validate
from .soda import STRATEGY_CAD, cad_split, choose_strategy, sap_place
from .sqlfe import parse

STATS_BAND = (0.005, 0.05)
_EXT = {"columnar": "tcol", "csv": "csv", "json": "json"}


def _machine(record: dict):
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _human(text: str):
    sys.stderr.write(text + "\n")


def _load_config(args) -> ClusterConfig:
    values = {}
    if getattr(args, "config", None):
        for line in Path(args.config).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    kwargs = {}
    if "array_nodes" in values:
        kwargs["array_nodes"] = int(values["array_nodes"])
    if "interconnect_bandwidth" in values:
        kwargs["interconnect_bandwidth"] = float(values["interconnect_bandwidth"])
    if "client_bandwidth" in values:
        kwargs["client_bandwidth"] = float(values["client_bandwidth"])
    if "transfer_budget" in values and values["transfer_budget"] not in ("", "none"):
        kwargs["transfer_budget"] = int(values["transfer_budget"])
    if "mode" in values:
        kwargs["mode"] = values["mode"]
    if getattr(args, "array_nodes", None) is not None:
        kwargs["array_nodes"] = args.array_nodes
    if getattr(args, "transfer_budget", None) is not None:
        kwargs["transfer_budget"] = args.transfer_budget
    if getattr(args, "mode", None):
        kwargs["mode"] = args.mode
    return ClusterConfig(**kwargs)


def _storage_root(args) -> Path:
    if args.root:
        return Path(args.root)
    env = os.environ.get("TIERQUERY_ROOT")
    if env:
        return Path(env)
    return Path("tierquery-store")


def _read_sql(args) -> str:
    if args.expr is not None:
        return args.expr
    if args.sql_file is None:
        raise SqlSyntaxError("no SQL given: pass a file or -e TEXT")
    return Path(args.sql_file).read_text(encoding="utf-8")


# -- subcommands ---------------------------------------------------------------

def cmd_put(args) -> int:
    schema = schema_from_json(Path(args.schema).read_text(encoding="utf-8"))
    with open(args.csv, "rb") as fh:
        table = ingest_csv(fh, schema, CsvOptions(batch_rows=args.batch_rows))
    if not (STATS_BAND[0] <= args.stats_rate <= STATS_BAND[1]):
        _human(f"warning: --stats-rate {args.stats_rate} is outside the "
               f"{STATS_BAND[0]:.3f}..{STATS_BAND[1]:.3f} sampling band; honored anyway")
    cluster = Cluster(_storage_root(args), _load_config(args))
    if args.bucket not in cluster.buckets:
        cluster.create_bucket(args.bucket, shards=args.shards)
    meta = cluster.put_object(args.bucket, args.key, table,
                              stats_rate=args.stats_rate)
    _machine({
        "event": "put",
        "bucket": meta.bucket,
        "key": meta.key,
        "rows": meta.row_count,
        "logical_bytes": meta.logical_bytes,
        "shards": len(meta.shards),
        "histograms": sorted(meta.histograms),
    })
    _human(f"stored {meta.bucket}/{meta.key}: {meta.row_count} rows, "
           f"{meta.logical_bytes} logical bytes, {len(meta.shards)} shard(s), "
           f"histograms on {len(meta.histograms)} column(s)")
    return 0


def cmd_plan(args) -> int:
    sql = _read_sql(args)
    cluster = Cluster(_storage_root(args), _load_config(args))
    bucket, _, key = args.object.partition("/")
    meta = cluster.object_meta(bucket, key)
    plan = parse(sql, schema=meta.schema)
    diags = validate(plan)
    if diags:
        for d in diags:
            _human(f"diagnostic: {d}")
        return 2
    estimates = propagate_sizes(plan, meta.logical_bytes, meta.histograms)
    strategy = choose_strategy(plan, meta.histograms, meta.logical_bytes)
    shard_count = len(meta.shards)
    if strategy == STRATEGY_CAD:
        split = cad_split(plan, meta.logical_bytes, meta.histograms,
                          array_nodes=shard_count)
    else:
        split = sap_place(plan, array_nodes=shard_count)
    dp = decompose(plan, split)

    per_node = []
    for i, (node, est) in enumerate(zip(plan.nodes, estimates.nodes)):
        per_node.append({
            "index": i,
            "operator": node_name(node),
            "coefficient": est.coefficient.value,
            "coefficient_source": est.coefficient.source,
            "input_bytes": est.input_bytes,
            "output_bytes": est.output_bytes,
        })
    _machine({
        "event": "plan",
        "object": args.object,
        "strategy": split.strategy,
        "split_after": split.split_after,
        "partial_agg": split.partial_agg,
        "lazy": split.lazy,
        "operators": per_node,
    })
    annotated = plan.with_annotations(split.annotations())
    _human("-- plan --")
    _human(plan_to_text(annotated).decode("utf-8").rstrip())
    _human("-- per-operator estimates --")
    for row in per_node:
        coeff = "?" if row["coefficient"] is None else f"{row['coefficient']:.6g}"
        out = "?" if row["output_bytes"] is None else f"{row['output_bytes']:.6g}"
        _human(f"  [{row['index']}] {row['operator']:<9} coeff={coeff:<10} "
               f"({row['coefficient_source']}) -> {out} B")
    _human(f"-- strategy {split.strategy}, split after node {split.split_after} --")
    _human("-- array-side plan --")
    _human(plan_to_text(dp.array_plan).decode("utf-8").rstrip())
    _human("-- frontend plan --")
    _human(plan_to_text(dp.fe_plan).decode("utf-8").rstrip())
    return 0


def cmd_run(args) -> int:
    sql = _read_sql(args)
    cluster = Cluster(_storage_root(args), _load_config(args))
    cfg = cluster.config
    report = cluster.run_query(sql, args.object, cfg, output_format=args.format)
    out_path = Path(args.out) if args.out else Path(f"result.{_EXT[args.format]}")
    out_path.write_bytes(report.output_bytes)
    record = report.to_record()
    record["event"] = "run"
    record["object"] = args.object
    record["result_path"] = str(out_path)
    _machine(record)
    _human(f"mode {report.mode}: {report.result.num_rows} rows -> {out_path}")
    _human(f"  array->FE {report.bytes_array_to_fe} B, "
           f"FE->client {report.bytes_fe_to_client} B, "
           f"simulated transfer {report.simulated_transfer_seconds:.6f} s")
    for phase, seconds in report.timings.items():
        _human(f"  {phase:<10} {seconds:.6f} s")
    return 0


def cmd_bench(args) -> int:
    sql = _read_sql(args)
    cluster = Cluster(_storage_root(args), _load_config(args))
    cfg = cluster.config
    if args.modes == "all":
        rows = []
        for mode in MODES:
            report = cluster.run_query(sql, args.object, replace(cfg, mode=mode),
                                       output_format=args.format)
            rec = report.to_record()
            rec["event"] = "bench_mode"
            rec["object"] = args.object
            _machine(rec)
            rows.append((mode, report))
        _human(f"{'mode':<10} {'rows':>8} {'array->FE':>12} {'FE->client':>12} "
               f"{'sim s':>10} hash")
        for mode, report in rows:
            _human(f"{mode:<10} {report.result.num_rows:>8} "
                   f"{report.bytes_array_to_fe:>12} {report.bytes_fe_to_client:>12} "
                   f"{report.simulated_transfer_seconds:>10.6f} "
                   f"{report.result_hash[:12]}")
        return 0
    rows = cluster.bench_splits(sql, args.object, cfg, output_format=args.format)
    for rec in rows:
        rec = dict(rec)
        rec["event"] = "bench_split"
        rec["object"] = args.object
        _machine(rec)
    _human(f"{'cfg':<6} {'split':>5} {'chosen':>7} {'est B':>12} {'array->FE':>12} "
           f"{'FE->client':>12} {'sim s':>10}")
    for i, rec in enumerate(rows, start=1):
        est = "?" if rec["estimated_bytes"] is None else f"{rec['estimated_bytes']:.0f}"
        _human(f"cfg{i:<3} {rec['split_after']:>5} "
               f"{'*' if rec['chosen'] else '':>7} {est:>12} "
               f"{rec['bytes_array_to_fe']:>12} {rec['bytes_fe_to_client']:>12} "
               f"{rec['simulated_transfer_seconds']:>10.6f}")
    return 0


def cmd_gen(args) -> int:
    knobs = {}
    if args.shape == "laghos-box":
        knobs["selectivity"] = args.selectivity
        knobs["vertices"] = args.groups
    elif args.shape == "deepwater-threshold":
        knobs["mid_fraction"] = args.mid_fraction
        knobs["timesteps"] = args.timesteps
    table = datagen.generate_table(args.shape, args.rows, args.seed, **knobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_suffix(".csv")
    schema_path = out.with_suffix(".schema.json")
    csv_path.write_bytes(emit_output(table, "csv"))
    schema_path.write_text(schema_to_json(table.schema), encoding="utf-8")
    record = {
        "event": "gen",
        "shape": args.shape,
        "rows": args.rows,
        "seed": args.seed,
        "csv": str(csv_path),
        "schema": str(schema_path),
        "logical_bytes": logical_bytes(table),
    }
    if args.shape == "laghos-box":
        from .executor import ExecContext, execute
        from .sqlfe import parse as parse_sql
        probe = parse_sql(
            "SELECT count(*) AS n FROM t WHERE x > 1.5 AND x < 1.6 AND y > 1.5 "
            "AND y < 1.6 AND z > 1.5 AND z < 1.6", schema=table.schema)
        n = execute(probe, ExecContext(tables={"t": table})).to_pylist()[0]["n"]
        record["in_box_fraction"] = n / args.rows if args.rows else 0.0
    _machine(record)
    _human(f"wrote {csv_path} and {schema_path} ({args.rows} rows, seed {args.seed})")
    return 0


# -- argument wiring -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tierquery",
        description="Columnar query offload simulator over a two-tier store.")
    parser.add_argument("--root", help="storage root (default: $TIERQUERY_ROOT "
                                       "or ./tierquery-store)")
    parser.add_argument("--config", help="key=value file with cluster defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("put", help="ingest a CSV file as an object")
    p.add_argument("bucket")
    p.add_argument("key")
    p.add_argument("csv")
    p.add_argument("schema")
    p.add_argument("--stats-rate", type=float, default=0.01)
    p.add_argument("--shards", type=int, default=1,
                   help="shard count if the bucket is created by this put")
    p.add_argument("--array-nodes", type=int, default=None)
    p.add_argument("--batch-rows", type=int, default=65536)
    p.set_defaults(fn=cmd_put)

    for name, fn in (("plan", cmd_plan), ("run", cmd_run), ("bench", cmd_bench)):
        p = sub.add_parser(name)
        p.add_argument("sql_file", nargs="?", help="file with one SELECT statement")
        p.add_argument("-e", "--expr", help="SQL text given inline")
        p.add_argument("object", help="object reference bucket/key")
        p.add_argument("--mode", choices=MODES, default=None)
        p.add_argument("--array-nodes", type=int, default=None)
        p.add_argument("--transfer-budget", type=int, default=None)
        if name in ("run", "bench"):
            p.add_argument("--format", choices=OUTPUT_FORMATS, default="columnar")
        if name == "run":
            p.add_argument("--out", help="result file (default result.<ext>)")
        if name == "bench":
            p.add_argument("--enumerate-splits", action="store_true",
                           help="run every feasible split configuration")
            p.add_argument("--modes", choices=["all"], default=None,
                           help="compare the four modes instead of splits")
        p.set_defaults(fn=fn)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("shape", choices=datagen.SHAPES)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--selectivity", type=float, default=1e-4,
                   help="laghos-box in-box fraction")
    p.add_argument("--groups", type=int, default=1024,
                   help="laghos-box distinct vertex count")
    p.add_argument("--mid-fraction", type=float, default=0.01,
                   help="deepwater strictly-interior fraction")
    p.add_argument("--timesteps", type=int, default=50)
    p.set_defaults(fn=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (SqlSyntaxError, UnsupportedFeature, GrammarError) as exc:
        _human(f"error: {exc}")
        return 2
    except TierqueryError as exc:
        _human(f"error: {exc}")
        return 1
    except OSError as exc:
        _human(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
