"""Columnar query offload simulator over a two-tier object store.

The package splits SQL-subset queries into array-side and frontend subplans,
executes them over a simulated storage hierarchy, and meters every byte that
crosses a tier.  Entry points:

* :mod:`tierquery.columnar` -- tables, CSV ingest, the TIERCOL wire format.
* :mod:`tierquery.sqlfe` / :mod:`tierquery.planir` -- SQL to plan IR.
* :mod:`tierquery.stats` / :mod:`tierquery.costmodel` -- histograms and the
  byte-ratio cost model.
* :mod:`tierquery.soda` / :mod:`tierquery.decomposer` -- split planning and
  mechanical plan decomposition.
* :mod:`tierquery.executor` -- vectorized execution.
* :mod:`tierquery.cluster` -- the simulated two-tier cluster and metering.
* :mod:`tierquery.cli` -- the ``tierquery`` command.
"""

from .columnar import (
    ColumnBatch,
    CsvOptions,
    DataType,
    Field,
    Schema,
    Table,
    deserialize_columnar,
    emit_output,
    ingest_csv,
    logical_bytes,
    serialize_columnar,
)
from .cluster import Cluster, ClusterConfig, QueryReport
from .executor import ExecContext, execute
from .planir import Plan, plan_to_text, text_to_plan, validate
from .sqlfe import parse

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusterConfig",
    "ColumnBatch",
    "CsvOptions",
    "DataType",
    "ExecContext",
    "Field",
    "Plan",
    "QueryReport",
    "Schema",
    "Table",
    "deserialize_columnar",
    "emit_output",
    "execute",
    "ingest_csv",
    "logical_bytes",
    "parse",
    "plan_to_text",
    "serialize_columnar",
    "text_to_plan",
    "validate",
]
