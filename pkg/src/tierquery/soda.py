"""Split planning for the two-tier hierarchy.

Two strategies cover the workload:

* Coefficient-aware splitting (``cad_split``) applies when every operator's
  output size is estimable from histograms.  Sizes are chained from the read
  size and the split lands on the operator whose estimated output is minimal;
  ties break toward the deeper split (more work stays on the array tier, no
  pointless hand-offs).  Estimation stops at boundaries: operators that need
  centralized processing (a global sort, or an aggregate with a measure such
  as median that has no partial form) always run on the frontend.

* Structure-aware placement (``sap_place``) applies when estimation is off
  the table: predicates or projections that reach into array elements, or
  references to columns without histograms.  Every array-touching operator is
  pinned to the tier holding the data; the transfer point beyond that is
  decided lazily at run time against a byte budget (see cluster).

``rewrite_partial_aggregate`` turns one full aggregate into the partial/final
pair used when object data spans several array nodes: partial state per node
(avg carries sum and count columns), merged on the frontend.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costmodel import SizeEstimate, StatsCatalog, propagate_sizes
from .errors import EstimationUnavailable, NonDecomposableMeasure
from .planir import (
    DECOMPOSABLE_AGGREGATES,
    Aggregate,
    Measure,
    Plan,
    Sort,
    contains_array_access,
    node_exprs,
    expr_contains_array_access,
)

STRATEGY_CAD = "CAD"
STRATEGY_SAP = "SAP"

BOUNDARY_GLOBAL_SORT = "global_sort"
BOUNDARY_NON_DECOMPOSABLE = "non_decomposable_measure"


@dataclass(frozen=True)
class BoundaryInfo:
    index: int
    reason: str


@dataclass(frozen=True)
class SplitDecision:
    strategy: str
    split_after: int  # index of the last node executed on the array tier
    estimates: SizeEstimate | None = None
    partial_agg: bool = False
    lazy: bool = False
    boundary_index: int | None = None

    def annotations(self) -> dict[str, str]:
        out = {
            "strategy": self.strategy,
            "split_after": str(self.split_after),
            "partial_agg": str(self.partial_agg).lower(),
            "lazy": str(self.lazy).lower(),
        }
        if self.boundary_index is not None:
            out["boundary_index"] = str(self.boundary_index)
        return out


def find_boundaries(plan: Plan) -> list[BoundaryInfo]:
    """Operators that must not run (whole) on the array tier."""
    out = []
    for i, node in enumerate(plan.nodes):
        if isinstance(node, Sort):
            out.append(BoundaryInfo(i, BOUNDARY_GLOBAL_SORT))
        elif isinstance(node, Aggregate):
            if any(m.fn not in DECOMPOSABLE_AGGREGATES for m in node.measures):
                out.append(BoundaryInfo(i, BOUNDARY_NON_DECOMPOSABLE))
    return out


def first_boundary_index(plan: Plan) -> int | None:
    boundaries = find_boundaries(plan)
    return boundaries[0].index if boundaries else None


def _aggregate_index(plan: Plan, upto: int) -> int | None:
    for i in range(min(upto, len(plan.nodes) - 1) + 1):
        if isinstance(plan.nodes[i], Aggregate):
            return i
    return None


def choose_strategy(plan: Plan, stats: StatsCatalog, read_bytes: float = 1.0) -> str:
    """SAP when any expression reaches into arrays or any coefficient is
    unknown; CAD otherwise."""
    if contains_array_access(plan):
        return STRATEGY_SAP
    estimates = propagate_sizes(plan, read_bytes, stats)
    if not estimates.all_known:
        return STRATEGY_SAP
    return STRATEGY_CAD


def cad_split(plan: Plan, read_bytes: float, stats: StatsCatalog,
              array_nodes: int = 1) -> SplitDecision:
    """Choose the split minimizing estimated transferred bytes.

    Candidates are the nodes before the first boundary (the read itself is
    always a candidate: it must run on the array tier).  Among candidates the
    one with minimal estimated output wins; equal estimates prefer the later
    node so execution stays below as long as it costs nothing.
    """
    estimates = propagate_sizes(plan, read_bytes, stats)
    if not estimates.all_known:
        raise EstimationUnavailable(
            "plan has unknown coefficients; use structure-aware placement")
    boundary = first_boundary_index(plan)
    limit = boundary if boundary is not None else len(plan.nodes)
    candidates = range(0, limit)
    best = 0
    best_bytes = None
    for i in candidates:
        size = estimates.nodes[i].output_bytes
        if best_bytes is None or size <= best_bytes:
            best, best_bytes = i, size
    agg_index = _aggregate_index(plan, best)
    partial = agg_index is not None and array_nodes > 1
    if partial:
        # Sharded data: per-node groups are incomplete until the frontend
        # merge, so nothing may run below past the aggregate itself.
        best = min(best, agg_index)
    return SplitDecision(
        strategy=STRATEGY_CAD,
        split_after=best,
        estimates=estimates,
        partial_agg=partial,
        lazy=False,
        boundary_index=boundary,
    )


def sap_place(plan: Plan, array_nodes: int = 1) -> SplitDecision:
    """Pin array-touching operators to the array tier.

    The static split lands after the last operator whose expressions address
    array elements (or after the read when none do); the lazy flag tells the
    orchestrator to extend execution below at run time while the intermediate
    exceeds the transfer budget.  No boundary may sit at or before the split.
    """
    last_array = 0
    for i, node in enumerate(plan.nodes):
        if any(expr_contains_array_access(e) for e in node_exprs(node)):
            last_array = i
    boundary = first_boundary_index(plan)
    if boundary is not None and boundary <= last_array:
        raise EstimationUnavailable(
            f"array-accessing node {last_array} sits at or beyond boundary {boundary}")
    agg_index = _aggregate_index(plan, last_array)
    partial = agg_index is not None and array_nodes > 1
    return SplitDecision(
        strategy=STRATEGY_SAP,
        split_after=last_array,
        estimates=None,
        partial_agg=partial,
        lazy=True,
        boundary_index=boundary,
    )


def rewrite_partial_aggregate(node: Aggregate) -> tuple[Aggregate, Aggregate]:
    """Split a full aggregate into per-node partial and frontend final nodes.

    Partial output carries the group keys plus one state column per measure;
    avg expands into ``<name>_sum`` and ``<name>_cnt``.  The final node merges
    states by group key: min of mins, max of maxes, sums of sums and counts,
    and avg as total sum over total count.
    """
    from .planir import ColumnRef

    if node.phase != "full":
        raise NonDecomposableMeasure(f"aggregate already in phase {node.phase!r}")
    bad = [m.fn for m in node.measures if m.fn not in DECOMPOSABLE_AGGREGATES]
    if bad:
        raise NonDecomposableMeasure(
            f"measure {bad[0]!r} needs global ordering and has no partial form")
    partial = Aggregate(node.groupings, node.measures, phase="partial")
    final_measures = []
    for m in node.measures:
        if m.fn == "avg":
            final_measures.append(Measure(
                "avg", ColumnRef(m.name + "_sum"), m.name,
                count_expr=ColumnRef(m.name + "_cnt")))
        else:
            final_measures.append(Measure(m.fn, ColumnRef(m.name), m.name))
    final = Aggregate(node.groupings, tuple(final_measures), phase="final")
    return partial, final
