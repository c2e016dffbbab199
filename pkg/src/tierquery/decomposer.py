"""Mechanical split of a plan into equivalent array-side and frontend plans.

``decompose`` cuts the chain after the chosen operator.  The array plan keeps
nodes ``[0 .. split_after]`` (with the aggregate rewritten to its partial form
when the split decision says so); the frontend plan starts with a read over
the intermediate result handle and continues with the remaining nodes (plus
the final-aggregate merge when a partial rewrite applied).

Intermediate columns are renamed to generated temporary names (``t_a``,
``t_b``, ...) at the transfer boundary: the shipped table carries the renamed
schema, the frontend read declares it, and column references in frontend
nodes are rewritten in the same pass.  Nodes that emit explicit output names
(projections, aggregate measures) restore user-facing names; for plans whose
frontend side has no naming node the orchestrator restores the original
output names positionally (``restore_output_names``).

Each serialized subplan carries its own function registry (plan_to_text emits
exactly the functions a plan uses), so both sides round-trip independently.
"""

from __future__ import annotations

from dataclasses import dataclass

from .columnar import Schema, Table, rename_columns
from .errors import InvalidSplit
from .planir import (
    Aggregate,
    Plan,
    Read,
    Filter,
    Project,
    Sort,
    SortKey,
    Measure,
    output_schema,
    rewrite_column_refs,
)
from .soda import SplitDecision, rewrite_partial_aggregate


@dataclass(frozen=True)
class DecomposedPlans:
    array_plan: Plan
    fe_plan: Plan
    intermediate_schema: Schema  # temp-named; equals the fe read's base schema
    temp_names: dict[str, str]  # original intermediate name -> generated name
    intermediate_ref: str
    final_output_names: tuple[str, ...]

    def to_intermediate(self, table: Table) -> Table:
        """Apply the transfer-boundary renaming to an array-side result."""
        return rename_columns(table, self.temp_names)

    def restore_output_names(self, table: Table) -> Table:
        """Restore the original plan's output column names positionally."""
        mapping = dict(zip(table.schema.names, self.final_output_names))
        return rename_columns(table, mapping)


def _letters(i: int) -> str:
    """0 -> a, 25 -> z, 26 -> aa, ... (bijective base-26)."""
    out = []
    i += 1
    while i > 0:
        i, rem = divmod(i - 1, 26)
        out.append(chr(ord("a") + rem))
    return "".join(reversed(out))


def generate_temp_names(schema: Schema) -> dict[str, str]:
    """Deterministic, injective original->generated mapping.

    Generated names run t_a, t_b, ..., t_z, t_aa, ...; candidates already
    present as field names are skipped so the mapping never collides.
    """
    existing = set(schema.names)
    mapping: dict[str, str] = {}
    counter = 0
    for f in schema.fields:
        while True:
            candidate = "t_" + _letters(counter)
            counter += 1
            if candidate not in existing:
                break
        mapping[f.name] = candidate
    return mapping


def infer_intermediate_schema(array_plan: Plan) -> Schema:
    """Output schema of the array-side subplan (before temp renaming)."""
    return output_schema(array_plan)


def _rewrite_node(node, mapping: dict[str, str]):
    if isinstance(node, Filter):
        return Filter(rewrite_column_refs(node.predicate, mapping))
    if isinstance(node, Project):
        return Project(tuple(
            (rewrite_column_refs(e, mapping), name) for e, name in node.outputs))
    if isinstance(node, Aggregate):
        measures = tuple(
            Measure(
                m.fn,
                rewrite_column_refs(m.expr, mapping) if m.expr is not None else None,
                m.name,
                rewrite_column_refs(m.count_expr, mapping)
                if m.count_expr is not None else None,
            )
            for m in node.measures)
        groupings = tuple(mapping.get(g, g) for g in node.groupings)
        return Aggregate(groupings, measures, node.phase)
    if isinstance(node, Sort):
        return Sort(tuple(
            SortKey(rewrite_column_refs(k.expr, mapping), k.ascending)
            for k in node.keys))
    raise InvalidSplit(f"cannot rewrite node {node!r}")


def decompose(plan: Plan, split: SplitDecision) -> DecomposedPlans:
    """Split a validated plan at the decision point.

    The array plan must execute first; its (renamed) output feeds the
    frontend read.  Raises InvalidSplit for out-of-range split points or a
    partial flag without an aggregate on the array side.
    """
    n = len(plan.nodes)
    if not (0 <= split.split_after < n):
        raise InvalidSplit(f"split_after {split.split_after} out of range [0, {n})")

    array_nodes = list(plan.nodes[: split.split_after + 1])
    final_agg = None
    if split.partial_agg:
        agg_positions = [i for i, node in enumerate(array_nodes)
                         if isinstance(node, Aggregate)]
        if not agg_positions:
            raise InvalidSplit("partial aggregation requested without an aggregate "
                               "on the array side")
        ai = agg_positions[-1]
        if ai != split.split_after:
            raise InvalidSplit(
                "partial aggregation requires the aggregate to be the last "
                f"array-side node (aggregate at {ai}, split at {split.split_after})")
        partial, final_agg = rewrite_partial_aggregate(array_nodes[ai])
        array_nodes[ai] = partial

    array_plan = Plan(tuple(array_nodes))
    raw_schema = infer_intermediate_schema(array_plan)
    temp_names = generate_temp_names(raw_schema)
    intermediate_schema = raw_schema.rename(temp_names)

    source_ref = plan.nodes[0].table_ref if isinstance(plan.nodes[0], Read) else "plan"
    handle = f"__intermediate__{source_ref}"

    # Thread the rename through the frontend chain: references resolve
    # against temp names until a node emits explicit output names again.
    # Projections restore every name; aggregates restore measure names while
    # group keys stay temp-named until projected.
    fe_nodes: list = [Read(handle, intermediate_schema)]
    mapping = dict(temp_names)

    def push(node):
        nonlocal mapping
        fe_nodes.append(_rewrite_node(node, mapping))
        if isinstance(node, Project):
            mapping = {}
        elif isinstance(node, Aggregate):
            mapping = {g: mapping[g] for g in node.groupings if g in mapping}

    if final_agg is not None:
        push(final_agg)
    for nd in plan.nodes[split.split_after + 1:]:
        push(nd)

    fe_plan = Plan(tuple(fe_nodes), annotations=(("intermediate", handle),))
    return DecomposedPlans(
        array_plan=array_plan,
        fe_plan=fe_plan,
        intermediate_schema=intermediate_schema,
        temp_names=temp_names,
        intermediate_ref=handle,
        final_output_names=tuple(output_schema(plan).names),
    )


def execute_decomposed(dp: DecomposedPlans, tables: dict[str, Table],
                       batch_rows: int = 65536) -> Table:
    """Run array plan then frontend plan; output names restored.

    Single-node convenience used by tests and the plan inspector; the cluster
    orchestrator performs the same steps with metering in between.
    """
    from .executor import ExecContext, execute

    ctx = ExecContext(tables=dict(tables), batch_rows=batch_rows)
    intermediate = dp.to_intermediate(execute(dp.array_plan, ctx))
    fe_ctx = ExecContext(tables={dp.intermediate_ref: intermediate},
                         batch_rows=batch_rows)
    return dp.restore_output_names(execute(dp.fe_plan, fe_ctx))
