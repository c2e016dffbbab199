"""Plan decomposition: temp naming, schema threading, recomposition."""

import random

import pytest

from corpus import ALL_QUERIES, Q1, random_array_query, random_scalar_query
from support import assert_rows_match

from tierquery import datagen, sqlfe
from tierquery.columnar import DataType, Schema
from tierquery.decomposer import (
    decompose,
    execute_decomposed,
    generate_temp_names,
    infer_intermediate_schema,
)
from tierquery.errors import InvalidSplit
from tierquery.executor import ExecContext, execute
from tierquery.planir import (
    Plan,
    node_name,
    output_schema,
    plan_to_text,
    validate,
)
from tierquery.soda import SplitDecision, cad_split
from tierquery.stats import build_histogram

F64 = DataType.FLOAT64


def stats_for(table):
    return {f.name: build_histogram(table, f.name)
            for f in table.schema.fields if f.dtype.is_numeric_scalar}


class TestTempNames:
    def test_three_columns(self):
        schema = Schema.of(("a", F64), ("b", F64), ("c", F64))
        assert generate_temp_names(schema) == {"a": "t_a", "b": "t_b", "c": "t_c"}

    def test_collision_skipped(self):
        schema = Schema.of(("t_a", F64), ("q", F64))
        mapping = generate_temp_names(schema)
        assert mapping["t_a"] == "t_b"
        assert mapping["q"] == "t_c"

    def test_27_columns_reach_double_letters(self):
        schema = Schema.of(*[(f"c{i}", F64) for i in range(27)])
        mapping = generate_temp_names(schema)
        names = list(mapping.values())
        assert len(set(names)) == 27
        assert names[-1] == "t_aa"
        assert names[25] == "t_z"


class TestDecompose:
    def test_q1_split_keeps_only_sort_above(self):
        table = datagen.laghos_box(20_000, seed=3, selectivity=1e-3)
        plan = sqlfe.parse(Q1.sql, table.schema)
        split = cad_split(plan, 1e8, stats_for(table))
        dp = decompose(plan, split)
        assert [node_name(n) for n in dp.array_plan.nodes] == [
            "read", "filter", "aggregate", "project"]
        assert [node_name(n) for n in dp.fe_plan.nodes] == ["read", "sort"]
        assert dp.fe_plan.annotation_map["intermediate"] == dp.intermediate_ref

    def test_intermediate_schema_keeps_original_names_prerename(self):
        table = datagen.laghos_box(5_000, seed=3, selectivity=1e-2)
        plan = sqlfe.parse(Q1.sql, table.schema)
        split = cad_split(plan, 1e8, stats_for(table))
        dp = decompose(plan, split)
        raw = infer_intermediate_schema(dp.array_plan)
        assert raw.names == ["VID", "X", "Y", "Z", "E"]
        assert dp.intermediate_schema.names == list(dp.temp_names[n]
                                                    for n in raw.names)
        assert [f.dtype for f in raw.fields] == [
            f.dtype for f in dp.intermediate_schema.fields]

    def test_read_only_subplan_schema(self):
        table = datagen.laghos_box(100, seed=1, selectivity=0.1)
        plan = sqlfe.parse("SELECT x FROM t WHERE x > 1.0", table.schema)
        split = SplitDecision("CAD", 0)
        dp = decompose(plan, split)
        assert [node_name(n) for n in dp.array_plan.nodes] == ["read"]
        assert infer_intermediate_schema(dp.array_plan) == table.schema
        assert [node_name(n) for n in dp.fe_plan.nodes] == [
            "read", "filter", "project"]

    def test_fe_plan_validates_against_intermediate(self):
        table = datagen.laghos_box(5_000, seed=3, selectivity=1e-2)
        for q in ALL_QUERIES:
            data = datagen.generate_table(q.shape, 2_000, 5)
            plan = sqlfe.parse(q.sql, data.schema)
            for split_after in range(len(plan.nodes)):
                split = SplitDecision("CAD", split_after)
                try:
                    dp = decompose(plan, split)
                except InvalidSplit:
                    continue
                assert validate(dp.array_plan) == []
                assert validate(dp.fe_plan) == [], q.name
                assert output_schema(dp.array_plan).rename(
                    dp.temp_names) == dp.intermediate_schema

    def test_partial_avg_intermediate_carries_sum_and_count(self):
        table = datagen.laghos_box(10_000, seed=6, selectivity=1e-2)
        plan = sqlfe.parse(Q1.sql, table.schema)
        split = cad_split(plan, 1e8, stats_for(table), array_nodes=2)
        dp = decompose(plan, split)
        raw = infer_intermediate_schema(dp.array_plan)
        assert "E_sum" in raw.names and "E_cnt" in raw.names
        assert "E" not in raw.names
        assert raw.field("E_sum").dtype is DataType.FLOAT64
        from tierquery.columnar import DataType as DT
        assert raw.field("E_cnt").dtype is DT.INT64

    def test_out_of_range_split(self):
        table = datagen.laghos_box(100, seed=1, selectivity=0.1)
        plan = sqlfe.parse("SELECT x FROM t", table.schema)
        with pytest.raises(InvalidSplit):
            decompose(plan, SplitDecision("CAD", 2))
        with pytest.raises(InvalidSplit):
            decompose(plan, SplitDecision("CAD", -1))

    def test_partial_flag_requires_aggregate(self):
        table = datagen.laghos_box(100, seed=1, selectivity=0.1)
        plan = sqlfe.parse("SELECT x FROM t WHERE x > 1.0", table.schema)
        with pytest.raises(InvalidSplit):
            decompose(plan, SplitDecision("CAD", 1, partial_agg=True))

    def test_serialized_subplans_deterministic(self):
        table = datagen.laghos_box(5_000, seed=3, selectivity=1e-2)
        plan = sqlfe.parse(Q1.sql, table.schema)
        split = cad_split(plan, 1e8, stats_for(table))
        a = decompose(plan, split)
        b = decompose(plan, split)
        assert plan_to_text(a.array_plan) == plan_to_text(b.array_plan)
        assert plan_to_text(a.fe_plan) == plan_to_text(b.fe_plan)


class TestRecompositionEquivalence:
    def _check(self, plan, table, ordered):
        ctx = ExecContext(tables={"t": table})
        whole = execute(plan, ctx).to_pylist()
        for split_after in range(len(plan.nodes)):
            try:
                dp = decompose(plan, SplitDecision("CAD", split_after))
            except InvalidSplit:
                continue
            joined = execute_decomposed(dp, {"t": table}).to_pylist()
            assert_rows_match(joined, whole, ordered=ordered)

    def test_corpus_plans_all_split_points(self):
        for q in ALL_QUERIES:
            table = datagen.generate_table(q.shape, 1_000, 11)
            plan = sqlfe.parse(q.sql, table.schema)
            self._check(plan, table, q.ordered)

    def test_randomized_plans(self):
        rng = random.Random(13)
        for _ in range(10):
            q = random_scalar_query(rng)
            table = datagen.generate_table(q.shape, 500, rng.randrange(1000))
            plan = sqlfe.parse(q.sql, table.schema)
            self._check(plan, table, q.ordered)
        for _ in range(5):
            q = random_array_query(rng)
            table = datagen.generate_table(q.shape, 500, rng.randrange(1000))
            plan = sqlfe.parse(q.sql, table.schema)
            self._check(plan, table, q.ordered)
