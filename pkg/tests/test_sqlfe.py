"""SQL frontend: chain shapes, diagnostics, and the printer round-trip."""

import pytest

from corpus import ALL_QUERIES, Q1, Q2, Q3, Q4
from sql_printer import plan_to_sql

from tierquery import datagen, sqlfe
from tierquery.columnar import DataType
from tierquery.errors import SqlSyntaxError, UnsupportedFeature
from tierquery.planir import (
    Aggregate,
    ArrayIndex,
    Between,
    Filter,
    Func,
    Project,
    Read,
    Sort,
    node_name,
    validate,
    walk_expr,
)


def chain(plan):
    return [node_name(n) for n in plan.nodes]


class TestShapes:
    def test_q1_chain(self):
        plan = sqlfe.parse(Q1.sql, datagen.LAGHOS_SCHEMA)
        assert chain(plan) == ["read", "filter", "aggregate", "project", "sort"]
        agg = plan.nodes[2]
        assert agg.groupings == ("vertex_id",)
        assert [m.fn for m in agg.measures] == ["min", "min", "min", "min", "avg"]
        assert [m.name for m in agg.measures] == ["VID", "X", "Y", "Z", "E"]
        sort = plan.nodes[4]
        assert sort.keys[0].ascending
        assert validate(plan) == []

    def test_bare_select(self):
        plan = sqlfe.parse("SELECT x FROM t")
        assert chain(plan) == ["read", "project"]

    def test_q4_chain(self):
        plan = sqlfe.parse(Q4.sql, datagen.HEP_SCHEMA)
        assert chain(plan) == ["read", "filter", "project"]
        pred = plan.nodes[1].predicate
        nodes = list(walk_expr(pred))
        assert any(isinstance(n, ArrayIndex) for n in nodes)
        assert any(isinstance(n, Between) for n in nodes)
        fns = {n.name for n in nodes if isinstance(n, Func)}
        assert {"sqrt", "cosh", "cos"} <= fns
        assert validate(plan) == []

    def test_q2_rowid_materialized(self):
        plan = sqlfe.parse(Q2.sql, datagen.DEEPWATER_SCHEMA)
        read = plan.nodes[0]
        assert read.base_schema.names[-1] == "rowid"
        assert read.base_schema.field("rowid").dtype is DataType.INT64
        assert validate(plan) == []

    def test_q3_modulo_chain(self):
        plan = sqlfe.parse(Q3.sql, datagen.DEEPWATER_SCHEMA)
        assert chain(plan) == ["read", "filter", "aggregate", "project"]
        assert validate(plan) == []

    def test_group_only_query(self):
        plan = sqlfe.parse("SELECT vertex_id FROM t GROUP BY vertex_id",
                           datagen.LAGHOS_SCHEMA)
        assert chain(plan) == ["read", "aggregate", "project"]

    def test_count_star(self):
        plan = sqlfe.parse("SELECT count(*) AS n FROM t", datagen.LAGHOS_SCHEMA)
        agg = plan.nodes[1]
        assert agg.measures[0].expr is None
        assert agg.measures[0].fn == "count"

    def test_keywords_case_insensitive(self):
        plan = sqlfe.parse("select x from t where x > 1 order by x desc")
        assert chain(plan) == ["read", "filter", "project", "sort"]
        assert not plan.nodes[3].keys[0].ascending

    def test_identifiers_case_sensitive(self):
        plan = sqlfe.parse("SELECT X FROM t", datagen.LAGHOS_SCHEMA)
        assert validate(plan)  # X is not a column; x is


class TestDiagnostics:
    def test_missing_select_list(self):
        errs = sqlfe.parse_errors("SELECT FROM t")
        assert len(errs) == 1
        assert "select list" in errs[0]

    def test_join_unsupported(self):
        with pytest.raises(UnsupportedFeature) as err:
            sqlfe.parse("SELECT a FROM t JOIN u ON a = b")
        assert err.value.construct == "JOIN"

    def test_q2_clean(self):
        assert sqlfe.parse_errors(Q2.sql, datagen.DEEPWATER_SCHEMA) == []

    def test_all_corpus_queries_clean(self):
        for q in ALL_QUERIES:
            assert sqlfe.parse_errors(q.sql, datagen.schema_for(q.shape)) == []

    @pytest.mark.parametrize("sql,construct", [
        ("SELECT DISTINCT x FROM t", "DISTINCT"),
        ("SELECT x FROM t LIMIT 5", "LIMIT"),
        ("SELECT x FROM t GROUP BY x HAVING x > 1", "HAVING"),
        ("SELECT x FROM (SELECT x FROM t)", "subquery"),
    ])
    def test_unsupported_named(self, sql, construct):
        with pytest.raises(UnsupportedFeature) as err:
            sqlfe.parse(sql)
        assert construct in str(err.value)

    def test_syntax_error_position(self):
        with pytest.raises(SqlSyntaxError) as err:
            sqlfe.parse("SELECT x FROM t WHERE x >")
        assert err.value.position is not None

    def test_trailing_garbage(self):
        with pytest.raises(SqlSyntaxError):
            sqlfe.parse("SELECT x FROM t extra nonsense ;;")

    def test_nonaggregated_column_outside_group(self):
        with pytest.raises(UnsupportedFeature):
            sqlfe.parse("SELECT x, min(e) AS m FROM t GROUP BY vertex_id")


class TestPrinterRoundTrip:
    def test_corpus_round_trip(self):
        for q in ALL_QUERIES:
            schema = datagen.schema_for(q.shape)
            plan = sqlfe.parse(q.sql, schema)
            printed = plan_to_sql(plan)
            again = sqlfe.parse(printed, schema)
            assert again.nodes == plan.nodes, f"{q.name}: {printed}"
