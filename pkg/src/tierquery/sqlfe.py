"""SQL subset frontend: single-table SELECT statements into validated plans.

Accepted shape::

    SELECT item [AS alias], ...
    FROM table
    [WHERE predicate]
    [GROUP BY col, ...]
    [ORDER BY expr [ASC|DESC], ...]

Keywords and function names are case-insensitive; identifiers are
case-sensitive.  ``col[n]`` addresses array elements with 1-based ordinals.
``rowid`` is a virtual Int64 column (0-based ingestion order) materialized at
the read when referenced.  Constructs outside the subset (JOIN, subqueries,
HAVING, LIMIT, DISTINCT, ...) raise UnsupportedFeature naming the construct.

The produced chain is canonical:
Read -> [Filter] -> [Aggregate] -> [Project] -> [Sort].
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .columnar import DataType, Field, Schema
from .errors import SqlSyntaxError, UnsupportedFeature
from .planir import (
    AGGREGATE_FUNCTIONS,
    SCALAR_FUNCTIONS,
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
    Measure,
    Or,
    Plan,
    Project,
    Read,
    Sort,
    SortKey,
    expr_column_refs,
)

ROWID = "rowid"

_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "AS", "AND", "OR",
    "BETWEEN", "IS", "NOT", "NULL", "ASC", "DESC",
}

# Recognized so they can be rejected with a useful message.
_UNSUPPORTED_KEYWORDS = {
    "JOIN": "JOIN", "INNER": "JOIN", "LEFT": "JOIN", "RIGHT": "JOIN",
    "OUTER": "JOIN", "CROSS": "JOIN", "ON": "JOIN",
    "HAVING": "HAVING", "LIMIT": "LIMIT", "OFFSET": "OFFSET",
    "DISTINCT": "DISTINCT", "UNION": "UNION", "EXCEPT": "EXCEPT",
    "INTERSECT": "INTERSECT",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><=|>=|!=|<>|[-+*/%<>=(),;\[\]])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | string | op | keyword | end
    text: str
    pos: int


def _tokenize(sql: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise SqlSyntaxError(f"unexpected character {sql[pos]!r}", position=pos)
        if m.lastgroup != "ws":
            text = m.group()
            kind = m.lastgroup
            if kind == "ident" and text.upper() in _KEYWORDS:
                kind, text = "keyword", text.upper()
            elif kind == "ident" and text.upper() in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedFeature(_UNSUPPORTED_KEYWORDS[text.upper()])
            tokens.append(Token(kind, text, pos))
        pos = m.end()
    tokens.append(Token("end", "", len(sql)))
    return tokens


@dataclass
class SqlQuery:
    """Parsed clause structure before plan construction."""

    select_list: list[tuple[Expr | None, str | None, str | None]]
    # each item: (expr, aggregate fn or None, alias or None); expr is None
    # only for count(*)
    from_ref: str = ""
    where: Expr | None = None
    group_by: list[str] = field(default_factory=list)
    order_by: list[tuple[Expr, bool]] = field(default_factory=list)


class _Parser:
    def __init__(self, sql: str):
        self.tokens = _tokenize(sql)
        self.i = 0

    # -- token helpers ------------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise SqlSyntaxError(f"got {tok.text or 'end of input'!r}",
                                 position=tok.pos, expected=[want])
        return self.advance()

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        tok = self.peek()
        if tok.kind == kind and (text is None or tok.text == text):
            return self.advance()
        return None

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self._or_expr()

    def _or_expr(self) -> Expr:
        terms = [self._and_expr()]
        while self.accept("keyword", "OR"):
            terms.append(self._and_expr())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def _and_expr(self) -> Expr:
        terms = [self._predicate()]
        while self.accept("keyword", "AND"):
            terms.append(self._predicate())
        return terms[0] if len(terms) == 1 else And(tuple(terms))

    def _predicate(self) -> Expr:
        left = self._additive()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("=", "!=", "<>", "<", "<=", ">", ">="):
            self.advance()
            op = "!=" if tok.text == "<>" else tok.text
            return Cmp(op, left, self._additive())
        if tok.kind == "keyword" and tok.text == "BETWEEN":
            self.advance()
            lo = self._additive()
            self.expect("keyword", "AND")
            hi = self._additive()
            return Between(left, lo, hi)
        if tok.kind == "keyword" and tok.text == "IS":
            self.advance()
            self.expect("keyword", "NOT")
            self.expect("keyword", "NULL")
            return IsNotNull(left)
        return left

    def _additive(self) -> Expr:
        left = self._multiplicative()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("+", "-"):
                self.advance()
                left = Arith(tok.text, left, self._multiplicative())
            else:
                return left

    def _multiplicative(self) -> Expr:
        left = self._unary()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("*", "/", "%"):
                self.advance()
                left = Arith(tok.text, left, self._unary())
            else:
                return left

    def _unary(self) -> Expr:
        if self.accept("op", "-"):
            operand = self._unary()
            if isinstance(operand, Literal) and operand.value is not None:
                return Literal(-operand.value, operand.dtype)
            return Arith("-", Literal(0, DataType.INT64), operand)
        return self._postfix()

    def _postfix(self) -> Expr:
        expr = self._primary()
        while self.accept("op", "["):
            tok = self.expect("number")
            if "." in tok.text or "e" in tok.text.lower():
                raise SqlSyntaxError("array ordinal must be an integer", position=tok.pos)
            self.expect("op", "]")
            expr = ArrayIndex(expr, int(tok.text))
        return expr

    def _primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            if "." in tok.text or "e" in tok.text.lower():
                return Literal(float(tok.text), DataType.FLOAT64)
            return Literal(int(tok.text), DataType.INT64)
        if tok.kind == "string":
            self.advance()
            return Literal(tok.text[1:-1].replace("''", "'"), DataType.UTF8)
        if tok.kind == "op" and tok.text == "(":
            if self.tokens[self.i + 1].kind == "keyword" \
                    and self.tokens[self.i + 1].text == "SELECT":
                raise UnsupportedFeature("subquery")
            self.advance()
            expr = self.parse_expr()
            self.expect("op", ")")
            return expr
        if tok.kind == "ident":
            self.advance()
            if self.peek().kind == "op" and self.peek().text == "(":
                return self._call(tok)
            return ColumnRef(tok.text)
        raise SqlSyntaxError(f"got {tok.text or 'end of input'!r}",
                             position=tok.pos, expected=["expression"])

    def _call(self, name_tok: Token) -> Expr:
        fn = name_tok.text.lower()
        self.expect("op", "(")
        if fn == "count" and self.accept("op", "*"):
            self.expect("op", ")")
            return _CountStar()
        args = [self.parse_expr()]
        while self.accept("op", ","):
            args.append(self.parse_expr())
        self.expect("op", ")")
        if fn in AGGREGATE_FUNCTIONS:
            if len(args) != 1:
                raise SqlSyntaxError(f"{fn} takes one argument", position=name_tok.pos)
            for sub in _walk_maybe_agg(args[0]):
                if isinstance(sub, (_AggCall, _CountStar)):
                    raise UnsupportedFeature("nested aggregate")
            return _AggCall(fn, args[0])
        if fn in SCALAR_FUNCTIONS:
            return Func(fn, tuple(args))
        raise SqlSyntaxError(f"unknown function {name_tok.text!r}",
                             position=name_tok.pos)

    # -- statement -----------------------------------------------------------

    def parse_query(self) -> SqlQuery:
        self.expect("keyword", "SELECT")
        query = SqlQuery(select_list=[])
        if self.peek().kind == "keyword" and self.peek().text == "FROM":
            tok = self.peek()
            raise SqlSyntaxError("missing select list", position=tok.pos,
                                 expected=["expression"])
        while True:
            expr = self.parse_expr()
            alias = None
            if self.accept("keyword", "AS"):
                alias = self.expect("ident").text
            elif self.peek().kind == "ident":
                alias = self.advance().text
            query.select_list.append(self._select_item(expr, alias))
            if not self.accept("op", ","):
                break
        self.expect("keyword", "FROM")
        if self.peek().kind == "op" and self.peek().text == "(":
            raise UnsupportedFeature("subquery")
        query.from_ref = self.expect("ident").text
        if self.accept("op", ","):
            raise UnsupportedFeature("JOIN")
        if self.accept("keyword", "WHERE"):
            query.where = self._scalar_only(self.parse_expr(), "WHERE")
        if self.accept("keyword", "GROUP"):
            self.expect("keyword", "BY")
            while True:
                query.group_by.append(self.expect("ident").text)
                if not self.accept("op", ","):
                    break
        if self.accept("keyword", "ORDER"):
            self.expect("keyword", "BY")
            while True:
                expr = self._scalar_only(self.parse_expr(), "ORDER BY")
                ascending = True
                if self.accept("keyword", "DESC"):
                    ascending = False
                else:
                    self.accept("keyword", "ASC")
                query.order_by.append((expr, ascending))
                if not self.accept("op", ","):
                    break
        self.accept("op", ";")
        tok = self.peek()
        if tok.kind != "end":
            raise SqlSyntaxError(f"trailing input {tok.text!r}", position=tok.pos)
        return query

    @staticmethod
    def _select_item(expr, alias):
        if isinstance(expr, _CountStar):
            return (None, "count", alias)
        if isinstance(expr, _AggCall):
            return (expr.arg, expr.fn, alias)
        for sub in _walk_maybe_agg(expr):
            if isinstance(sub, (_AggCall, _CountStar)):
                raise UnsupportedFeature("aggregate inside a larger expression")
        return (expr, None, alias)

    @staticmethod
    def _scalar_only(expr, clause):
        for sub in _walk_maybe_agg(expr):
            if isinstance(sub, (_AggCall, _CountStar)):
                raise UnsupportedFeature(f"aggregate in {clause}")
        return expr


@dataclass(frozen=True)
class _AggCall(Expr):
    fn: str
    arg: Expr


@dataclass(frozen=True)
class _CountStar(Expr):
    pass


def _walk_maybe_agg(expr):
    yield expr
    if isinstance(expr, (_AggCall, _CountStar)):
        return
    from .planir import expr_children
    for child in expr_children(expr):
        yield from _walk_maybe_agg(child)


# ---------------------------------------------------------------------------
# Plan construction
# ---------------------------------------------------------------------------

def _references(query: SqlQuery) -> set[str]:
    refs: set[str] = set()
    for expr, _fn, _alias in query.select_list:
        if expr is not None:
            refs.update(expr_column_refs(expr))
    if query.where is not None:
        refs.update(expr_column_refs(query.where))
    refs.update(query.group_by)
    return refs


def _output_name(expr, fn, alias, position) -> str:
    if alias:
        return alias
    if fn is None and isinstance(expr, ColumnRef):
        return expr.name
    if fn is not None and isinstance(expr, ColumnRef):
        return f"{fn}_{expr.name}"
    if fn == "count" and expr is None:
        return "count"
    return f"expr{position}"


def build_plan(query: SqlQuery, schema: Schema | None = None) -> Plan:
    """Lower a parsed query to the canonical operator chain."""
    base_schema = schema
    if schema is not None and ROWID in _references(query) and ROWID not in schema:
        base_schema = Schema(schema.fields + (Field(ROWID, DataType.INT64, False),))
    nodes: list = [Read(query.from_ref, base_schema)]
    if query.where is not None:
        nodes.append(Filter(query.where))

    has_measures = any(fn is not None for _, fn, _ in query.select_list)
    if has_measures or query.group_by:
        measures = []
        outputs = []
        for pos, (expr, fn, alias) in enumerate(query.select_list):
            name = _output_name(expr, fn, alias, pos)
            if fn is not None:
                measures.append(Measure(fn, expr, name))
                outputs.append((ColumnRef(name), name))
            else:
                bad = [c for c in expr_column_refs(expr) if c not in query.group_by]
                if bad:
                    raise UnsupportedFeature(
                        f"non-aggregated column {bad[0]!r} outside GROUP BY")
                outputs.append((expr, name))
        nodes.append(Aggregate(tuple(query.group_by), tuple(measures)))
        nodes.append(Project(tuple(outputs)))
    else:
        outputs = []
        for pos, (expr, fn, alias) in enumerate(query.select_list):
            outputs.append((expr, _output_name(expr, fn, alias, pos)))
        nodes.append(Project(tuple(outputs)))

    if query.order_by:
        nodes.append(Sort(tuple(SortKey(e, asc) for e, asc in query.order_by)))
    return Plan(tuple(nodes))


def parse(sql: str, schema: Schema | None = None) -> Plan:
    """Parse one SELECT statement into a canonical plan.

    When a base schema is supplied it is attached to the read node (with the
    virtual rowid appended if referenced) so the plan validates; without it
    the plan is structural only.
    """
    query = _Parser(sql).parse_query()
    return build_plan(query, schema)


def parse_errors(sql: str, schema: Schema | None = None) -> list[str]:
    """Diagnostics-only entry point: never raises, returns messages."""
    try:
        plan = parse(sql, schema)
    except (SqlSyntaxError, UnsupportedFeature) as exc:
        return [str(exc)]
    if schema is not None:
        from .planir import validate
        return [str(d) for d in validate(plan)]
    return []
