"""Lexer, parser, and AST for the read-only SQL subset.

The grammar is deliberately closed: SELECT over comma-joined tables with
equality/range predicates, GROUP BY, ORDER BY, LIMIT, the aggregates
COUNT / COUNT(DISTINCT ...), and the scalar builtins AGE_YEARS and
BUCKET. Anything else is a parse error. Dynamic input never reaches the
text layer: parameters are typed placeholders (``:name``) that can bind
only into value positions, so user input cannot alter query structure.

Date-shaped string literals become date values at parse time; rendering
therefore normalizes ``'2010-1-1'`` to ``'2010-01-01'``.
"""

from __future__ import annotations

import dataclasses
import datetime
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Union

from .relstore import TableSchema
from .values import (
    DType,
    Scalar,
    ValueParseError,
    looks_like_date,
    parse_bool,
    parse_date,
    parse_scalar,
)


class MqlError(Exception):
    """Base class for query-language errors."""


class ParseError(MqlError):
    """Lexical or syntactic error, with a character offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ResolveError(MqlError):
    """Name-resolution or type error against a schema set."""


class BindError(MqlError):
    """Parameter binding failure."""


KEYWORDS = frozenset(
    {
        "SELECT", "FROM", "WHERE", "AND", "OR", "BETWEEN",
        "GROUP", "BY", "ORDER", "ASC", "DESC", "LIMIT",
        "AS", "COUNT", "DISTINCT",
    }
)

# Scalar builtins are not keywords; the parser recognizes these names
# (case-insensitively) in expression position.
FN_AGE_YEARS = "AGE_YEARS"
FN_BUCKET = "BUCKET"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"\d+")
_SYMBOLS = ("<=", ">=", "<>", "(", ")", ",", "*", ".", "=", "<", ">")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | number | string | symbol | parameter
    text: str  # exact source slice, quotes included for strings
    offset: int


def tokenize(text: str) -> list[Token]:
    """Lex the query text.

    Token texts are exact source slices, so placing each token back at
    its offset reproduces the input. ``;`` and ``-`` are illegal outside
    string literals, which kills statement chaining and comment tricks
    at the lowest layer.
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch == "'":
            j = i + 1
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        j += 2  # escaped quote
                        continue
                    break
                j += 1
            tokens.append(Token("string", text[i : j + 1], i))
            i = j + 1
            continue
        if ch == ":":
            m = _IDENT_RE.match(text, i + 1)
            if m is None:
                raise ParseError("':' must introduce a parameter name", i)
            tokens.append(Token("parameter", text[i : m.end()], i))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m is not None:
            word = m.group()
            kind = "keyword" if word.upper() in KEYWORDS else "identifier"
            tokens.append(Token(kind, word, i))
            i = m.end()
            continue
        m = _NUMBER_RE.match(text, i)
        if m is not None:
            tokens.append(Token("number", m.group(), i))
            i = m.end()
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token("symbol", sym, i))
                i += len(sym)
                break
        else:
            raise ParseError(f"illegal character {ch!r}", i)
    return tokens


# --- AST nodes ---------------------------------------------------------------
# Fields filled by resolution (offsets, source indexes, canonical column
# names) are excluded from equality so parse(render(ast)) == ast holds.


@dataclass(frozen=True)
class ColumnRef:
    qualifier: Optional[str]
    name: str
    offset: int = field(default=-1, compare=False)
    source: Optional[int] = field(default=None, compare=False)  # FROM index
    column: Optional[str] = field(default=None, compare=False)  # schema name
    item: Optional[int] = field(default=None, compare=False)  # select-item index (group alias)


@dataclass(frozen=True)
class Lit:
    value: Scalar


@dataclass(frozen=True)
class Param:
    name: str
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Aggregate:
    fn: str  # "count" | "count_distinct"
    arg: Optional[ColumnRef]  # None means COUNT(*)


@dataclass(frozen=True)
class AgeYears:
    col: ColumnRef
    ref: Union[Lit, Param]


@dataclass(frozen=True)
class Bucket:
    arg: Union[AgeYears, ColumnRef]
    bounds: tuple[int, ...]


SelectExpr = Union[ColumnRef, Aggregate, AgeYears, Bucket]


@dataclass(frozen=True)
class SelectItem:
    expr: SelectExpr
    alias: Optional[str]


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: Optional[str]

    @property
    def binding_name(self) -> str:
        return self.alias if self.alias is not None else self.name


@dataclass(frozen=True)
class Comparison:
    lhs: ColumnRef
    op: str  # = <> < <= > >=
    rhs: Union[ColumnRef, Lit, Param]


@dataclass(frozen=True)
class Between:
    col: ColumnRef
    lo: Union[Lit, Param]
    hi: Union[Lit, Param]


@dataclass(frozen=True)
class And:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class Or:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class Paren:
    inner: "BoolExpr"


BoolExpr = Union[Comparison, Between, And, Or, Paren]


@dataclass(frozen=True)
class OrderKey:
    name: str
    desc: bool
    offset: int = field(default=-1, compare=False)
    item: Optional[int] = field(default=None, compare=False)  # output column index


@dataclass(frozen=True)
class QueryAst:
    select_items: tuple[SelectItem, ...]
    from_tables: tuple[TableRef, ...]
    where: Optional[BoolExpr]
    group_by: tuple[ColumnRef, ...]
    order_by: tuple[OrderKey, ...]
    limit: Optional[int]


@dataclass(frozen=True)
class BoundQuery:
    ast: QueryAst
    param_log: tuple[tuple[str, Scalar], ...]


# --- parser ------------------------------------------------------------------


class _Cursor:
    def __init__(self, tokens: list[Token], length: int) -> None:
        self.tokens = tokens
        self.pos = 0
        self.length = length  # source length, for EOF offsets

    def peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        return tok.offset if tok is not None else self.length

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "keyword" and tok.text.upper() in words

    def at_symbol(self, *symbols: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "symbol" and tok.text in symbols

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of query", self.length)
        self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise ParseError(f"expected {word}", self.offset())
        return self.advance()

    def expect_symbol(self, symbol: str) -> Token:
        if not self.at_symbol(symbol):
            raise ParseError(f"expected {symbol!r}", self.offset())
        return self.advance()

    def expect_identifier(self, what: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != "identifier":
            raise ParseError(f"expected {what}", self.offset())
        return self.advance()


def _string_value(tok: Token) -> Scalar:
    """Literal value of a string token; date-shaped text becomes a date."""
    body = tok.text[1:-1].replace("''", "'")
    if looks_like_date(body):
        try:
            return parse_date(body)
        except ValueParseError as exc:
            raise ParseError(f"invalid date literal: {exc}", tok.offset) from None
    return body


class _Parser:
    def __init__(self, text: str) -> None:
        self.cur = _Cursor(tokenize(text), len(text))

    def parse(self) -> QueryAst:
        cur = self.cur
        cur.expect_keyword("SELECT")
        items = [self._select_item()]
        while cur.at_symbol(","):
            cur.advance()
            items.append(self._select_item())
        self._check_alias_uniqueness(items)

        cur.expect_keyword("FROM")
        tables = [self._table_ref()]
        while cur.at_symbol(","):
            cur.advance()
            tables.append(self._table_ref())
        seen = set()
        for t in tables:
            key = t.binding_name.lower()
            if key in seen:
                raise ParseError(f"duplicate table name or alias {t.binding_name!r}", 0)
            seen.add(key)

        where = None
        if cur.at_keyword("WHERE"):
            cur.advance()
            where = self._or_expr()

        group_by: list[ColumnRef] = []
        if cur.at_keyword("GROUP"):
            cur.advance()
            cur.expect_keyword("BY")
            group_by.append(self._column_ref())
            while cur.at_symbol(","):
                cur.advance()
                group_by.append(self._column_ref())

        order_by: list[OrderKey] = []
        if cur.at_keyword("ORDER"):
            cur.advance()
            cur.expect_keyword("BY")
            order_by.append(self._order_key())
            while cur.at_symbol(","):
                cur.advance()
                order_by.append(self._order_key())

        limit = None
        if cur.at_keyword("LIMIT"):
            cur.advance()
            tok = cur.peek()
            if tok is None or tok.kind != "number":
                raise ParseError("expected a positive integer after LIMIT", cur.offset())
            cur.advance()
            limit = int(tok.text)
            if limit < 1:
                raise ParseError("LIMIT must be positive", tok.offset)

        tok = cur.peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.offset)
        return QueryAst(
            select_items=tuple(items),
            from_tables=tuple(tables),
            where=where,
            group_by=tuple(group_by),
            order_by=tuple(order_by),
            limit=limit,
        )

    def _check_alias_uniqueness(self, items: list[SelectItem]) -> None:
        seen = set()
        for item in items:
            if item.alias is None:
                continue
            key = item.alias.lower()
            if key in seen:
                raise ParseError(f"duplicate select alias {item.alias!r}", 0)
            seen.add(key)

    def _select_item(self) -> SelectItem:
        expr = self._select_expr()
        alias = None
        if self.cur.at_keyword("AS"):
            self.cur.advance()
            alias = self.cur.expect_identifier("alias after AS").text
        return SelectItem(expr=expr, alias=alias)

    def _select_expr(self) -> SelectExpr:
        cur = self.cur
        if cur.at_keyword("COUNT"):
            return self._count()
        tok = cur.peek()
        if tok is not None and tok.kind == "identifier":
            upper = tok.text.upper()
            if upper == FN_AGE_YEARS:
                cur.advance()
                return self._age_years()
            if upper == FN_BUCKET:
                cur.advance()
                return self._bucket()
            return self._column_ref()
        raise ParseError("expected a column, COUNT, AGE_YEARS, or BUCKET", cur.offset())

    def _count(self) -> Aggregate:
        cur = self.cur
        cur.expect_keyword("COUNT")
        cur.expect_symbol("(")
        if cur.at_symbol("*"):
            cur.advance()
            cur.expect_symbol(")")
            return Aggregate(fn="count", arg=None)
        fn = "count"
        if cur.at_keyword("DISTINCT"):
            cur.advance()
            fn = "count_distinct"
        arg = self._column_ref()
        cur.expect_symbol(")")
        return Aggregate(fn=fn, arg=arg)

    def _age_years(self) -> AgeYears:
        cur = self.cur
        cur.expect_symbol("(")
        col = self._column_ref()
        cur.expect_symbol(",")
        tok = cur.peek()
        if tok is not None and tok.kind == "string":
            cur.advance()
            value = _string_value(tok)
            if not isinstance(value, datetime.date):
                raise ParseError("AGE_YEARS reference must be a date literal", tok.offset)
            ref: Union[Lit, Param] = Lit(value)
        elif tok is not None and tok.kind == "parameter":
            cur.advance()
            ref = Param(tok.text[1:], offset=tok.offset)
        else:
            raise ParseError("expected a date literal or parameter", cur.offset())
        cur.expect_symbol(")")
        return AgeYears(col=col, ref=ref)

    def _bucket(self) -> Bucket:
        cur = self.cur
        cur.expect_symbol("(")
        tok = cur.peek()
        if tok is not None and tok.kind == "identifier" and tok.text.upper() == FN_AGE_YEARS:
            cur.advance()
            arg: Union[AgeYears, ColumnRef] = self._age_years()
        else:
            arg = self._column_ref()
        bounds: list[int] = []
        while cur.at_symbol(","):
            cur.advance()
            num = cur.peek()
            if num is None or num.kind != "number":
                raise ParseError("expected an integer bucket boundary", cur.offset())
            cur.advance()
            bounds.append(int(num.text))
        if not bounds:
            raise ParseError("BUCKET needs at least one boundary", cur.offset())
        if any(b >= c for b, c in zip(bounds, bounds[1:])) or len(set(bounds)) != len(bounds):
            raise ParseError("BUCKET boundaries must be strictly increasing", cur.offset())
        cur.expect_symbol(")")
        return Bucket(arg=arg, bounds=tuple(bounds))

    def _column_ref(self) -> ColumnRef:
        first = self.cur.expect_identifier("a column name")
        if self.cur.at_symbol("."):
            self.cur.advance()
            second = self.cur.expect_identifier("a column name after '.'")
            return ColumnRef(qualifier=first.text, name=second.text, offset=first.offset)
        return ColumnRef(qualifier=None, name=first.text, offset=first.offset)

    def _table_ref(self) -> TableRef:
        name = self.cur.expect_identifier("a table name")
        tok = self.cur.peek()
        if tok is not None and tok.kind == "identifier":
            self.cur.advance()
            return TableRef(name=name.text, alias=tok.text)
        return TableRef(name=name.text, alias=None)

    def _order_key(self) -> OrderKey:
        name = self.cur.expect_identifier("an output column or alias")
        desc = False
        if self.cur.at_keyword("ASC"):
            self.cur.advance()
        elif self.cur.at_keyword("DESC"):
            self.cur.advance()
            desc = True
        return OrderKey(name=name.text, desc=desc, offset=name.offset)

    def _or_expr(self) -> BoolExpr:
        left = self._and_expr()
        while self.cur.at_keyword("OR"):
            self.cur.advance()
            left = Or(left=left, right=self._and_expr())
        return left

    def _and_expr(self) -> BoolExpr:
        left = self._bool_term()
        while self.cur.at_keyword("AND"):
            self.cur.advance()
            left = And(left=left, right=self._bool_term())
        return left

    def _bool_term(self) -> BoolExpr:
        cur = self.cur
        if cur.at_symbol("("):
            cur.advance()
            inner = self._or_expr()
            cur.expect_symbol(")")
            return Paren(inner=inner)
        col = self._column_ref()
        if cur.at_keyword("BETWEEN"):
            cur.advance()
            lo = self._value("a lower bound")
            cur.expect_keyword("AND")
            hi = self._value("an upper bound")
            if isinstance(lo, Lit) and isinstance(hi, Lit):
                if type(lo.value) is not type(hi.value):
                    raise ParseError("BETWEEN bounds must have the same type", cur.offset())
                if lo.value > hi.value:  # type: ignore[operator]
                    raise ParseError("BETWEEN lower bound exceeds upper bound", cur.offset())
            return Between(col=col, lo=lo, hi=hi)
        if not cur.at_symbol("=", "<>", "<", "<=", ">", ">="):
            raise ParseError("expected a comparison operator or BETWEEN", cur.offset())
        op = cur.advance().text
        tok = cur.peek()
        if tok is not None and tok.kind == "identifier":
            rhs: Union[ColumnRef, Lit, Param] = self._column_ref()
        else:
            rhs = self._value("a comparison value")
        return Comparison(lhs=col, op=op, rhs=rhs)

    def _value(self, what: str) -> Union[Lit, Param]:
        tok = self.cur.peek()
        if tok is None:
            raise ParseError(f"expected {what}", self.cur.offset())
        if tok.kind == "string":
            self.cur.advance()
            return Lit(_string_value(tok))
        if tok.kind == "number":
            self.cur.advance()
            return Lit(int(tok.text))
        if tok.kind == "parameter":
            self.cur.advance()
            return Param(tok.text[1:], offset=tok.offset)
        raise ParseError(f"expected {what}", tok.offset)


def parse(text: str, schemas: Optional[Mapping[str, TableSchema]] = None) -> QueryAst:
    """Parse query text; resolve names and types when schemas are given."""
    ast = _Parser(text).parse()
    if schemas is not None:
        ast = resolve(ast, schemas)
    return ast


# --- resolution --------------------------------------------------------------


class _Resolver:
    def __init__(self, ast: QueryAst, schemas: Mapping[str, TableSchema]) -> None:
        self.ast = ast
        self.schemas = {name.lower(): schema for name, schema in schemas.items()}
        self.sources: list[TableSchema] = []

    def run(self) -> QueryAst:
        ast = self.ast
        for t in ast.from_tables:
            schema = self.schemas.get(t.name.lower())
            if schema is None:
                raise ResolveError(f"unknown table {t.name!r}")
            self.sources.append(schema)

        items = tuple(
            SelectItem(expr=self._resolve_expr(i.expr), alias=i.alias)
            for i in ast.select_items
        )
        where = self._resolve_bool(ast.where) if ast.where is not None else None
        group_by = tuple(self._resolve_group_key(c, items) for c in ast.group_by)
        order_by = tuple(self._resolve_order_key(k, items) for k in ast.order_by)
        return dataclasses.replace(
            ast,
            select_items=items,
            where=where,
            group_by=group_by,
            order_by=order_by,
        )

    def _resolve_col(self, ref: ColumnRef) -> ColumnRef:
        matches: list[tuple[int, str]] = []
        if ref.qualifier is not None:
            q = ref.qualifier.lower()
            for idx, t in enumerate(self.ast.from_tables):
                if t.binding_name.lower() != q:
                    continue
                try:
                    col = self.sources[idx].column(ref.name)
                except KeyError:
                    raise ResolveError(
                        f"table {t.binding_name!r} has no column {ref.name!r}"
                    ) from None
                matches.append((idx, col.name))
            if not matches:
                raise ResolveError(f"unknown table or alias {ref.qualifier!r}")
        else:
            for idx, schema in enumerate(self.sources):
                try:
                    col = schema.column(ref.name)
                except KeyError:
                    continue
                matches.append((idx, col.name))
            if not matches:
                raise ResolveError(f"unknown column {ref.name!r}")
            if len(matches) > 1:
                names = ", ".join(
                    self.ast.from_tables[idx].binding_name for idx, _ in matches
                )
                raise ResolveError(f"ambiguous column {ref.name!r} (in {names})")
        source, column = matches[0]
        return dataclasses.replace(ref, source=source, column=column)

    def dtype_of(self, ref: ColumnRef) -> DType:
        assert ref.source is not None and ref.column is not None
        return self.sources[ref.source].column(ref.column).dtype

    def _resolve_expr(self, expr: SelectExpr) -> SelectExpr:
        if isinstance(expr, ColumnRef):
            return self._resolve_col(expr)
        if isinstance(expr, Aggregate):
            if expr.arg is None:
                return expr
            return dataclasses.replace(expr, arg=self._resolve_col(expr.arg))
        if isinstance(expr, AgeYears):
            col = self._resolve_col(expr.col)
            if self.dtype_of(col) is not DType.DATE:
                raise ResolveError(
                    f"AGE_YEARS needs a date column, got {col.name!r}"
                )
            return dataclasses.replace(expr, col=col)
        if isinstance(expr, Bucket):
            arg = self._resolve_expr(expr.arg)
            if isinstance(arg, ColumnRef) and self.dtype_of(arg) is not DType.INT:
                raise ResolveError(
                    f"BUCKET needs an integer expression, got column {arg.name!r}"
                )
            return dataclasses.replace(expr, arg=arg)  # type: ignore[arg-type]
        raise AssertionError(f"unhandled expr {expr!r}")

    def _coerce_lit(self, col: ColumnRef, lit: Lit, context: str) -> Lit:
        """Check a literal against the column type, coercing bool text."""
        dtype = self.dtype_of(col)
        value = lit.value
        if dtype is DType.BOOL and isinstance(value, str):
            try:
                return Lit(parse_bool(value))
            except ValueParseError:
                raise ResolveError(
                    f"{context}: column {col.name!r} is boolean, got {value!r}"
                ) from None
        ok = (
            (dtype is DType.INT and type(value) is int)
            or (dtype is DType.BOOL and isinstance(value, bool))
            or (dtype is DType.DATE and isinstance(value, datetime.date))
            or (dtype in (DType.STR, DType.ENUM) and isinstance(value, str))
        )
        if not ok:
            raise ResolveError(
                f"{context}: column {col.name!r} ({dtype.value}) cannot be "
                f"compared with {value!r}"
            )
        return lit

    def _resolve_bool(self, expr: BoolExpr) -> BoolExpr:
        if isinstance(expr, Comparison):
            lhs = self._resolve_col(expr.lhs)
            rhs = expr.rhs
            if isinstance(rhs, ColumnRef):
                rhs = self._resolve_col(rhs)
                lt, rt = self.dtype_of(lhs), self.dtype_of(rhs)
                str_like = {DType.STR, DType.ENUM}
                if lt is not rt and not (lt in str_like and rt in str_like):
                    raise ResolveError(
                        f"cannot compare {lhs.name!r} ({lt.value}) "
                        f"with {rhs.name!r} ({rt.value})"
                    )
            elif isinstance(rhs, Lit):
                rhs = self._coerce_lit(lhs, rhs, "comparison")
            return dataclasses.replace(expr, lhs=lhs, rhs=rhs)
        if isinstance(expr, Between):
            col = self._resolve_col(expr.col)
            lo = self._coerce_lit(col, expr.lo, "BETWEEN") if isinstance(expr.lo, Lit) else expr.lo
            hi = self._coerce_lit(col, expr.hi, "BETWEEN") if isinstance(expr.hi, Lit) else expr.hi
            return dataclasses.replace(expr, col=col, lo=lo, hi=hi)
        if isinstance(expr, And):
            return And(self._resolve_bool(expr.left), self._resolve_bool(expr.right))
        if isinstance(expr, Or):
            return Or(self._resolve_bool(expr.left), self._resolve_bool(expr.right))
        if isinstance(expr, Paren):
            return Paren(self._resolve_bool(expr.inner))
        raise AssertionError(f"unhandled bool expr {expr!r}")

    def _resolve_group_key(self, ref: ColumnRef, items: tuple[SelectItem, ...]) -> ColumnRef:
        # an unqualified name matching a select alias groups by that item
        if ref.qualifier is None:
            for idx, item in enumerate(items):
                if item.alias is not None and item.alias.lower() == ref.name.lower():
                    if isinstance(item.expr, Aggregate):
                        raise ResolveError(
                            f"cannot GROUP BY aggregate alias {item.alias!r}"
                        )
                    return dataclasses.replace(ref, item=idx)
        return self._resolve_col(ref)

    def _resolve_order_key(self, key: OrderKey, items: tuple[SelectItem, ...]) -> OrderKey:
        matches = []
        wanted = key.name.lower()
        for idx, item in enumerate(items):
            if item.alias is not None:
                if item.alias.lower() == wanted:
                    matches.append(idx)
            elif isinstance(item.expr, ColumnRef) and item.expr.name.lower() == wanted:
                matches.append(idx)
        if not matches:
            raise ResolveError(
                f"ORDER BY {key.name!r} does not name an output column"
            )
        if len(matches) > 1:
            raise ResolveError(f"ORDER BY {key.name!r} is ambiguous")
        return dataclasses.replace(key, item=matches[0])


def resolve(ast: QueryAst, schemas: Mapping[str, TableSchema]) -> QueryAst:
    """Resolve column references, aliases, and literal types."""
    return _Resolver(ast, schemas).run()


# --- rendering ---------------------------------------------------------------


def _render_value(value: Scalar) -> str:
    if isinstance(value, bool):
        return "'true'" if value else "'false'"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, datetime.date):
        return f"'{value.isoformat()}'"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    raise AssertionError(f"cannot render {value!r}")


def _render_operand(node: Union[ColumnRef, Lit, Param]) -> str:
    if isinstance(node, ColumnRef):
        return render_expr(node)
    if isinstance(node, Lit):
        return _render_value(node.value)
    return f":{node.name}"


def render_expr(expr: SelectExpr) -> str:
    """Canonical text of a select expression; doubles as its label."""
    if isinstance(expr, ColumnRef):
        return f"{expr.qualifier}.{expr.name}" if expr.qualifier else expr.name
    if isinstance(expr, Aggregate):
        if expr.arg is None:
            return "COUNT(*)"
        inner = render_expr(expr.arg)
        if expr.fn == "count_distinct":
            return f"COUNT(DISTINCT {inner})"
        return f"COUNT({inner})"
    if isinstance(expr, AgeYears):
        return f"AGE_YEARS({render_expr(expr.col)}, {_render_operand(expr.ref)})"
    if isinstance(expr, Bucket):
        bounds = ", ".join(str(b) for b in expr.bounds)
        return f"BUCKET({render_expr(expr.arg)}, {bounds})"
    raise AssertionError(f"unhandled expr {expr!r}")


def _render_bool(expr: BoolExpr) -> str:
    if isinstance(expr, Comparison):
        return f"{render_expr(expr.lhs)} {expr.op} {_render_operand(expr.rhs)}"
    if isinstance(expr, Between):
        return (
            f"{render_expr(expr.col)} BETWEEN "
            f"{_render_operand(expr.lo)} AND {_render_operand(expr.hi)}"
        )
    if isinstance(expr, And):
        return f"{_render_bool(expr.left)} AND {_render_bool(expr.right)}"
    if isinstance(expr, Or):
        return f"{_render_bool(expr.left)} OR {_render_bool(expr.right)}"
    if isinstance(expr, Paren):
        return f"({_render_bool(expr.inner)})"
    raise AssertionError(f"unhandled bool expr {expr!r}")


def render(ast: QueryAst) -> str:
    """Deterministic canonical text; parse(render(a)) == a."""
    parts = ["SELECT "]
    parts.append(
        ", ".join(
            render_expr(i.expr) + (f" AS {i.alias}" if i.alias else "")
            for i in ast.select_items
        )
    )
    parts.append(" FROM ")
    parts.append(
        ", ".join(
            t.name + (f" {t.alias}" if t.alias else "") for t in ast.from_tables
        )
    )
    if ast.where is not None:
        parts.append(" WHERE ")
        parts.append(_render_bool(ast.where))
    if ast.group_by:
        parts.append(" GROUP BY ")
        parts.append(", ".join(render_expr(c) for c in ast.group_by))
    if ast.order_by:
        parts.append(" ORDER BY ")
        parts.append(
            ", ".join(k.name + (" DESC" if k.desc else "") for k in ast.order_by)
        )
    if ast.limit is not None:
        parts.append(f" LIMIT {ast.limit}")
    return "".join(parts)


# --- parameters --------------------------------------------------------------


def iter_params(ast: QueryAst) -> Iterator[Param]:
    """Parameter placeholders in tree order."""

    def from_value(v: Union[ColumnRef, Lit, Param]) -> Iterator[Param]:
        if isinstance(v, Param):
            yield v

    for item in ast.select_items:
        if isinstance(item.expr, AgeYears):
            yield from from_value(item.expr.ref)
        elif isinstance(item.expr, Bucket) and isinstance(item.expr.arg, AgeYears):
            yield from from_value(item.expr.arg.ref)

    def from_bool(expr: BoolExpr) -> Iterator[Param]:
        if isinstance(expr, Comparison):
            yield from from_value(expr.rhs)
        elif isinstance(expr, Between):
            yield from from_value(expr.lo)
            yield from from_value(expr.hi)
        elif isinstance(expr, (And, Or)):
            yield from from_bool(expr.left)
            yield from from_bool(expr.right)
        elif isinstance(expr, Paren):
            yield from from_bool(expr.inner)

    if ast.where is not None:
        yield from from_bool(ast.where)


def param_names(ast: QueryAst) -> list[str]:
    """Distinct parameter names in first-appearance order."""
    seen: list[str] = []
    for p in iter_params(ast):
        if p.name not in seen:
            seen.append(p.name)
    return seen


def infer_param_types(ast: QueryAst, schemas: Mapping[str, TableSchema]) -> dict[str, DType]:
    """Infer each parameter's type from where it appears.

    A parameter compared against a column takes that column's type
    (enums bind as text); an AGE_YEARS reference is a date. Conflicting
    uses of one name are an error.
    """
    resolver = _Resolver(ast, {n.lower(): s for n, s in schemas.items()})
    resolved = resolver.run()
    inferred: dict[str, DType] = {}

    def note(name: str, dtype: DType) -> None:
        if dtype is DType.ENUM:
            dtype = DType.STR
        before = inferred.get(name)
        if before is not None and before is not dtype:
            raise ResolveError(
                f"parameter :{name} used as both {before.value} and {dtype.value}"
            )
        inferred[name] = dtype

    def visit_value(col: ColumnRef, v: Union[ColumnRef, Lit, Param]) -> None:
        if isinstance(v, Param):
            note(v.name, resolver.dtype_of(col))

    def visit_bool(expr: BoolExpr) -> None:
        if isinstance(expr, Comparison):
            if not isinstance(expr.rhs, ColumnRef):
                visit_value(expr.lhs, expr.rhs)
        elif isinstance(expr, Between):
            visit_value(expr.col, expr.lo)
            visit_value(expr.col, expr.hi)
        elif isinstance(expr, (And, Or)):
            visit_bool(expr.left)
            visit_bool(expr.right)
        elif isinstance(expr, Paren):
            visit_bool(expr.inner)

    for item in resolved.select_items:
        age = None
        if isinstance(item.expr, AgeYears):
            age = item.expr
        elif isinstance(item.expr, Bucket) and isinstance(item.expr.arg, AgeYears):
            age = item.expr.arg
        if age is not None and isinstance(age.ref, Param):
            note(age.ref.name, DType.DATE)
    if resolved.where is not None:
        visit_bool(resolved.where)
    return inferred


# Parameters may be declared with these types; enum columns bind as str.
PARAM_DTYPES = (DType.INT, DType.STR, DType.DATE, DType.BOOL)


def bind_params(
    ast: QueryAst, params: Mapping[str, tuple[DType, str]]
) -> BoundQuery:
    """Substitute typed values for placeholders, values-only.

    Every placeholder must be supplied and every supplied name must be
    used. Substitution only ever turns a Param node into a Lit node, so
    the bound tree's shape equals the template's shape by construction.
    """
    wanted = param_names(ast)
    missing = [n for n in wanted if n not in params]
    if missing:
        raise BindError(f"missing parameter(s): {', '.join(':' + n for n in missing)}")
    extra = [n for n in params if n not in wanted]
    if extra:
        raise BindError(f"unused parameter(s): {', '.join(':' + n for n in extra)}")

    values: dict[str, Scalar] = {}
    for name in wanted:
        dtype, raw = params[name]
        if dtype not in PARAM_DTYPES:
            raise BindError(f"parameter :{name}: unsupported type {dtype.value}")
        try:
            values[name] = parse_scalar(raw, dtype)
        except ValueParseError as exc:
            raise BindError(f"parameter :{name}: {exc}") from None

    def sub_value(v: Union[ColumnRef, Lit, Param]) -> Union[ColumnRef, Lit, Param]:
        if isinstance(v, Param):
            return Lit(values[v.name])
        return v

    def sub_bool(expr: BoolExpr) -> BoolExpr:
        if isinstance(expr, Comparison):
            return dataclasses.replace(expr, rhs=sub_value(expr.rhs))
        if isinstance(expr, Between):
            lo = sub_value(expr.lo)
            hi = sub_value(expr.hi)
            if isinstance(lo, Lit) and isinstance(hi, Lit):
                if type(lo.value) is not type(hi.value):
                    raise BindError("BETWEEN bounds must have the same type")
                if lo.value > hi.value:  # type: ignore[operator]
                    raise BindError("BETWEEN lower bound exceeds upper bound")
            return dataclasses.replace(expr, lo=lo, hi=hi)
        if isinstance(expr, And):
            return And(sub_bool(expr.left), sub_bool(expr.right))
        if isinstance(expr, Or):
            return Or(sub_bool(expr.left), sub_bool(expr.right))
        if isinstance(expr, Paren):
            return Paren(sub_bool(expr.inner))
        raise AssertionError(f"unhandled bool expr {expr!r}")

    def sub_item(item: SelectItem) -> SelectItem:
        expr = item.expr
        if isinstance(expr, AgeYears):
            expr = dataclasses.replace(expr, ref=sub_value(expr.ref))
        elif isinstance(expr, Bucket) and isinstance(expr.arg, AgeYears):
            expr = dataclasses.replace(
                expr, arg=dataclasses.replace(expr.arg, ref=sub_value(expr.arg.ref))
            )
        return dataclasses.replace(item, expr=expr)

    bound = dataclasses.replace(
        ast,
        select_items=tuple(sub_item(i) for i in ast.select_items),
        where=sub_bool(ast.where) if ast.where is not None else None,
    )
    log = tuple((name, values[name]) for name in wanted)
    return BoundQuery(ast=bound, param_log=log)


def all_column_refs(ast: QueryAst) -> Iterator[ColumnRef]:
    """Every column reference in the tree, for policy inspection."""
    for item in ast.select_items:
        expr = item.expr
        if isinstance(expr, ColumnRef):
            yield expr
        elif isinstance(expr, Aggregate):
            if expr.arg is not None:
                yield expr.arg
        elif isinstance(expr, AgeYears):
            yield expr.col
        elif isinstance(expr, Bucket):
            if isinstance(expr.arg, ColumnRef):
                yield expr.arg
            else:
                yield expr.arg.col

    def from_bool(expr: BoolExpr) -> Iterator[ColumnRef]:
        if isinstance(expr, Comparison):
            yield expr.lhs
            if isinstance(expr.rhs, ColumnRef):
                yield expr.rhs
        elif isinstance(expr, Between):
            yield expr.col
        elif isinstance(expr, (And, Or)):
            yield from from_bool(expr.left)
            yield from from_bool(expr.right)
        elif isinstance(expr, Paren):
            yield from from_bool(expr.inner)

    if ast.where is not None:
        yield from from_bool(ast.where)
    for ref in ast.group_by:
        if ref.item is None:
            yield ref
    # order keys reference output columns, never tables directly
