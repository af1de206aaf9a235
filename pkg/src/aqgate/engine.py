"""In-memory evaluation of bound queries against a snapshot.

Semantics: the cross product of the FROM tables restricted by WHERE,
then grouping, aggregation, ordering, and LIMIT. Joined rows are
enumerated in lexicographic FROM order and groups are discovered in
first-appearance order; together with stable sorting this makes results
fully deterministic. Equality joins run as hash joins with
order-preserving buckets, so the optimization never changes the
enumeration order a nested loop would produce.

Comparisons involving NULL are false; COUNT(col) counts non-null
values; NULL sorts after values ascending, before them descending.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

from .mql import (
    Aggregate,
    AgeYears,
    And,
    Between,
    BoolExpr,
    BoundQuery,
    Bucket,
    ColumnRef,
    Comparison,
    Lit,
    Or,
    Paren,
    QueryAst,
    SelectExpr,
    all_column_refs,
    param_names,
    render_expr,
)
from .relstore import Snapshot, Table
from .values import DType, Scalar


class EngineError(Exception):
    """Internal evaluation failure; upstream validation should prevent these."""


@dataclass(frozen=True)
class ResultSet:
    columns: tuple[tuple[str, DType], ...]
    rows: tuple[tuple[Scalar, ...], ...]


Env = tuple[tuple[Scalar, ...], ...]  # one row per FROM table


def age_years(dob: Optional[object], ref: object) -> Optional[int]:
    """Whole years between dob and ref; birthday not yet reached rounds down."""
    if dob is None:
        return None
    years = ref.year - dob.year  # type: ignore[attr-defined]
    if (ref.month, ref.day) < (dob.month, dob.day):  # type: ignore[attr-defined]
        years -= 1
    return years


def bucket_label(value: Optional[int], bounds: Sequence[int]) -> Optional[str]:
    """Bracket label for value: `<b1`, `b1-(b2-1)`, ..., `bk+`."""
    if value is None:
        return None
    if value < bounds[0]:
        return f"<{bounds[0]}"
    for lo, hi in zip(bounds, bounds[1:]):
        if value < hi:
            return f"{lo}-{hi - 1}"
    return f"{bounds[-1]}+"


class _Evaluator:
    def __init__(self, ast: QueryAst, snapshot: Snapshot) -> None:
        self.ast = ast
        self.tables: list[Table] = [snapshot.table(t.name) for t in ast.from_tables]
        self._col_cache: dict[tuple[int, str], int] = {}

    def col_index(self, ref: ColumnRef) -> tuple[int, int]:
        if ref.source is None or ref.column is None:
            raise EngineError(f"unresolved column reference {ref.name!r}")
        key = (ref.source, ref.column)
        idx = self._col_cache.get(key)
        if idx is None:
            idx = self.tables[ref.source].schema.column_index(ref.column)
            self._col_cache[key] = idx
        return ref.source, idx

    def col_value(self, ref: ColumnRef, env: Env) -> Scalar:
        source, idx = self.col_index(ref)
        return env[source][idx]

    # --- scalar expressions ---

    def eval_expr(self, expr: SelectExpr, env: Env) -> Scalar:
        if isinstance(expr, ColumnRef):
            return self.col_value(expr, env)
        if isinstance(expr, AgeYears):
            if not isinstance(expr.ref, Lit):
                raise EngineError("unbound AGE_YEARS reference")
            return age_years(self.col_value(expr.col, env), expr.ref.value)
        if isinstance(expr, Bucket):
            inner = self.eval_expr(expr.arg, env)
            if inner is not None and not isinstance(inner, int):
                raise EngineError(f"BUCKET argument must be an integer, got {inner!r}")
            return bucket_label(inner, expr.bounds)
        raise EngineError(f"cannot evaluate {expr!r} as a scalar")

    # --- predicates ---

    @staticmethod
    def _comparable(a: Scalar, b: Scalar) -> bool:
        if isinstance(a, bool) or isinstance(b, bool):
            return isinstance(a, bool) and isinstance(b, bool)
        return type(a) is type(b)

    def _compare(self, lv: Scalar, op: str, rv: Scalar) -> bool:
        if lv is None or rv is None:
            return False
        if not self._comparable(lv, rv):
            raise EngineError(f"type mismatch: {lv!r} {op} {rv!r}")
        if op == "=":
            return lv == rv
        if op == "<>":
            return lv != rv
        if op == "<":
            return lv < rv  # type: ignore[operator]
        if op == "<=":
            return lv <= rv  # type: ignore[operator]
        if op == ">":
            return lv > rv  # type: ignore[operator]
        if op == ">=":
            return lv >= rv  # type: ignore[operator]
        raise EngineError(f"unknown operator {op!r}")

    def eval_bool(self, expr: BoolExpr, env: Env) -> bool:
        if isinstance(expr, Comparison):
            lv = self.col_value(expr.lhs, env)
            if isinstance(expr.rhs, ColumnRef):
                rv: Scalar = self.col_value(expr.rhs, env)
            elif isinstance(expr.rhs, Lit):
                rv = expr.rhs.value
            else:
                raise EngineError("unbound parameter in comparison")
            return self._compare(lv, expr.op, rv)
        if isinstance(expr, Between):
            v = self.col_value(expr.col, env)
            if not isinstance(expr.lo, Lit) or not isinstance(expr.hi, Lit):
                raise EngineError("unbound parameter in BETWEEN")
            if v is None:
                return False
            return self._compare(v, ">=", expr.lo.value) and self._compare(
                v, "<=", expr.hi.value
            )
        if isinstance(expr, And):
            return self.eval_bool(expr.left, env) and self.eval_bool(expr.right, env)
        if isinstance(expr, Or):
            return self.eval_bool(expr.left, env) or self.eval_bool(expr.right, env)
        if isinstance(expr, Paren):
            return self.eval_bool(expr.inner, env)
        raise EngineError(f"unhandled predicate {expr!r}")


def _flatten_conjuncts(expr: Optional[BoolExpr]) -> Optional[list[BoolExpr]]:
    """Top-level AND conjuncts, or None when any OR makes that unsound."""
    if expr is None:
        return []
    if isinstance(expr, (Comparison, Between)):
        return [expr]
    if isinstance(expr, Paren):
        return _flatten_conjuncts(expr.inner)
    if isinstance(expr, And):
        left = _flatten_conjuncts(expr.left)
        right = _flatten_conjuncts(expr.right)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(expr, Or):
        return None
    raise EngineError(f"unhandled predicate {expr!r}")


def _conjunct_sources(conj: BoolExpr) -> frozenset[int]:
    if isinstance(conj, Comparison):
        sources = {conj.lhs.source}
        if isinstance(conj.rhs, ColumnRef):
            sources.add(conj.rhs.source)
        return frozenset(s for s in sources if s is not None)
    if isinstance(conj, Between):
        return frozenset({conj.col.source} - {None})  # type: ignore[arg-type]
    raise EngineError(f"not a conjunct: {conj!r}")


def _join_envs(ev: _Evaluator, ast: QueryAst) -> list[Env]:
    """Enumerate WHERE-satisfying joined rows in lexicographic FROM order."""
    n = len(ev.tables)
    conjuncts = _flatten_conjuncts(ast.where)

    if conjuncts is None:
        # disjunctive predicate: filter the full cross product
        envs = []
        for combo in itertools.product(*(t.rows for t in ev.tables)):
            if ast.where is None or ev.eval_bool(ast.where, combo):
                envs.append(combo)
        return envs

    per_source: dict[int, list[BoolExpr]] = {i: [] for i in range(n)}
    multi: list[tuple[frozenset[int], BoolExpr]] = []
    for conj in conjuncts:
        sources = _conjunct_sources(conj)
        if len(sources) == 1:
            per_source[next(iter(sources))].append(conj)
        else:
            multi.append((sources, conj))

    # single-table restrictions first, preserving row order
    filtered: list[list[tuple[Scalar, ...]]] = []
    for i, table in enumerate(ev.tables):
        rows = list(table.rows)
        for conj in per_source[i]:
            probe: list[Optional[tuple[Scalar, ...]]] = [None] * n
            surviving = []
            for row in rows:
                probe[i] = row
                if ev.eval_bool(conj, tuple(probe)):  # type: ignore[arg-type]
                    surviving.append(row)
            rows = surviving
        filtered.append(rows)

    # left-deep join in FROM order
    current: list[tuple] = [(row,) for row in filtered[0]]
    bound_prefix = 1
    remaining = list(multi)
    while bound_prefix < n:
        i = bound_prefix
        # equality edges fully bound once table i joins
        edges = []
        rest = []
        for sources, conj in remaining:
            if (
                isinstance(conj, Comparison)
                and conj.op == "="
                and isinstance(conj.rhs, ColumnRef)
                and sources == frozenset({conj.lhs.source, conj.rhs.source})
                and i in sources
                and all(s <= i for s in sources)
                and len(sources) == 2
            ):
                edges.append(conj)
            else:
                rest.append((sources, conj))
        remaining = rest

        if edges:
            # hash join: build on table i with order-preserving buckets
            build_cols = []
            probe_cols = []
            for conj in edges:
                lhs, rhs = conj.lhs, conj.rhs
                assert isinstance(rhs, ColumnRef)
                if lhs.source == i:
                    build_cols.append(lhs)
                    probe_cols.append(rhs)
                else:
                    build_cols.append(rhs)
                    probe_cols.append(lhs)
            build_idx = [ev.col_index(c)[1] for c in build_cols]
            buckets: dict[tuple, list[tuple[Scalar, ...]]] = {}
            for row in filtered[i]:
                key = tuple(row[j] for j in build_idx)
                if any(v is None for v in key):
                    continue  # NULL never joins
                buckets.setdefault(key, []).append(row)
            probe_src_idx = [ev.col_index(c) for c in probe_cols]
            joined = []
            for env in current:
                key = tuple(env[s][j] for s, j in probe_src_idx)
                if any(v is None for v in key):
                    continue
                for row in buckets.get(key, ()):
                    joined.append(env + (row,))
            current = joined
        else:
            current = [env + (row,) for env in current for row in filtered[i]]

        bound_prefix += 1
        # any remaining multi-table conjunct now fully bound filters here
        now_bound = [c for s, c in remaining if max(s) < bound_prefix]
        remaining = [(s, c) for s, c in remaining if max(s) >= bound_prefix]
        for conj in now_bound:
            # prefix envs only index sources below bound_prefix
            current = [env for env in current if ev.eval_bool(conj, env)]

    return current


def output_columns(ast: QueryAst, snapshot: Snapshot) -> tuple[tuple[str, DType], ...]:
    """(label, dtype) per select item: alias or canonical expression text."""
    tables = [snapshot.table(t.name) for t in ast.from_tables]
    out = []
    for item in ast.select_items:
        label = item.alias if item.alias is not None else render_expr(item.expr)
        expr = item.expr
        if isinstance(expr, Aggregate):
            dtype = DType.INT
        elif isinstance(expr, AgeYears):
            dtype = DType.INT
        elif isinstance(expr, Bucket):
            dtype = DType.STR
        elif isinstance(expr, ColumnRef):
            if expr.source is None or expr.column is None:
                raise EngineError(f"unresolved column reference {expr.name!r}")
            dtype = tables[expr.source].schema.column(expr.column).dtype
        else:
            raise EngineError(f"unhandled select expression {expr!r}")
        out.append((label, dtype))
    return tuple(out)


def _aggregate_value(ev: _Evaluator, agg: Aggregate, envs: list[Env]) -> int:
    if agg.arg is None:
        return len(envs)
    values = (ev.col_value(agg.arg, env) for env in envs)
    if agg.fn == "count":
        return sum(1 for v in values if v is not None)
    if agg.fn == "count_distinct":
        return len({v for v in values if v is not None})
    raise EngineError(f"unknown aggregate {agg.fn!r}")


def execute(q: Union[BoundQuery, QueryAst], snapshot: Snapshot) -> ResultSet:
    """Evaluate a fully bound, resolved query."""
    ast = q.ast if isinstance(q, BoundQuery) else q
    if param_names(ast):
        raise EngineError("query still has unbound parameters")
    for ref in all_column_refs(ast):
        if ref.source is None or ref.column is None:
            raise EngineError(f"unresolved column reference {ref.name!r}")
    ev = _Evaluator(ast, snapshot)
    envs = _join_envs(ev, ast)
    columns = output_columns(ast, snapshot)
    items = ast.select_items

    has_aggregate = any(isinstance(i.expr, Aggregate) for i in items)
    if has_aggregate or ast.group_by:
        key_exprs: list[SelectExpr] = []
        for ref in ast.group_by:
            if ref.item is not None:
                key_exprs.append(items[ref.item].expr)
            else:
                key_exprs.append(ref)
        groups: dict[tuple, list[Env]] = {}
        for env in envs:
            key = tuple(ev.eval_expr(e, env) for e in key_exprs)
            groups.setdefault(key, []).append(env)
        if not ast.group_by:
            groups.setdefault((), [])  # aggregates over no rows still answer
        rows = []
        for members in groups.values():
            row = []
            for item in items:
                if isinstance(item.expr, Aggregate):
                    row.append(_aggregate_value(ev, item.expr, members))
                elif members:
                    row.append(ev.eval_expr(item.expr, members[0]))
                else:
                    row.append(None)
            rows.append(tuple(row))
    else:
        rows = [
            tuple(ev.eval_expr(item.expr, env) for item in items) for env in envs
        ]

    for key in reversed(ast.order_by):
        if key.item is None:
            raise EngineError(f"unresolved ORDER BY key {key.name!r}")
        idx = key.item
        rows.sort(
            key=lambda r: (True, 0) if r[idx] is None else (False, r[idx]),
            reverse=key.desc,
        )
    if ast.limit is not None:
        rows = rows[: ast.limit]
    return ResultSet(columns=columns, rows=tuple(rows))
