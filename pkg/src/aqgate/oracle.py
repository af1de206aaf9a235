"""Reference evaluator used to cross-check the engine.

Deliberately written with none of the engine's machinery: recursive
nested-loop enumeration instead of hash joins, comparator-based sorting
instead of keyed multi-pass sorts, bisect for bracket labels instead of
a linear scan. Agreement between the two is a test artifact, not a code
artifact.

The recursion binds FROM tables left to right and evaluates each
conjunct at the shallowest depth where its tables are all bound, so
enumeration order matches the definition (lexicographic FROM order)
while dead branches are cut early. For an equality conjunct between a
bound column and the column being bound, candidate rows come from a
value index built once per (table, column); index buckets keep original
row order. Predicates containing OR fall back to filtering the full
cross product.
"""

from __future__ import annotations

import bisect
import functools
from typing import Optional, Union

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
    param_names,
    render_expr,
)
from .engine import ResultSet
from .relstore import Snapshot
from .values import DType, Scalar


class OracleError(Exception):
    pass


Row = tuple


def _ref_value(ref: ColumnRef, env: list, columns: list[dict]) -> Scalar:
    if ref.source is None or ref.column is None:
        raise OracleError(f"unresolved reference {ref.name!r}")
    return env[ref.source][columns[ref.source][ref.column.lower()]]


def _lit_of(node: Union[Lit, ColumnRef, object]) -> Lit:
    if not isinstance(node, Lit):
        raise OracleError("query not fully bound")
    return node


def _cmp_values(a: Scalar, op: str, b: Scalar) -> bool:
    if a is None or b is None:
        return False
    if isinstance(a, bool) != isinstance(b, bool):
        raise OracleError(f"incomparable values {a!r} and {b!r}")
    if not isinstance(a, bool) and type(a) is not type(b):
        raise OracleError(f"incomparable values {a!r} and {b!r}")
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise OracleError(f"bad operator {op!r}")


def _truth(expr: BoolExpr, env: list, columns: list[dict]) -> bool:
    if isinstance(expr, Comparison):
        left = _ref_value(expr.lhs, env, columns)
        if isinstance(expr.rhs, ColumnRef):
            right: Scalar = _ref_value(expr.rhs, env, columns)
        else:
            right = _lit_of(expr.rhs).value
        return _cmp_values(left, expr.op, right)
    if isinstance(expr, Between):
        v = _ref_value(expr.col, env, columns)
        lo = _lit_of(expr.lo).value
        hi = _lit_of(expr.hi).value
        if v is None:
            return False
        return _cmp_values(v, ">=", lo) and _cmp_values(v, "<=", hi)
    if isinstance(expr, And):
        return _truth(expr.left, env, columns) and _truth(expr.right, env, columns)
    if isinstance(expr, Or):
        return _truth(expr.left, env, columns) or _truth(expr.right, env, columns)
    if isinstance(expr, Paren):
        return _truth(expr.inner, env, columns)
    raise OracleError(f"unexpected predicate node {expr!r}")


def _scalar(expr: SelectExpr, env: list, columns: list[dict]) -> Scalar:
    if isinstance(expr, ColumnRef):
        return _ref_value(expr, env, columns)
    if isinstance(expr, AgeYears):
        born = _ref_value(expr.col, env, columns)
        if born is None:
            return None
        ref = _lit_of(expr.ref).value
        had_birthday = (ref.month, ref.day) >= (born.month, born.day)
        return (ref.year - born.year) if had_birthday else (ref.year - born.year - 1)
    if isinstance(expr, Bucket):
        v = _scalar(expr.arg, env, columns)
        if v is None:
            return None
        bounds = list(expr.bounds)
        pos = bisect.bisect_right(bounds, v)
        if pos == 0:
            return f"<{bounds[0]}"
        if pos == len(bounds):
            return f"{bounds[-1]}+"
        return f"{bounds[pos - 1]}-{bounds[pos] - 1}"
    raise OracleError(f"unexpected scalar node {expr!r}")


def _split_and(expr: Optional[BoolExpr]) -> Optional[list[BoolExpr]]:
    """AND-only conjunct list, or None when the predicate uses OR."""
    if expr is None:
        return []
    out: list[BoolExpr] = []
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, And):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, Paren):
            stack.append(node.inner)
        elif isinstance(node, Or):
            return None
        elif isinstance(node, (Comparison, Between)):
            out.append(node)
        else:
            raise OracleError(f"unexpected predicate node {node!r}")
    return out


def _tables_of(conj: BoolExpr) -> set[int]:
    if isinstance(conj, Comparison):
        out = {conj.lhs.source}
        if isinstance(conj.rhs, ColumnRef):
            out.add(conj.rhs.source)
        return {s for s in out if s is not None}
    if isinstance(conj, Between):
        return {conj.col.source} if conj.col.source is not None else set()
    raise OracleError(f"not a simple conjunct: {conj!r}")


def _enumerate(ast: QueryAst, snapshot: Snapshot, columns: list[dict]) -> list[list]:
    all_rows = [list(snapshot.table(t.name).rows) for t in ast.from_tables]
    n = len(all_rows)
    conjuncts = _split_and(ast.where)

    matches: list[list] = []
    if conjuncts is None:
        env: list = [None] * n

        def walk(depth: int) -> None:
            if depth == n:
                if _truth(ast.where, env, columns):  # type: ignore[arg-type]
                    matches.append(list(env))
                return
            for row in all_rows[depth]:
                env[depth] = row
                walk(depth + 1)
            env[depth] = None

        walk(0)
        return matches

    by_depth: dict[int, list[BoolExpr]] = {d: [] for d in range(n)}
    for conj in conjuncts:
        tables = _tables_of(conj)
        by_depth[max(tables)].append(conj)

    # narrowing choice per depth: an equality against an already-bound column
    value_indexes: dict[tuple[int, int], dict] = {}

    def index_for(depth: int, col_idx: int) -> dict:
        key = (depth, col_idx)
        idx = value_indexes.get(key)
        if idx is None:
            idx = {}
            for row in all_rows[depth]:
                v = row[col_idx]
                if v is None:
                    continue
                idx.setdefault(v, []).append(row)
            value_indexes[key] = idx
        return idx

    def candidates(depth: int, env: list) -> list:
        for conj in by_depth[depth]:
            if not (isinstance(conj, Comparison) and conj.op == "="):
                continue
            if not isinstance(conj.rhs, ColumnRef):
                continue
            a, b = conj.lhs, conj.rhs
            if a.source == depth and b.source is not None and b.source < depth:
                here, bound = a, b
            elif b.source == depth and a.source is not None and a.source < depth:
                here, bound = b, a
            else:
                continue
            bound_value = _ref_value(bound, env, columns)
            if bound_value is None:
                return []
            col_idx = columns[depth][here.column.lower()]  # type: ignore[union-attr]
            return index_for(depth, col_idx).get(bound_value, [])
        return all_rows[depth]

    env2: list = [None] * n

    def descend(depth: int) -> None:
        if depth == n:
            matches.append(list(env2))
            return
        for row in candidates(depth, env2):
            env2[depth] = row
            if all(_truth(c, env2, columns) for c in by_depth[depth]):
                descend(depth + 1)
        env2[depth] = None

    descend(0)
    return matches


def oracle_execute(q: Union[BoundQuery, QueryAst], snapshot: Snapshot) -> ResultSet:
    """Evaluate a bound query by definition; see module docstring."""
    ast = q.ast if isinstance(q, BoundQuery) else q
    if param_names(ast):
        raise OracleError("query still has unbound parameters")

    schemas = [snapshot.table(t.name).schema for t in ast.from_tables]
    columns = [
        {c.name.lower(): i for i, c in enumerate(s.columns)} for s in schemas
    ]

    envs = _enumerate(ast, snapshot, columns)
    items = ast.select_items

    grouped = bool(ast.group_by) or any(
        isinstance(i.expr, Aggregate) for i in items
    )
    rows: list[tuple]
    if grouped:
        key_exprs = [
            items[g.item].expr if g.item is not None else g for g in ast.group_by
        ]
        buckets: dict[tuple, list[list]] = {}
        order: list[tuple] = []
        for env in envs:
            key = tuple(_scalar(e, env, columns) for e in key_exprs)
            if key not in buckets:
                buckets[key] = []
                order.append(key)
            buckets[key].append(env)
        if not ast.group_by and not order:
            buckets[()] = []
            order.append(())
        rows = []
        for key in order:
            members = buckets[key]
            out = []
            for item in items:
                e = item.expr
                if isinstance(e, Aggregate):
                    if e.arg is None:
                        out.append(len(members))
                    else:
                        seen = []
                        for env in members:
                            v = _ref_value(e.arg, env, columns)
                            if v is not None:
                                seen.append(v)
                        if e.fn == "count":
                            out.append(len(seen))
                        elif e.fn == "count_distinct":
                            distinct = []
                            for v in seen:
                                if v not in distinct:
                                    distinct.append(v)
                            out.append(len(distinct))
                        else:
                            raise OracleError(f"unknown aggregate {e.fn!r}")
                else:
                    out.append(
                        _scalar(e, members[0], columns) if members else None
                    )
            rows.append(tuple(out))
    else:
        rows = [
            tuple(_scalar(item.expr, env, columns) for item in items)
            for env in envs
        ]

    if ast.order_by:
        keys = [(k.item, k.desc) for k in ast.order_by]
        for item, _ in keys:
            if item is None:
                raise OracleError("unresolved order key")

        def compare(ra: tuple, rb: tuple) -> int:
            for item, desc in keys:
                va, vb = ra[item], rb[item]
                if va is None and vb is None:
                    continue
                if va is None:
                    return -1 if desc else 1
                if vb is None:
                    return 1 if desc else -1
                if va == vb:
                    continue
                less = va < vb
                if desc:
                    return 1 if less else -1
                return -1 if less else 1
            return 0

        rows = sorted(rows, key=functools.cmp_to_key(compare))

    if ast.limit is not None:
        rows = rows[: ast.limit]

    cols = []
    for item in items:
        label = item.alias if item.alias is not None else render_expr(item.expr)
        e = item.expr
        if isinstance(e, (Aggregate, AgeYears)):
            dtype = DType.INT
        elif isinstance(e, Bucket):
            dtype = DType.STR
        elif isinstance(e, ColumnRef):
            dtype = schemas[e.source].column(e.column).dtype  # type: ignore[index,arg-type]
        else:
            raise OracleError(f"unexpected select node {e!r}")
        cols.append((label, dtype))
    return ResultSet(columns=tuple(cols), rows=tuple(rows))
