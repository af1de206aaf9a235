"""Policy pipeline: the checks that make the gateway privacy-preserving.

Four rules, applied to the parsed AST rather than the raw text:
identifier block list, injection scan over raw parameter values,
aggregate-only output, and small-group suppression. Structure is
protected primarily by typed values-only binding (mql); the substring
scan on parameter values is retained as defense in depth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Optional, Union

from .engine import ResultSet
from .mql import (
    Aggregate,
    AgeYears,
    And,
    Between,
    BoundQuery,
    Bucket,
    ColumnRef,
    Comparison,
    Or,
    Paren,
    QueryAst,
)

BLOCKED_COLUMN = "BLOCKED_COLUMN"
INJECTION = "INJECTION"
NON_AGGREGATE_OUTPUT = "NON_AGGREGATE_OUTPUT"
UNGROUPED_COLUMN = "UNGROUPED_COLUMN"

DEFAULT_BLOCK_LIST = frozenset({"name", "age", "address", "zipcode"})
DEFAULT_ANTI_INJECTION = ("'", "''", ";", "--")


class PolicyError(ValueError):
    """Unusable policy configuration."""


@dataclass(frozen=True)
class Policy:
    block_list: frozenset[str] = DEFAULT_BLOCK_LIST
    anti_injection_list: tuple[str, ...] = DEFAULT_ANTI_INJECTION
    min_group_size: int = 1
    apply_block_list_to_stored: bool = False

    def __post_init__(self) -> None:
        if self.min_group_size < 1:
            raise PolicyError("min_group_size must be >= 1")
        if any(not s for s in self.anti_injection_list):
            raise PolicyError("anti_injection_list entries must be non-empty")
        lowered = frozenset(n.lower() for n in self.block_list)
        object.__setattr__(self, "block_list", lowered)


def load_policy(path: Union[str, Path]) -> Policy:
    """Read a policy from a JSON file; absent keys keep their defaults."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise PolicyError(f"{path}: policy file must hold a JSON object")
    known = {
        "block_list", "anti_injection_list", "min_group_size",
        "apply_block_list_to_stored",
    }
    unknown = set(data) - known
    if unknown:
        raise PolicyError(f"{path}: unknown policy keys: {sorted(unknown)}")
    kwargs = {}
    if "block_list" in data:
        kwargs["block_list"] = frozenset(str(v) for v in data["block_list"])
    if "anti_injection_list" in data:
        kwargs["anti_injection_list"] = tuple(str(v) for v in data["anti_injection_list"])
    if "min_group_size" in data:
        if not isinstance(data["min_group_size"], int) or isinstance(data["min_group_size"], bool):
            raise PolicyError(f"{path}: min_group_size must be an integer")
        kwargs["min_group_size"] = data["min_group_size"]
    if "apply_block_list_to_stored" in data:
        if not isinstance(data["apply_block_list_to_stored"], bool):
            raise PolicyError(f"{path}: apply_block_list_to_stored must be a boolean")
        kwargs["apply_block_list_to_stored"] = data["apply_block_list_to_stored"]
    return Policy(**kwargs)


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    location: str


@dataclass(frozen=True)
class PolicyVerdict:
    violations: tuple[Violation, ...]

    @property
    def accepted(self) -> bool:
        return not self.violations


_ACCEPT = PolicyVerdict(violations=())


def _blockable_refs(ast: QueryAst) -> Iterator[tuple[ColumnRef, str]]:
    """(ref, location) pairs subject to the block list.

    The date column fed to AGE_YEARS inside a BUCKET is exempt: its only
    output is a bracket label, never the underlying value.
    """
    for idx, item in enumerate(ast.select_items):
        loc = f"select item {idx + 1}"
        expr = item.expr
        if isinstance(expr, ColumnRef):
            yield expr, loc
        elif isinstance(expr, Aggregate) and expr.arg is not None:
            yield expr.arg, loc
        elif isinstance(expr, AgeYears):
            yield expr.col, loc
        elif isinstance(expr, Bucket):
            if isinstance(expr.arg, ColumnRef):
                yield expr.arg, loc
            # AgeYears argument exempt inside BUCKET

    def from_bool(expr) -> Iterator[tuple[ColumnRef, str]]:
        if isinstance(expr, Comparison):
            yield expr.lhs, "where"
            if isinstance(expr.rhs, ColumnRef):
                yield expr.rhs, "where"
        elif isinstance(expr, Between):
            yield expr.col, "where"
        elif isinstance(expr, (And, Or)):
            yield from from_bool(expr.left)
            yield from from_bool(expr.right)
        elif isinstance(expr, Paren):
            yield from from_bool(expr.inner)

    if ast.where is not None:
        yield from from_bool(ast.where)
    for ref in ast.group_by:
        if ref.item is None:
            yield ref, "group by"
    # ORDER BY keys name output columns already covered above


def check_deidentification(ast: QueryAst, policy: Policy) -> PolicyVerdict:
    """Reject any reference to a block-listed column base name."""
    violations = []
    for ref, location in _blockable_refs(ast):
        if ref.name.lower() in policy.block_list:
            violations.append(
                Violation(
                    rule=BLOCKED_COLUMN,
                    detail=f"column {ref.name!r} is blocked",
                    location=location,
                )
            )
    return PolicyVerdict(violations=tuple(violations))


def check_injection(raw: str, policy: Optional[Policy] = None) -> bool:
    """True iff the raw parameter value is clean."""
    members = (policy or Policy()).anti_injection_list
    return not any(member in raw for member in members)


def _expr_signature(expr) -> tuple:
    """Hashable identity of a resolved non-aggregate expression."""
    if isinstance(expr, ColumnRef):
        return ("col", expr.source, expr.column)
    if isinstance(expr, AgeYears):
        ref = expr.ref.value if hasattr(expr.ref, "value") else ("param", expr.ref.name)
        return ("age", _expr_signature(expr.col), ref)
    if isinstance(expr, Bucket):
        return ("bucket", _expr_signature(expr.arg), expr.bounds)
    raise AssertionError(f"no signature for {expr!r}")


def check_aggregate_only(ast: QueryAst) -> PolicyVerdict:
    """Every output column must be an aggregate or a group key."""
    grouped_items = {ref.item for ref in ast.group_by if ref.item is not None}
    grouped_exprs = {
        _expr_signature(ref) for ref in ast.group_by if ref.item is None
    }
    violations = []
    for idx, item in enumerate(ast.select_items):
        expr = item.expr
        if isinstance(expr, Aggregate):
            continue
        if idx in grouped_items:
            continue
        if _expr_signature(expr) in grouped_exprs:
            continue
        label = item.alias or expr.__class__.__name__
        if isinstance(expr, ColumnRef):
            violations.append(
                Violation(
                    rule=UNGROUPED_COLUMN,
                    detail=f"column {expr.name!r} is not grouped",
                    location=f"select item {idx + 1}",
                )
            )
        else:
            violations.append(
                Violation(
                    rule=NON_AGGREGATE_OUTPUT,
                    detail=f"output {label!r} is neither an aggregate nor a group key",
                    location=f"select item {idx + 1}",
                )
            )
    return PolicyVerdict(violations=tuple(violations))


def validate(
    ast: QueryAst,
    raw_params: Mapping[str, str],
    policy: Policy,
    origin: str,
) -> PolicyVerdict:
    """Full pipeline; violations accumulate, nothing short-circuits."""
    if origin not in ("stored", "dynamic"):
        raise ValueError(f"origin must be 'stored' or 'dynamic', got {origin!r}")
    violations: list[Violation] = []
    for name in sorted(raw_params):
        raw = raw_params[name]
        if not check_injection(raw, policy):
            matched = [m for m in policy.anti_injection_list if m in raw]
            violations.append(
                Violation(
                    rule=INJECTION,
                    detail=f"value contains forbidden sequence(s): {', '.join(repr(m) for m in matched)}",
                    location=f"parameter :{name}",
                )
            )
    if origin == "dynamic" or policy.apply_block_list_to_stored:
        violations.extend(check_deidentification(ast, policy).violations)
    violations.extend(check_aggregate_only(ast).violations)
    return PolicyVerdict(violations=tuple(violations))


def apply_suppression(rs: ResultSet, q: BoundQuery, policy: Policy) -> ResultSet:
    """Drop aggregate rows whose count falls below min_group_size."""
    if policy.min_group_size <= 1:
        return rs
    count_cols = [
        idx
        for idx, item in enumerate(q.ast.select_items)
        if isinstance(item.expr, Aggregate)
    ]
    if not count_cols:
        return rs
    kept = tuple(
        row
        for row in rs.rows
        if all(
            row[idx] is not None and row[idx] >= policy.min_group_size  # type: ignore[operator]
            for idx in count_cols
        )
    )
    return ResultSet(columns=rs.columns, rows=kept)
