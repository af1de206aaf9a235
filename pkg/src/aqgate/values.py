"""Scalar values and their text forms.

Every cell in the store is a plain Python scalar: ``int``, ``str``,
``bool``, ``datetime.date``, or ``None``. The column type carries the
intended interpretation; these helpers convert between scalars and their
canonical text forms (CSV fields, SQL literals, XML element text).
"""

from __future__ import annotations

import datetime
import enum
import re
from typing import Optional, Union

Scalar = Union[int, str, bool, datetime.date, None]

# YYYY-MM-DD with optional zero padding on month and day.
_DATE_RE = re.compile(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")
_INT_RE = re.compile(r"^-?\d+$")

_BOOL_TEXT = {"0": False, "1": True, "false": False, "true": True}


class DType(enum.Enum):
    INT = "int"
    STR = "str"
    DATE = "date"
    BOOL = "bool"
    ENUM = "enum"


class ValueParseError(ValueError):
    """Raised when a text field cannot be parsed as the declared type."""


def parse_date(text: str) -> datetime.date:
    """Parse ``YYYY-MM-DD``, accepting non-padded month/day."""
    m = _DATE_RE.match(text)
    if m is None:
        raise ValueParseError(f"not a date: {text!r} (expected YYYY-MM-DD)")
    year, month, day = (int(g) for g in m.groups())
    try:
        return datetime.date(year, month, day)
    except ValueError as exc:
        raise ValueParseError(f"invalid date {text!r}: {exc}") from None


def looks_like_date(text: str) -> bool:
    return _DATE_RE.match(text) is not None


def parse_int(text: str) -> int:
    if not _INT_RE.match(text):
        raise ValueParseError(f"not an integer: {text!r}")
    return int(text)


def parse_bool(text: str) -> bool:
    try:
        return _BOOL_TEXT[text.lower()]
    except KeyError:
        raise ValueParseError(
            f"not a boolean: {text!r} (expected 0/1/true/false)"
        ) from None


def parse_scalar(
    text: str,
    dtype: DType,
    *,
    enum_values: Optional[tuple[str, ...]] = None,
    nullable: bool = False,
) -> Scalar:
    """Parse one text field as ``dtype``.

    An empty field is NULL for nullable non-string columns; for STR
    columns it is the empty string.
    """
    if text == "" and dtype is not DType.STR:
        if nullable:
            return None
        raise ValueParseError("empty field in non-nullable column")
    if dtype is DType.INT:
        return parse_int(text)
    if dtype is DType.STR:
        return text
    if dtype is DType.DATE:
        return parse_date(text)
    if dtype is DType.BOOL:
        return parse_bool(text)
    if dtype is DType.ENUM:
        assert enum_values is not None
        if text not in enum_values:
            raise ValueParseError(
                f"value {text!r} not in enum {sorted(enum_values)}"
            )
        return text
    raise AssertionError(f"unhandled dtype {dtype}")


def render_scalar(value: Scalar) -> str:
    """Canonical text form: dates zero-padded, booleans lowercase, NULL empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, datetime.date):
        return value.isoformat()
    if isinstance(value, int):
        return str(value)
    return value


def scalar_matches(value: Scalar, dtype: DType) -> bool:
    """True when a non-NULL scalar is an instance of the dtype's runtime type."""
    if dtype is DType.INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if dtype in (DType.STR, DType.ENUM):
        return isinstance(value, str)
    if dtype is DType.DATE:
        return isinstance(value, datetime.date)
    if dtype is DType.BOOL:
        return isinstance(value, bool)
    raise AssertionError(f"unhandled dtype {dtype}")
