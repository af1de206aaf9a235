"""Serialization of result sets into the dataset/item/element XML format.

The document is anonymous by design: one `item` per row, one `element`
per column in SELECT order, no attributes, no namespaces. Column labels
travel out of band (the gateway's X-Columns header), keeping the body
free of schema detail.
"""

from __future__ import annotations

from .engine import ResultSet
from .values import render_scalar

_DECLARATION = '<?xml version="1.0" encoding="utf-8"?>\n'


def escape(s: str) -> str:
    """Replace the five predefined XML entities.

    Not idempotent: feeding an already-escaped string back in
    double-escapes its ampersands, which is a caller bug.
    """
    s = s.replace("&", "&amp;")
    s = s.replace("<", "&lt;")
    s = s.replace(">", "&gt;")
    s = s.replace('"', "&quot;")
    s = s.replace("'", "&apos;")
    return s


def serialize(rs: ResultSet) -> bytes:
    """UTF-8 document bytes; same ResultSet always yields identical bytes."""
    parts = [_DECLARATION, "<dataset>\n"]
    for row in rs.rows:
        parts.append("  <item>\n")
        for value in row:
            parts.append(
                f"    <element>{escape(render_scalar(value))}</element>\n"
            )
        parts.append("  </item>\n")
    parts.append("</dataset>\n")
    return "".join(parts).encode("utf-8")


def column_header(rs: ResultSet) -> str:
    """Comma-joined column labels for the X-Columns response header."""
    return ",".join(label for label, _ in rs.columns)
