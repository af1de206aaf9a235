"""Shared persistent service state.

One JSON document holds users, roles, the stored-query catalog, and
grants. Reads take a lock and see a consistent document; mutations run
on a deep copy, validate, write atomically (temp file + rename in the
same directory), and only then publish. A crash mid-write leaves the
old file intact.
"""

from __future__ import annotations

import copy
import json
import os
import threading
from pathlib import Path
from typing import Any, Callable, TypeVar, Union

# grantable id for the dynamic-query capability; never a catalog id
DYNAMIC_QUERY_ID = 0

_TOP_KEYS = {"version", "users", "roles", "queries", "grants", "next_ids"}
_ID_KINDS = ("user", "role", "query")

T = TypeVar("T")


class StateError(Exception):
    """State file missing, malformed, or structurally invalid."""


def empty_document() -> dict[str, Any]:
    return {
        "version": 1,
        "users": [],
        "roles": [],
        "queries": [],
        "grants": [],
        "next_ids": {"user": 1, "role": 1, "query": 1},
    }


def validate_document(doc: Any) -> None:
    """Structural checks only; domain rules live with rbac/registry."""
    if not isinstance(doc, dict):
        raise StateError("state document must be a JSON object")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise StateError(f"state document missing keys: {sorted(missing)}")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise StateError(f"state document has unknown keys: {sorted(unknown)}")
    if doc["version"] != 1:
        raise StateError(f"unsupported state version {doc['version']!r}")
    for key in ("users", "roles", "queries", "grants"):
        if not isinstance(doc[key], list) or any(
            not isinstance(entry, dict) for entry in doc[key]
        ):
            raise StateError(f"{key!r} must be a list of objects")
    next_ids = doc["next_ids"]
    if not isinstance(next_ids, dict) or set(next_ids) != set(_ID_KINDS):
        raise StateError(f"next_ids must map exactly {list(_ID_KINDS)}")
    for kind in _ID_KINDS:
        v = next_ids[kind]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise StateError(f"next_ids[{kind!r}] must be a positive integer")


def _write_atomic(path: Path, doc: dict[str, Any]) -> None:
    data = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def allocate_id(doc: dict[str, Any], kind: str) -> int:
    """Next id of the given kind; never reused, even after deletions."""
    n = doc["next_ids"][kind]
    doc["next_ids"][kind] = n + 1
    return n


class StateStore:
    """Owner of the state file. All access goes through read()/mutate()."""

    def __init__(self, path: Union[str, Path]) -> None:
        self.path = Path(path)
        try:
            raw = self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise StateError(f"state file not found: {self.path}") from None
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise StateError(f"{self.path}: invalid JSON: {exc}") from None
        validate_document(doc)
        self._doc = doc
        self._lock = threading.RLock()
        self._revision = 0

    @classmethod
    def create(
        cls,
        path: Union[str, Path],
        document: dict[str, Any],
        *,
        force: bool = False,
    ) -> "StateStore":
        path = Path(path)
        validate_document(document)
        if path.exists() and not force:
            raise StateError(f"refusing to overwrite existing state file {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(path, document)
        return cls(path)

    @property
    def revision(self) -> int:
        with self._lock:
            return self._revision

    def read(self, fn: Callable[[dict[str, Any]], T]) -> T:
        """Run fn against the live document; fn must not mutate it."""
        with self._lock:
            return fn(self._doc)

    def mutate(self, fn: Callable[[dict[str, Any]], T]) -> T:
        """Apply fn to a copy, validate, persist, then publish."""
        with self._lock:
            working = copy.deepcopy(self._doc)
            result = fn(working)
            validate_document(working)
            _write_atomic(self.path, working)
            self._doc = working
            self._revision += 1
            return result
