"""Stored-query catalog: named, URL-addressed, parameterized templates.

Templates are persisted as query text and re-parsed on load, so the
catalog can never hold something the parser or the policy would reject
today. Role grants reference catalog ids; listing for a role never
exposes template text, only names, descriptions, and parameter specs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from . import guard, mql
from .state import StateError, StateStore, allocate_id
from .values import DType

URL_PATH_RE = re.compile(r"^[a-z0-9_-]+$")


class RegistryError(Exception):
    pass


class ConflictError(RegistryError):
    pass


class TemplateError(RegistryError):
    """Template text, param specs, or metadata unusable."""


class ParamError(RegistryError):
    """Instantiation-time parameter problem (missing, unknown, ill-typed)."""


class NotFoundError(RegistryError):
    pass


class QueryRejected(RegistryError):
    """Guard verdict with at least one violation."""

    def __init__(self, verdict: guard.PolicyVerdict) -> None:
        rules = ", ".join(v.rule for v in verdict.violations)
        super().__init__(f"query rejected by policy: {rules}")
        self.verdict = verdict


@dataclass(frozen=True)
class ParamSpec:
    name: str
    dtype: DType
    required: bool = True


@dataclass(frozen=True)
class StoredQuery:
    id: int
    name: str
    description: str
    url_path: str
    template: str
    param_specs: tuple[ParamSpec, ...]
    enabled: bool
    ast: mql.QueryAst = field(compare=False, repr=False)


def spec_from_json(entry: Any) -> ParamSpec:
    try:
        name = entry["name"]
        dtype = DType(entry["dtype"])
        required = entry.get("required", True)
    except (KeyError, TypeError, ValueError) as exc:
        raise TemplateError(f"bad parameter spec: {exc}") from None
    if dtype not in mql.PARAM_DTYPES:
        raise TemplateError(f"parameter {name!r}: dtype {dtype.value!r} not bindable")
    if not isinstance(required, bool):
        raise TemplateError(f"parameter {name!r}: required must be a boolean")
    return ParamSpec(name=name, dtype=dtype, required=required)


def spec_to_json(spec: ParamSpec) -> dict[str, Any]:
    return {"name": spec.name, "dtype": spec.dtype.value, "required": spec.required}


class Catalog:
    """Read-mostly view of the catalog part of the state document."""

    def __init__(
        self,
        store: StateStore,
        schemas: Mapping[str, Any],
        policy: guard.Policy,
    ) -> None:
        self._store = store
        self._schemas = dict(schemas)
        self._policy = policy
        self._cache: Optional[tuple[int, tuple[StoredQuery, ...]]] = None
        self.all_queries()  # load-time validation

    def _build(self, entry: Any) -> StoredQuery:
        try:
            qid = entry["id"]
            name = entry["name"]
            description = entry["description"]
            url_path = entry["url_path"]
            template = entry["template"]
            enabled = entry["enabled"]
            raw_specs = entry["params"]
        except KeyError as exc:
            raise StateError(f"catalog entry missing field {exc}") from None
        if not isinstance(qid, int) or isinstance(qid, bool) or qid < 1:
            raise StateError(f"catalog id must be a positive integer, got {qid!r}")
        if not isinstance(url_path, str) or not URL_PATH_RE.fullmatch(url_path):
            raise TemplateError(f"bad url_path {url_path!r}")
        if not isinstance(name, str) or not name:
            raise TemplateError("query name must be a non-empty string")
        if not isinstance(description, str):
            raise TemplateError("description must be a string")
        if not isinstance(enabled, bool):
            raise TemplateError("enabled must be a boolean")
        try:
            ast = mql.parse(template, self._schemas)
        except mql.MqlError as exc:
            raise TemplateError(f"template for {url_path!r} does not parse: {exc}") from None
        specs = tuple(spec_from_json(s) for s in raw_specs)
        spec_names = [s.name for s in specs]
        if len(set(spec_names)) != len(spec_names):
            raise TemplateError(f"duplicate parameter specs in {url_path!r}")
        placeholders = set(mql.param_names(ast))
        if set(spec_names) != placeholders:
            raise TemplateError(
                f"parameter specs {sorted(spec_names)} do not match template"
                f" placeholders {sorted(placeholders)} in {url_path!r}"
            )
        verdict = guard.validate(ast, {}, self._policy, origin="stored")
        if not verdict.accepted:
            raise QueryRejected(verdict)
        return StoredQuery(
            id=qid,
            name=name,
            description=description,
            url_path=url_path,
            template=template,
            param_specs=specs,
            enabled=enabled,
            ast=ast,
        )

    def all_queries(self) -> tuple[StoredQuery, ...]:
        revision = self._store.revision
        if self._cache is not None and self._cache[0] == revision:
            return self._cache[1]

        def load(doc: dict[str, Any]) -> tuple[StoredQuery, ...]:
            queries = tuple(
                sorted((self._build(e) for e in doc["queries"]), key=lambda q: q.id)
            )
            ids = [q.id for q in queries]
            if len(set(ids)) != len(ids):
                raise StateError("duplicate catalog ids")
            paths = [q.url_path for q in queries]
            if len(set(paths)) != len(paths):
                raise StateError("duplicate catalog url_paths")
            return queries

        queries = self._store.read(load)
        self._cache = (revision, queries)
        return queries

    def get(self, query_id: int) -> Optional[StoredQuery]:
        for q in self.all_queries():
            if q.id == query_id:
                return q
        return None

    def resolve_path(self, url_path: str) -> Optional[StoredQuery]:
        """Enabled queries only; disabled and unknown are indistinguishable."""
        for q in self.all_queries():
            if q.url_path == url_path and q.enabled:
                return q
        return None

    def list_for_role(self, granted_ids: frozenset[int]) -> tuple[StoredQuery, ...]:
        return tuple(
            q for q in self.all_queries() if q.enabled and q.id in granted_ids
        )

    def register(
        self,
        name: str,
        description: str,
        url_path: str,
        template: str,
        param_specs: tuple[ParamSpec, ...],
        enabled: bool = True,
    ) -> int:
        def step(doc: dict[str, Any]) -> int:
            if any(e["url_path"] == url_path for e in doc["queries"]):
                raise ConflictError(f"url_path {url_path!r} already registered")
            qid = allocate_id(doc, "query")
            entry = {
                "id": qid,
                "name": name,
                "description": description,
                "url_path": url_path,
                "template": template,
                "params": [spec_to_json(s) for s in param_specs],
                "enabled": enabled,
            }
            self._build(entry)  # parse + policy before anything persists
            doc["queries"].append(entry)
            return qid

        return self._store.mutate(step)

    def delete(self, url_path: str) -> int:
        def step(doc: dict[str, Any]) -> int:
            entry = next(
                (e for e in doc["queries"] if e["url_path"] == url_path), None
            )
            if entry is None:
                raise NotFoundError(f"no stored query at {url_path!r}")
            doc["queries"] = [e for e in doc["queries"] if e["url_path"] != url_path]
            doc["grants"] = [g for g in doc["grants"] if g["query"] != entry["id"]]
            return entry["id"]

        return self._store.mutate(step)

    def instantiate(self, sq: StoredQuery, raw_params: Mapping[str, str]) -> mql.BoundQuery:
        """Bind raw parameter strings, then run the stored-origin policy."""
        by_name = {spec.name: spec for spec in sq.param_specs}
        unknown = sorted(set(raw_params) - set(by_name))
        if unknown:
            raise ParamError(f"unknown parameter {unknown[0]!r}")
        missing = sorted(
            name
            for name, spec in by_name.items()
            if spec.required and name not in raw_params
        )
        if missing:
            raise ParamError(f"missing parameter {missing[0]!r}")
        typed = {
            name: (by_name[name].dtype, raw)
            for name, raw in raw_params.items()
        }
        try:
            bound = mql.bind_params(sq.ast, typed)
        except mql.BindError as exc:
            raise ParamError(str(exc)) from None
        verdict = guard.validate(bound.ast, raw_params, self._policy, origin="stored")
        if not verdict.accepted:
            raise QueryRejected(verdict)
        return bound
