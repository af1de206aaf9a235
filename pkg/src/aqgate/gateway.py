"""HTTP front end: login, role-scoped query listing, stored and dynamic
query execution, and admin mutations.

Every 200 from the query surface is a policy-validated aggregate
serialized to XML; column labels ride in the X-Columns header. Every
4xx carries a structured JSON body {"error": {code, message, ...}} that
never echoes catalog SQL, passwords, or tokens. The /q/* surface is
read-only: non-GET verbs get 405 before anything else is considered.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from fastapi import Depends, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import guard, mql, rbac, registry, xmlout
from .engine import execute
from .relstore import Snapshot, load_dataset
from .state import DYNAMIC_QUERY_ID, StateStore

log = logging.getLogger("aqgate.gateway")


@dataclass
class GatewayConfig:
    data_dir: Union[str, Path]
    state_path: Union[str, Path]
    policy_path: Optional[Union[str, Path]] = None
    host: str = "127.0.0.1"
    port: int = 8420
    session_ttl_minutes: int = rbac.DEFAULT_SESSION_TTL_MINUTES
    log_path: Optional[Union[str, Path]] = None

    def __post_init__(self) -> None:
        self.data_dir = Path(self.data_dir)
        self.state_path = Path(self.state_path)
        if self.policy_path is not None:
            self.policy_path = Path(self.policy_path)
        if self.session_ttl_minutes < 1:
            raise ValueError("session_ttl_minutes must be >= 1")


class _ApiError(Exception):
    def __init__(
        self,
        status: int,
        code: str,
        message: str,
        *,
        violations: Optional[guard.PolicyVerdict] = None,
        offset: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.violations = violations
        self.offset = offset

    def to_response(self) -> JSONResponse:
        body: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.violations is not None:
            body["violations"] = [
                {"rule": v.rule, "detail": v.detail, "location": v.location}
                for v in self.violations.violations
            ]
        if self.offset is not None:
            body["offset"] = self.offset
        return JSONResponse(status_code=self.status, content={"error": body})


class LoginBody(BaseModel):
    username: str
    password: str
    role: str


class DynamicBody(BaseModel):
    query_text: str
    params: dict[str, str] = {}


class RoleBody(BaseModel):
    name: str


class UserBody(BaseModel):
    username: str
    password: str
    roles: list[str] = []


class ParamSpecBody(BaseModel):
    name: str
    dtype: str
    required: bool = True


class QueryBody(BaseModel):
    name: str
    description: str = ""
    url_path: str
    template: str
    params: list[ParamSpecBody] = []
    enabled: bool = True


class GrantBody(BaseModel):
    role: str
    query: int


def _configure_logging(log_path: Optional[Path]) -> None:
    """Attach a file handler when asked; otherwise leave logging to the host."""
    log.setLevel(logging.INFO)
    if log_path is None:
        return
    for handler in list(log.handlers):
        if getattr(handler, "_aqgate_owned", False):
            log.removeHandler(handler)
            handler.close()
    handler = logging.FileHandler(log_path, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    handler._aqgate_owned = True  # type: ignore[attr-defined]
    log.addHandler(handler)


def _dynamic_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def create_app(config: GatewayConfig) -> FastAPI:
    if not config.data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {config.data_dir}")
    if not config.state_path.is_file():
        raise FileNotFoundError(f"state file not found: {config.state_path}")
    policy = (
        guard.load_policy(config.policy_path)
        if config.policy_path is not None
        else guard.Policy()
    )
    snapshot: Snapshot = load_dataset(config.data_dir)
    store = StateStore(config.state_path)
    directory = rbac.Directory(store, ttl_minutes=config.session_ttl_minutes)
    catalog = registry.Catalog(store, snapshot.schemas(), policy)
    _configure_logging(config.log_path)

    app = FastAPI(
        title="aggregate query gateway",
        docs_url=None,
        redoc_url=None,
        openapi_url=None,
    )

    # --- error shaping ---

    @app.exception_handler(_ApiError)
    async def on_api_error(request: Request, exc: _ApiError):
        return exc.to_response()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        # field locations only; echoing values could leak credentials
        fields = sorted(
            {".".join(str(p) for p in err.get("loc", ())) for err in exc.errors()}
        )
        return _ApiError(
            400,
            "invalid_request",
            f"request failed validation: {', '.join(fields)}",
        ).to_response()

    from starlette.exceptions import HTTPException as StarletteHTTPException

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = {
            401: "unauthenticated",
            403: "forbidden",
            404: "not_found",
            405: "method_not_allowed",
            409: "conflict",
        }.get(exc.status_code, "error")
        message = exc.detail if isinstance(exc.detail, str) else code
        return _ApiError(exc.status_code, code, message).to_response()

    # --- auth plumbing ---

    def current_session(request: Request) -> rbac.Session:
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise _ApiError(401, "unauthenticated", "missing bearer token")
        session = directory.validate_token(token.strip())
        if session is None:
            raise _ApiError(401, "unauthenticated", "invalid or expired token")
        return session

    def admin_session(request: Request) -> rbac.Session:
        session = current_session(request)
        if not directory.is_admin(session):
            raise _ApiError(403, "forbidden", "administrator role required")
        return session

    # --- open endpoints ---

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "tables": {name: len(t.rows) for name, t in sorted(snapshot.tables.items())},
        }

    @app.post("/auth/login")
    async def login(body: LoginBody):
        try:
            session = directory.authenticate(body.username, body.password, body.role)
        except rbac.AuthenticationError:
            log.info("login user=%s verdict=rejected", body.username)
            raise _ApiError(401, "unauthenticated", "invalid credentials")
        except rbac.RoleNotHeldError:
            log.info("login user=%s verdict=role_rejected", body.username)
            raise _ApiError(401, "unauthenticated", "role not held")
        log.info(
            "login user=%s role=%s verdict=accepted",
            session.username,
            session.role_name,
        )
        return {
            "token": session.token,
            "expires_at": session.expires_at.isoformat(),
            "role": session.role_name,
            "username": session.username,
        }

    # --- query listing and metadata ---

    def _descriptor(sq: registry.StoredQuery) -> dict[str, Any]:
        return {
            "id": sq.id,
            "name": sq.name,
            "description": sq.description,
            "url_path": sq.url_path,
            "params": [registry.spec_to_json(s) for s in sq.param_specs],
        }

    @app.get("/queries")
    async def list_queries(session: rbac.Session = Depends(current_session)):
        granted = directory.grants_for_role(session.role_id)
        return {
            "queries": [_descriptor(sq) for sq in catalog.list_for_role(granted)],
            "dynamic_allowed": DYNAMIC_QUERY_ID in granted,
        }

    @app.get("/meta/columns")
    async def meta_columns(session: rbac.Session = Depends(current_session)):
        """Columns usable in dynamic queries, with blocked names withheld."""
        tables: dict[str, list[dict[str, Any]]] = {}
        for name, schema in sorted(snapshot.schemas().items()):
            cols = []
            for col in schema.columns:
                if col.name.lower() in policy.block_list:
                    continue
                entry: dict[str, Any] = {"name": col.name, "dtype": col.dtype.value}
                if col.enum_values is not None:
                    entry["values"] = list(col.enum_values)
                cols.append(entry)
            tables[name] = cols
        return {"tables": tables}

    # --- stored query execution ---

    def _run_to_response(
        bound: mql.BoundQuery, *, log_ctx: tuple[str, str, str]
    ) -> Response:
        rs = execute(bound, snapshot)
        rs = guard.apply_suppression(rs, bound, policy)
        user, role, ident = log_ctx
        log.info(
            "query user=%s role=%s query=%s verdict=accepted rows=%d",
            user,
            role,
            ident,
            len(rs.rows),
        )
        return Response(
            content=xmlout.serialize(rs),
            media_type="application/xml",
            headers={"X-Columns": xmlout.column_header(rs)},
        )

    @app.get("/q/{url_path}")
    async def run_stored(
        url_path: str,
        request: Request,
        session: rbac.Session = Depends(current_session),
    ):
        sq = catalog.resolve_path(url_path)
        if sq is None:
            raise _ApiError(404, "not_found", f"no query at {url_path!r}")
        if directory.authorize(session.token, sq.id) is not rbac.Decision.ALLOW:
            log.info(
                "query user=%s role=%s query=%s verdict=denied",
                session.username,
                session.role_name,
                sq.url_path,
            )
            raise _ApiError(403, "forbidden", "role not granted this query")
        raw_params = dict(request.query_params)
        try:
            bound = catalog.instantiate(sq, raw_params)
        except registry.ParamError as exc:
            raise _ApiError(422, "invalid_parameter", str(exc))
        except registry.QueryRejected as exc:
            log.info(
                "query user=%s role=%s query=%s verdict=rejected",
                session.username,
                session.role_name,
                sq.url_path,
            )
            raise _ApiError(
                422,
                "policy_violation",
                "query rejected by policy",
                violations=exc.verdict,
            )
        return _run_to_response(
            bound, log_ctx=(session.username, session.role_name, sq.url_path)
        )

    _READ_ONLY = "the query surface is read-only"

    @app.post("/q/{url_path}")
    @app.put("/q/{url_path}")
    @app.delete("/q/{url_path}")
    @app.patch("/q/{url_path}")
    async def reject_mutation(url_path: str):
        raise _ApiError(405, "method_not_allowed", _READ_ONLY)

    # --- dynamic queries ---

    @app.post("/dynamic")
    async def run_dynamic(
        body: DynamicBody, session: rbac.Session = Depends(current_session)
    ):
        decision = directory.authorize(session.token, DYNAMIC_QUERY_ID)
        if decision is not rbac.Decision.ALLOW:
            raise _ApiError(403, "forbidden", "dynamic queries not granted")
        ident = "dynamic:" + _dynamic_hash(body.query_text)
        try:
            ast = mql.parse(body.query_text, snapshot.schemas())
        except mql.ParseError as exc:
            log.info(
                "query user=%s role=%s query=%s verdict=parse_error",
                session.username,
                session.role_name,
                ident,
            )
            raise _ApiError(
                400, "parse_error", str(exc), offset=exc.offset
            )
        except mql.ResolveError as exc:
            raise _ApiError(400, "resolve_error", str(exc))
        try:
            dtypes = mql.infer_param_types(ast, snapshot.schemas())
        except mql.ResolveError as exc:
            raise _ApiError(400, "resolve_error", str(exc))
        expected = set(dtypes)
        supplied = set(body.params)
        if expected - supplied:
            missing = sorted(expected - supplied)[0]
            raise _ApiError(422, "invalid_parameter", f"missing parameter {missing!r}")
        if supplied - expected:
            extra = sorted(supplied - expected)[0]
            raise _ApiError(422, "invalid_parameter", f"unknown parameter {extra!r}")
        try:
            bound = mql.bind_params(
                ast, {n: (dtypes[n], raw) for n, raw in body.params.items()}
            )
        except mql.BindError as exc:
            raise _ApiError(422, "invalid_parameter", str(exc))
        verdict = guard.validate(bound.ast, body.params, policy, origin="dynamic")
        if not verdict.accepted:
            log.info(
                "query user=%s role=%s query=%s verdict=rejected",
                session.username,
                session.role_name,
                ident,
            )
            raise _ApiError(
                422,
                "policy_violation",
                "query rejected by policy",
                violations=verdict,
            )
        return _run_to_response(
            bound, log_ctx=(session.username, session.role_name, ident)
        )

    # --- admin ---

    @app.post("/admin/roles", status_code=201)
    async def add_role(
        body: RoleBody, session: rbac.Session = Depends(admin_session)
    ):
        try:
            rid = directory.add_role(body.name)
        except rbac.ConflictError as exc:
            raise _ApiError(409, "conflict", str(exc))
        return {"id": rid}

    @app.delete("/admin/roles/{name}")
    async def delete_role(
        name: str, session: rbac.Session = Depends(admin_session)
    ):
        try:
            rid = directory.delete_role(name)
        except rbac.ConflictError as exc:
            raise _ApiError(409, "conflict", str(exc))
        except rbac.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"id": rid}

    @app.post("/admin/users", status_code=201)
    async def add_user(
        body: UserBody, session: rbac.Session = Depends(admin_session)
    ):
        try:
            uid = directory.add_user(body.username, body.password, body.roles)
        except rbac.ConflictError as exc:
            raise _ApiError(409, "conflict", str(exc))
        except rbac.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"id": uid}

    @app.delete("/admin/users/{username}")
    async def delete_user(
        username: str, session: rbac.Session = Depends(admin_session)
    ):
        try:
            uid = directory.delete_user(username)
        except rbac.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"id": uid}

    @app.post("/admin/queries", status_code=201)
    async def add_query(
        body: QueryBody, session: rbac.Session = Depends(admin_session)
    ):
        try:
            specs = tuple(
                registry.spec_from_json(p.model_dump()) for p in body.params
            )
            qid = catalog.register(
                name=body.name,
                description=body.description,
                url_path=body.url_path,
                template=body.template,
                param_specs=specs,
                enabled=body.enabled,
            )
        except registry.ConflictError as exc:
            raise _ApiError(409, "conflict", str(exc))
        except registry.QueryRejected as exc:
            raise _ApiError(
                422,
                "policy_violation",
                "template rejected by policy",
                violations=exc.verdict,
            )
        except registry.TemplateError as exc:
            raise _ApiError(422, "invalid_template", str(exc))
        return {"id": qid}

    @app.delete("/admin/queries/{url_path}")
    async def delete_query(
        url_path: str, session: rbac.Session = Depends(admin_session)
    ):
        try:
            qid = catalog.delete(url_path)
        except registry.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"id": qid}

    @app.post("/admin/grants", status_code=201)
    async def add_grant(
        body: GrantBody, session: rbac.Session = Depends(admin_session)
    ):
        try:
            directory.grant(body.role, body.query)
        except rbac.ConflictError as exc:
            raise _ApiError(409, "conflict", str(exc))
        except rbac.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"role": body.role, "query": body.query}

    @app.delete("/admin/grants/{role}/{query_id}")
    async def delete_grant(
        role: str,
        query_id: int,
        session: rbac.Session = Depends(admin_session),
    ):
        try:
            directory.revoke(role, query_id)
        except rbac.NotFoundError as exc:
            raise _ApiError(404, "not_found", str(exc))
        return {"role": role, "query": query_id}

    return app
