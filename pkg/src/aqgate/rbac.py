"""Users, roles, grants, and sessions.

Grants attach to roles, never to users; a session carries exactly one
active role, chosen at login from the roles the user holds. Sessions
live in process memory only; the state file persists users, roles, and
grants. Expiry is checked lazily whenever a token is presented.
"""

from __future__ import annotations

import datetime
import enum
import hashlib
import hmac
import secrets
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .state import DYNAMIC_QUERY_ID, StateError, StateStore, allocate_id

PBKDF2_ITERATIONS = 100_000
SALT_BYTES = 16
DEFAULT_SESSION_TTL_MINUTES = 30
ADMIN_ROLE = "administrator"


class RbacError(Exception):
    pass


class AuthenticationError(RbacError):
    """Uniform login failure; never says which part was wrong."""


class RoleNotHeldError(RbacError):
    """Credentials fine, but the requested role is not among the user's."""


class ConflictError(RbacError):
    """Uniqueness violation or a refused destructive operation."""


class NotFoundError(RbacError):
    pass


class Decision(enum.Enum):
    ALLOW = "allow"
    DENY = "deny"
    UNAUTHENTICATED = "unauthenticated"


@dataclass(frozen=True)
class PasswordRecord:
    salt: bytes
    digest: bytes
    iterations: int


@dataclass(frozen=True)
class Session:
    token: str
    user_id: int
    username: str
    role_id: int
    role_name: str
    created_at: datetime.datetime
    expires_at: datetime.datetime


def hash_password(
    password: str,
    *,
    salt: Optional[bytes] = None,
    iterations: int = PBKDF2_ITERATIONS,
) -> PasswordRecord:
    if iterations < 1:
        raise ValueError("iterations must be positive")
    if salt is None:
        salt = secrets.token_bytes(SALT_BYTES)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return PasswordRecord(salt=salt, digest=digest, iterations=iterations)


def verify_password(record: PasswordRecord, password: str) -> bool:
    candidate = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), record.salt, record.iterations
    )
    return hmac.compare_digest(candidate, record.digest)


def password_to_json(record: PasswordRecord) -> dict[str, Any]:
    return {
        "salt": record.salt.hex(),
        "digest": record.digest.hex(),
        "iterations": record.iterations,
    }


def password_from_json(data: Any) -> PasswordRecord:
    try:
        return PasswordRecord(
            salt=bytes.fromhex(data["salt"]),
            digest=bytes.fromhex(data["digest"]),
            iterations=int(data["iterations"]),
        )
    except (TypeError, KeyError, ValueError) as exc:
        raise StateError(f"bad password record: {exc}") from None


# verified against when the username does not exist, so a miss costs the
# same digest work as a hit
_DUMMY_RECORD = hash_password("no-such-user", salt=b"\x00" * SALT_BYTES)


def _parse_users(doc: dict[str, Any]) -> dict[int, dict[str, Any]]:
    users: dict[int, dict[str, Any]] = {}
    names: set[str] = set()
    for entry in doc["users"]:
        try:
            uid = entry["id"]
            username = entry["username"]
            record = password_from_json(entry["password"])
            roles = frozenset(int(r) for r in entry["roles"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"bad user entry: {exc}") from None
        if not isinstance(uid, int) or isinstance(uid, bool):
            raise StateError(f"user id must be an integer, got {uid!r}")
        if not isinstance(username, str) or not username:
            raise StateError("username must be a non-empty string")
        lowered = username.lower()
        if lowered in names:
            raise StateError(f"duplicate username {username!r}")
        if uid in users:
            raise StateError(f"duplicate user id {uid}")
        names.add(lowered)
        users[uid] = {"username": username, "password": record, "roles": roles}
    return users


def _parse_roles(doc: dict[str, Any]) -> dict[int, str]:
    roles: dict[int, str] = {}
    names: set[str] = set()
    for entry in doc["roles"]:
        try:
            rid, name = entry["id"], entry["name"]
        except KeyError as exc:
            raise StateError(f"bad role entry: missing {exc}") from None
        if not isinstance(rid, int) or isinstance(rid, bool):
            raise StateError(f"role id must be an integer, got {rid!r}")
        if not isinstance(name, str) or not name:
            raise StateError("role name must be a non-empty string")
        if rid in roles:
            raise StateError(f"duplicate role id {rid}")
        if name.lower() in names:
            raise StateError(f"duplicate role name {name!r}")
        names.add(name.lower())
        roles[rid] = name
    return roles


def _parse_grants(doc: dict[str, Any]) -> set[tuple[int, int]]:
    grants: set[tuple[int, int]] = set()
    for entry in doc["grants"]:
        try:
            pair = (int(entry["role"]), int(entry["query"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"bad grant entry: {exc}") from None
        if pair in grants:
            raise StateError(f"duplicate grant {pair}")
        grants.add(pair)
    return grants


def check_domain(doc: dict[str, Any]) -> None:
    """Cross-entity consistency for the whole document."""
    users = _parse_users(doc)
    roles = _parse_roles(doc)
    grants = _parse_grants(doc)
    query_ids = {q.get("id") for q in doc["queries"]}
    for uid, user in users.items():
        for rid in user["roles"]:
            if rid not in roles:
                raise StateError(f"user {uid} references unknown role {rid}")
    for rid, qid in grants:
        if rid not in roles:
            raise StateError(f"grant references unknown role {rid}")
        if qid != DYNAMIC_QUERY_ID and qid not in query_ids:
            raise StateError(f"grant references unknown query {qid}")


class Directory:
    """Authentication, authorization, and admin mutations over a StateStore."""

    def __init__(
        self,
        store: StateStore,
        *,
        ttl_minutes: int = DEFAULT_SESSION_TTL_MINUTES,
        clock: Optional[Callable[[], datetime.datetime]] = None,
    ) -> None:
        if ttl_minutes < 1:
            raise ValueError("ttl_minutes must be >= 1")
        self._store = store
        self._ttl = datetime.timedelta(minutes=ttl_minutes)
        self._clock = clock or (lambda: datetime.datetime.now(datetime.timezone.utc))
        self._sessions: dict[str, Session] = {}
        store.read(check_domain)

    # --- sessions ---

    def authenticate(self, username: str, password: str, requested_role: str) -> Session:
        def look(doc: dict[str, Any]) -> tuple:
            users = _parse_users(doc)
            roles = _parse_roles(doc)
            for uid, user in users.items():
                if user["username"].lower() == username.lower():
                    return uid, user, roles
            return None, None, roles

        uid, user, roles = self._store.read(look)
        if user is None:
            verify_password(_DUMMY_RECORD, password)
            raise AuthenticationError("invalid credentials")
        if not verify_password(user["password"], password):
            raise AuthenticationError("invalid credentials")
        role_id = next(
            (
                rid
                for rid, name in roles.items()
                if name.lower() == requested_role.lower()
            ),
            None,
        )
        if role_id is None or role_id not in user["roles"]:
            raise RoleNotHeldError(f"role {requested_role!r} not held")
        token = secrets.token_hex(16)
        while token in self._sessions:
            token = secrets.token_hex(16)
        now = self._clock()
        session = Session(
            token=token,
            user_id=uid,
            username=user["username"],
            role_id=role_id,
            role_name=roles[role_id],
            created_at=now,
            expires_at=now + self._ttl,
        )
        self._sessions[token] = session
        return session

    def validate_token(self, token: str) -> Optional[Session]:
        session = self._sessions.get(token)
        if session is None:
            return None
        if self._clock() >= session.expires_at:
            del self._sessions[token]
            return None
        return session

    def authorize(self, token: str, query_id: int) -> Decision:
        session = self.validate_token(token)
        if session is None:
            return Decision.UNAUTHENTICATED
        granted = self._store.read(
            lambda doc: (session.role_id, query_id) in _parse_grants(doc)
        )
        return Decision.ALLOW if granted else Decision.DENY

    def is_admin(self, session: Session) -> bool:
        return session.role_name.lower() == ADMIN_ROLE

    def grants_for_role(self, role_id: int) -> frozenset[int]:
        return self._store.read(
            lambda doc: frozenset(
                qid for rid, qid in _parse_grants(doc) if rid == role_id
            )
        )

    # --- admin mutations ---

    def add_role(self, name: str) -> int:
        if not name:
            raise ConflictError("role name must be non-empty")

        def step(doc: dict[str, Any]) -> int:
            roles = _parse_roles(doc)
            if any(existing.lower() == name.lower() for existing in roles.values()):
                raise ConflictError(f"role {name!r} already exists")
            rid = allocate_id(doc, "role")
            doc["roles"].append({"id": rid, "name": name})
            return rid

        return self._store.mutate(step)

    def delete_role(self, name: str) -> int:
        if name.lower() == ADMIN_ROLE:
            raise ConflictError("the administrator role cannot be deleted")

        def step(doc: dict[str, Any]) -> int:
            roles = _parse_roles(doc)
            rid = next(
                (r for r, n in roles.items() if n.lower() == name.lower()), None
            )
            if rid is None:
                raise NotFoundError(f"role {name!r} not found")
            doc["roles"] = [r for r in doc["roles"] if r["id"] != rid]
            doc["grants"] = [g for g in doc["grants"] if g["role"] != rid]
            for user in doc["users"]:
                user["roles"] = [r for r in user["roles"] if r != rid]
            return rid

        rid = self._store.mutate(step)
        self._sessions = {
            tok: s for tok, s in self._sessions.items() if s.role_id != rid
        }
        return rid

    def add_user(self, username: str, password: str, role_names: list[str]) -> int:
        record = hash_password(password)

        def step(doc: dict[str, Any]) -> int:
            users = _parse_users(doc)
            roles = _parse_roles(doc)
            if any(
                u["username"].lower() == username.lower() for u in users.values()
            ):
                raise ConflictError(f"username {username!r} already exists")
            role_ids = []
            for name in role_names:
                rid = next(
                    (r for r, n in roles.items() if n.lower() == name.lower()),
                    None,
                )
                if rid is None:
                    raise NotFoundError(f"role {name!r} not found")
                role_ids.append(rid)
            uid = allocate_id(doc, "user")
            doc["users"].append(
                {
                    "id": uid,
                    "username": username,
                    "password": password_to_json(record),
                    "roles": sorted(set(role_ids)),
                }
            )
            return uid

        return self._store.mutate(step)

    def delete_user(self, username: str) -> int:
        def step(doc: dict[str, Any]) -> int:
            users = _parse_users(doc)
            uid = next(
                (
                    u
                    for u, info in users.items()
                    if info["username"].lower() == username.lower()
                ),
                None,
            )
            if uid is None:
                raise NotFoundError(f"user {username!r} not found")
            doc["users"] = [u for u in doc["users"] if u["id"] != uid]
            return uid

        uid = self._store.mutate(step)
        self._sessions = {
            tok: s for tok, s in self._sessions.items() if s.user_id != uid
        }
        return uid

    def grant(self, role_name: str, query_id: int) -> None:
        def step(doc: dict[str, Any]) -> None:
            roles = _parse_roles(doc)
            rid = next(
                (r for r, n in roles.items() if n.lower() == role_name.lower()),
                None,
            )
            if rid is None:
                raise NotFoundError(f"role {role_name!r} not found")
            if query_id != DYNAMIC_QUERY_ID and query_id not in {
                q.get("id") for q in doc["queries"]
            }:
                raise NotFoundError(f"query {query_id} not found")
            if any(
                g["role"] == rid and g["query"] == query_id for g in doc["grants"]
            ):
                raise ConflictError(
                    f"grant ({role_name!r}, {query_id}) already exists"
                )
            doc["grants"].append({"role": rid, "query": query_id})

        self._store.mutate(step)

    def revoke(self, role_name: str, query_id: int) -> None:
        def step(doc: dict[str, Any]) -> None:
            roles = _parse_roles(doc)
            rid = next(
                (r for r, n in roles.items() if n.lower() == role_name.lower()),
                None,
            )
            if rid is None:
                raise NotFoundError(f"role {role_name!r} not found")
            before = len(doc["grants"])
            doc["grants"] = [
                g
                for g in doc["grants"]
                if not (g["role"] == rid and g["query"] == query_id)
            ]
            if len(doc["grants"]) == before:
                raise NotFoundError(
                    f"grant ({role_name!r}, {query_id}) not found"
                )

        self._store.mutate(step)
