"""Aggregate-only query gateway over an in-memory clinical dataset.

The package is organized around a small pipeline: CSV tables are loaded
into an immutable :class:`~aqgate.relstore.Snapshot`, query text is parsed
by :mod:`aqgate.mql` into an AST, :mod:`aqgate.guard` decides whether the
query may run, :mod:`aqgate.engine` evaluates it, and :mod:`aqgate.xmlout`
serializes the result. :mod:`aqgate.gateway` exposes the whole thing over
HTTP behind the role-based access control in :mod:`aqgate.rbac` and the
stored-query catalog in :mod:`aqgate.registry`.
"""

__version__ = "0.1.0"
