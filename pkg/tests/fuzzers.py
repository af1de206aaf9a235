"""Seeded random generators shared by the property tests.

Each generator takes a ``random.Random`` so failures reproduce from the
fixed seeds used in the test modules.
"""

from __future__ import annotations

import datetime
import random
from typing import Optional, Union

from aqgate.mql import (
    Aggregate,
    AgeYears,
    And,
    Between,
    Bucket,
    ColumnRef,
    Comparison,
    Lit,
    Or,
    OrderKey,
    Paren,
    Param,
    QueryAst,
    SelectItem,
    TableRef,
    param_names,
    resolve,
)
from aqgate.relstore import (
    CLINICAL_DETECTION_SCHEMA,
    EXAMINATION_SCHEMA,
    PATIENT_SCHEMA,
    ColumnDef,
    Snapshot,
    Table,
    TableSchema,
    build_snapshot,
)
from aqgate.synthgen import GenConfig, generate_dataset
from aqgate.values import DType

# --- schema-free AST fuzzing (round-trip property) ---------------------------

# No keywords, no builtin function names, nothing date-shaped.
IDENTS = ("Country", "Report_ID", "total", "Val2", "x", "Patient_ID", "Gender", "d1")
TABLES = ("patient", "examination", "t1", "Data2")
STRINGS = ("Germany", "a b", "", "O'Brien", "x,y", "it''s", "HBsAg")


def _rt_colref(rng: random.Random) -> ColumnRef:
    qualifier = rng.choice(IDENTS) if rng.random() < 0.4 else None
    return ColumnRef(qualifier=qualifier, name=rng.choice(IDENTS))


def _rt_date(rng: random.Random) -> datetime.date:
    return datetime.date(2009, 1, 1) + datetime.timedelta(days=rng.randrange(1000))


def _rt_value(rng: random.Random, allow_param: bool = True) -> Union[Lit, Param]:
    roll = rng.random()
    if allow_param and roll < 0.2:
        return Param(name=rng.choice(("start", "end", "country", "flag")))
    if roll < 0.5:
        return Lit(rng.randrange(10000))
    if roll < 0.75:
        return Lit(_rt_date(rng))
    return Lit(rng.choice(STRINGS))


def _rt_term(rng: random.Random, depth: int):
    if depth > 0 and rng.random() < 0.2:
        return Paren(inner=_rt_or(rng, depth - 1))
    if rng.random() < 0.3:
        # BETWEEN with ordered same-type literal bounds, or params
        if rng.random() < 0.3:
            return Between(col=_rt_colref(rng), lo=Param("lo"), hi=Param("hi"))
        kind = rng.random()
        if kind < 0.5:
            a, b = sorted((rng.randrange(1000), rng.randrange(1000)))
            lo, hi = Lit(a), Lit(b)
        elif kind < 0.8:
            a, b = sorted((_rt_date(rng), _rt_date(rng)))
            lo, hi = Lit(a), Lit(b)
        else:
            a, b = sorted((rng.choice(STRINGS), rng.choice(STRINGS)))
            lo, hi = Lit(a), Lit(b)
        return Between(col=_rt_colref(rng), lo=lo, hi=hi)
    rhs: Union[ColumnRef, Lit, Param]
    if rng.random() < 0.25:
        rhs = _rt_colref(rng)
    else:
        rhs = _rt_value(rng)
    op = rng.choice(("=", "<>", "<", "<=", ">", ">="))
    return Comparison(lhs=_rt_colref(rng), op=op, rhs=rhs)


def _rt_and(rng: random.Random, depth: int):
    expr = _rt_term(rng, depth)
    for _ in range(rng.randrange(3)):
        expr = And(left=expr, right=_rt_term(rng, depth))
    return expr


def _rt_or(rng: random.Random, depth: int):
    expr = _rt_and(rng, depth)
    for _ in range(rng.randrange(2)):
        expr = Or(left=expr, right=_rt_and(rng, depth))
    return expr


def _rt_select_expr(rng: random.Random):
    roll = rng.random()
    if roll < 0.35:
        return _rt_colref(rng)
    if roll < 0.55:
        if rng.random() < 0.4:
            return Aggregate(fn="count", arg=None)
        fn = "count_distinct" if rng.random() < 0.5 else "count"
        return Aggregate(fn=fn, arg=_rt_colref(rng))
    ref: Union[Lit, Param]
    ref = Param("refdate") if rng.random() < 0.3 else Lit(_rt_date(rng))
    age = AgeYears(col=_rt_colref(rng), ref=ref)
    if roll < 0.75:
        return age
    bounds = sorted(rng.sample(range(1, 100), rng.randrange(1, 5)))
    arg = age if rng.random() < 0.6 else _rt_colref(rng)
    return Bucket(arg=arg, bounds=tuple(bounds))


def random_ast(rng: random.Random) -> QueryAst:
    """A structurally valid AST for the parse/render round-trip."""
    items = []
    aliases = ("TotalNum", "c1", "AgeBand", "n")
    used: list[str] = []
    for _ in range(rng.randrange(1, 5)):
        alias = None
        if rng.random() < 0.5:
            free = [a for a in aliases if a not in used]
            if free:
                alias = rng.choice(free)
                used.append(alias)
        items.append(SelectItem(expr=_rt_select_expr(rng), alias=alias))

    tables = []
    names = rng.sample(TABLES, rng.randrange(1, 4))
    for name in names:
        alias = rng.choice(("a", "b", "c")) + str(len(tables)) if rng.random() < 0.4 else None
        tables.append(TableRef(name=name, alias=alias))

    where = _rt_or(rng, 2) if rng.random() < 0.7 else None
    group_by = tuple(_rt_colref(rng) for _ in range(rng.randrange(3)))
    order_by = tuple(
        OrderKey(name=rng.choice(IDENTS + tuple(used)), desc=rng.random() < 0.5)
        for _ in range(rng.randrange(3))
    )
    limit = rng.randrange(1, 100) if rng.random() < 0.3 else None
    return QueryAst(
        select_items=tuple(items),
        from_tables=tuple(tables),
        where=where,
        group_by=group_by,
        order_by=order_by,
        limit=limit,
    )


# --- snapshots for engine fuzzing --------------------------------------------

AUX_SCHEMA = TableSchema(
    name="aux",
    columns=(
        ColumnDef("AID", DType.INT),
        ColumnDef("Patient_ID", DType.INT, nullable=True),
        ColumnDef("Val", DType.INT, nullable=True),
        ColumnDef("Tag", DType.STR),
    ),
    primary_key="AID",
)

def small_snapshot(rng: random.Random) -> Snapshot:
    """Dataset tables at <= 50 rows each, plus a nullable aux table."""
    n_patients = rng.randrange(1, 51)
    cfg = GenConfig(
        seed=rng.getrandbits(64),
        n_patients=n_patients,
        n_examinations=rng.randrange(0, 51),
        n_detections=rng.randrange(0, 51),
    )
    patients, exams, detections = generate_dataset(cfg)
    aux_rows = []
    for aid in range(1, rng.randrange(1, 41)):
        pid: Optional[int] = rng.randrange(1, n_patients + 3)  # sometimes dangling
        if rng.random() < 0.2:
            pid = None
        val = None if rng.random() < 0.25 else rng.randrange(6)
        aux_rows.append((aid, pid, val, rng.choice(("red", "green", "blue"))))
    return build_snapshot(
        [
            Table(PATIENT_SCHEMA, patients),
            Table(EXAMINATION_SCHEMA, exams),
            Table(CLINICAL_DETECTION_SCHEMA, detections),
            Table(AUX_SCHEMA, tuple(aux_rows)),
        ]
    )


# --- guard-valid query fuzzing (oracle equivalence) ---------------------------

# Blocked base names (name/address/zipcode) are excluded here; the
# blocked-query fuzzer below injects them deliberately.
SAFE_COLS = {
    "patient": ("PID", "Gender", "DOB", "Country"),
    "examination": ("Report_ID", "Patient_ID", "Endoscopy_Date", "Is_Dialysis", "Diagnoses_Text"),
    "clinicaldetection": ("Detection_ID", "Patient_ID", "Test_Name", "Phase", "Result", "Detection_Date"),
    "aux": ("AID", "Patient_ID", "Val", "Tag"),
}

GROUPABLE = {
    "patient": ("Gender", "Country"),
    "examination": ("Is_Dialysis", "Diagnoses_Text"),
    "clinicaldetection": ("Test_Name", "Phase", "Result"),
    "aux": ("Tag", "Val"),
}

INT_COLS = {
    "patient": ("PID",),
    "examination": ("Report_ID", "Patient_ID"),
    "clinicaldetection": ("Detection_ID", "Patient_ID"),
    "aux": ("AID", "Patient_ID", "Val"),
}

# preferred join pairs: (table_a, col_a, table_b, col_b)
JOIN_PREFS = (
    ("patient", "PID", "examination", "Patient_ID"),
    ("patient", "PID", "clinicaldetection", "Patient_ID"),
    ("patient", "PID", "aux", "Patient_ID"),
    ("examination", "Patient_ID", "clinicaldetection", "Patient_ID"),
    ("examination", "Patient_ID", "aux", "Patient_ID"),
    ("clinicaldetection", "Patient_ID", "aux", "Patient_ID"),
    ("clinicaldetection", "Patient_ID", "clinicaldetection", "Patient_ID"),
)

_DTYPES = {
    schema.name: {c.name: (c.dtype, c.enum_values) for c in schema.columns}
    for schema in (PATIENT_SCHEMA, EXAMINATION_SCHEMA, CLINICAL_DETECTION_SCHEMA, AUX_SCHEMA)
}

_WINDOW = (datetime.date(2009, 1, 1), datetime.date(2011, 12, 31))


def _sample_value(rng: random.Random, snap: Snapshot, table: str, col: str):
    """A literal for filtering: usually a real value, sometimes random."""
    dtype, enum_values = _DTYPES[table][col]
    rows = snap.table(table).rows
    if rows and rng.random() < 0.7:
        idx = snap.table(table).schema.column_index(col)
        value = rng.choice(rows)[idx]
        if value is not None:
            return Lit(value)
    if dtype is DType.INT:
        return Lit(rng.randrange(60))
    if dtype is DType.DATE:
        return Lit(_WINDOW[0] + datetime.timedelta(days=rng.randrange(1100)))
    if dtype is DType.BOOL:
        return Lit(rng.random() < 0.5)
    if dtype is DType.ENUM:
        assert enum_values is not None
        return Lit(rng.choice(enum_values))
    return Lit(rng.choice(("red", "green", "blue", "nope")))


def _pick_tables(rng: random.Random, max_tables: int) -> list[TableRef]:
    count = rng.randrange(1, max_tables + 1)
    refs: list[TableRef] = []
    used_bindings = set()
    for i in range(count):
        name = rng.choice(tuple(SAFE_COLS))
        # self-joins need aliases; alias often regardless
        if name in {r.name for r in refs} or rng.random() < 0.4:
            alias = f"t{i}"
        else:
            alias = None
        binding = (alias or name).lower()
        if binding in used_bindings:
            alias = f"t{i}x"
        used_bindings.add((alias or name).lower())
        refs.append(TableRef(name=name, alias=alias))
    return refs


def _join_conjuncts(rng: random.Random, refs: list[TableRef]) -> list[Comparison]:
    """One equality edge linking each table after the first to the prefix."""
    out = []
    for i in range(1, len(refs)):
        right = refs[i]
        left = refs[rng.randrange(i)]
        prefs = [
            (ca, cb)
            for (ta, ca, tb, cb) in JOIN_PREFS
            if (ta == left.name and tb == right.name)
        ] + [
            (cb, ca)
            for (ta, ca, tb, cb) in JOIN_PREFS
            if (tb == left.name and ta == right.name)
        ]
        if prefs and rng.random() < 0.85:
            ca, cb = rng.choice(prefs)
        else:
            ca = rng.choice(INT_COLS[left.name])
            cb = rng.choice(INT_COLS[right.name])
        out.append(
            Comparison(
                lhs=ColumnRef(qualifier=left.binding_name, name=ca),
                op="=",
                rhs=ColumnRef(qualifier=right.binding_name, name=cb),
            )
        )
    return out


def _filter_term(rng: random.Random, snap: Snapshot, refs: list[TableRef]):
    ref = rng.choice(refs)
    col = rng.choice(SAFE_COLS[ref.name])
    colref = ColumnRef(qualifier=ref.binding_name, name=col)
    dtype, _ = _DTYPES[ref.name][col]
    if dtype in (DType.INT, DType.DATE) and rng.random() < 0.35:
        a = _sample_value(rng, snap, ref.name, col)
        b = _sample_value(rng, snap, ref.name, col)
        lo, hi = sorted((a, b), key=lambda lit: lit.value)
        return Between(col=colref, lo=lo, hi=hi)
    op = rng.choice(("=", "=", "=", "<>", "<", "<=", ">", ">="))
    if dtype in (DType.BOOL, DType.ENUM, DType.STR) and op not in ("=", "<>"):
        op = "="
    return Comparison(lhs=colref, op=op, rhs=_sample_value(rng, snap, ref.name, col))


def _conjoin(terms: list) -> Optional[object]:
    expr = None
    for term in terms:
        expr = term if expr is None else And(left=expr, right=term)
    return expr


def random_valid_query(rng: random.Random, snap: Snapshot) -> QueryAst:
    """A resolved, policy-clean query for engine-vs-oracle comparison."""
    use_or = rng.random() < 0.15
    refs = _pick_tables(rng, 2 if use_or else 3)
    general_terms = [_filter_term(rng, snap, refs) for _ in range(rng.randrange(4))]

    where: Optional[object]
    if use_or:
        # a disjunction of two conjunctions, each parenthesized
        left = _conjoin(general_terms[:2] or [_filter_term(rng, snap, refs)])
        right = _conjoin(general_terms[2:] or [_filter_term(rng, snap, refs)])
        disjunction = Or(left=Paren(inner=left), right=Paren(inner=right))
        where = _conjoin(_join_conjuncts(rng, refs) + [disjunction])
    else:
        where = _conjoin(_join_conjuncts(rng, refs) + general_terms)

    items: list[SelectItem] = []
    group_by: list[ColumnRef] = []
    n_aliases = 0

    def next_alias(prefix: str) -> str:
        nonlocal n_aliases
        n_aliases += 1
        return f"{prefix}{n_aliases}"

    mode = rng.random()
    if mode < 0.25:
        # pure aggregates, no grouping
        for _ in range(rng.randrange(1, 3)):
            items.append(SelectItem(expr=_random_aggregate(rng, refs), alias=next_alias("agg")))
    elif mode < 0.4 and any(r.name == "patient" for r in refs):
        # age-bracket grouping over the patient table
        pref = next(r for r in refs if r.name == "patient")
        bounds = tuple(sorted(rng.sample(range(10, 90), rng.randrange(1, 4))))
        bucket = Bucket(
            arg=AgeYears(
                col=ColumnRef(qualifier=pref.binding_name, name="DOB"),
                ref=Lit(datetime.date(2010, 12, 31)),
            ),
            bounds=bounds,
        )
        alias = next_alias("band")
        items.append(SelectItem(expr=bucket, alias=alias))
        items.append(SelectItem(expr=_random_aggregate(rng, refs), alias=next_alias("agg")))
        group_by.append(ColumnRef(qualifier=None, name=alias))
    else:
        # plain grouped query; group-key-only when no aggregate is added
        for _ in range(rng.randrange(1, 3)):
            ref = rng.choice(refs)
            col = rng.choice(GROUPABLE[ref.name])
            key = ColumnRef(qualifier=ref.binding_name, name=col)
            if any(
                isinstance(i.expr, ColumnRef)
                and i.expr.qualifier == key.qualifier
                and i.expr.name == key.name
                for i in items
            ):
                continue
            alias = next_alias("k") if rng.random() < 0.5 else None
            items.append(SelectItem(expr=key, alias=alias))
            if alias is not None and rng.random() < 0.5:
                group_by.append(ColumnRef(qualifier=None, name=alias))
            else:
                group_by.append(key)
        for _ in range(rng.randrange(0, 3)):
            items.append(SelectItem(expr=_random_aggregate(rng, refs), alias=next_alias("agg")))
        if not items:
            items.append(SelectItem(expr=Aggregate(fn="count", arg=None), alias=next_alias("agg")))
            group_by = []

    order_by = []
    if rng.random() < 0.6:
        orderable = [i.alias for i in items if i.alias is not None]
        rng.shuffle(orderable)
        for alias in orderable[: rng.randrange(1, 3)]:
            order_by.append(OrderKey(name=alias, desc=rng.random() < 0.5))
    limit = rng.randrange(1, 8) if rng.random() < 0.3 else None

    ast = QueryAst(
        select_items=tuple(items),
        from_tables=tuple(refs),
        where=where,  # type: ignore[arg-type]
        group_by=tuple(group_by),
        order_by=tuple(order_by),
        limit=limit,
    )
    return resolve(ast, _schemas())


def _random_aggregate(rng: random.Random, refs: list[TableRef]) -> Aggregate:
    roll = rng.random()
    if roll < 0.4:
        return Aggregate(fn="count", arg=None)
    ref = rng.choice(refs)
    col = rng.choice(SAFE_COLS[ref.name])
    arg = ColumnRef(qualifier=ref.binding_name, name=col)
    return Aggregate(fn="count_distinct" if roll < 0.7 else "count", arg=arg)


def _schemas() -> dict[str, TableSchema]:
    return {
        s.name: s
        for s in (PATIENT_SCHEMA, EXAMINATION_SCHEMA, CLINICAL_DETECTION_SCHEMA, AUX_SCHEMA)
    }


# --- blocked-identifier injection fuzzing -------------------------------------

BLOCKED_COLS = ("Name", "Address", "ZipCode")


def _mixed_case(rng: random.Random, word: str) -> str:
    return "".join(c.upper() if rng.random() < 0.5 else c.lower() for c in word)


def random_blocked_query(rng: random.Random, snap: Snapshot) -> QueryAst:
    """A query that references a blocked patient column somewhere."""
    base = random_valid_query(rng, snap)
    refs = list(base.from_tables)
    patient_ref = next((r for r in refs if r.name == "patient"), None)
    if patient_ref is None:
        patient_ref = TableRef(name="patient", alias=f"p{len(refs)}")
        refs.append(patient_ref)
    blocked = ColumnRef(
        qualifier=patient_ref.binding_name,
        name=_mixed_case(rng, rng.choice(BLOCKED_COLS)),
    )

    items = list(base.select_items)
    group_by = list(base.group_by)
    where = base.where
    position = rng.randrange(4)
    if position == 0:
        items.append(SelectItem(expr=blocked, alias="leak"))
        group_by.append(blocked)
    elif position == 1:
        term = Comparison(lhs=blocked, op="=", rhs=Lit("x"))
        where = term if where is None else And(left=where, right=term)  # type: ignore[arg-type]
    elif position == 2:
        group_by.append(blocked)
    else:
        items.append(SelectItem(expr=Aggregate(fn="count", arg=blocked), alias="leakcount"))

    ast = QueryAst(
        select_items=tuple(items),
        from_tables=tuple(refs),
        where=where,
        group_by=tuple(group_by),
        order_by=base.order_by,
        limit=base.limit,
    )
    return resolve(ast, _schemas())


# --- bind-shape fuzzing --------------------------------------------------------

NASTY_STRINGS = (
    "' OR '1'='1",
    "'; DROP TABLE patient; --",
    "''",
    "'",
    "Germany",
    "x; y",
    "--",
    "plain",
    "O'Brien",
    "",
)


def random_template_and_params(rng: random.Random):
    """(ast with >=1 param, params map) where every raw value parses."""
    while True:
        ast = random_ast(rng)
        names = param_names(ast)
        if names:
            break
    params = {}
    for name in names:
        dtype = rng.choice((DType.INT, DType.STR, DType.DATE, DType.BOOL))
        if dtype is DType.INT:
            raw = str(rng.randrange(10000))
        elif dtype is DType.DATE:
            raw = _rt_date(rng).isoformat()
        elif dtype is DType.BOOL:
            raw = rng.choice(("true", "false", "1", "0"))
        else:
            raw = rng.choice(NASTY_STRINGS)
        params[name] = (dtype, raw)
    # BETWEEN placeholders are always named lo/hi; keep them a same-typed,
    # ordered pair so the bind itself succeeds
    if "lo" in params and "hi" in params:
        dtype = rng.choice((DType.INT, DType.DATE))
        if dtype is DType.INT:
            a, b = sorted((rng.randrange(10000), rng.randrange(10000)))
            raws = (str(a), str(b))
        else:
            d1, d2 = sorted((_rt_date(rng), _rt_date(rng)))
            raws = (d1.isoformat(), d2.isoformat())
        params["lo"] = (dtype, raws[0])
        params["hi"] = (dtype, raws[1])
    return ast, params
