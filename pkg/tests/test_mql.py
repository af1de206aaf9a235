"""Tests for the query language: lexer, parser, render, binding."""

from __future__ import annotations

import datetime
import random

import pytest

from aqgate.mql import (
    Aggregate,
    AgeYears,
    And,
    Between,
    BindError,
    Bucket,
    ColumnRef,
    Comparison,
    Lit,
    OrderKey,
    Paren,
    Param,
    ParseError,
    ResolveError,
    bind_params,
    infer_param_types,
    param_names,
    parse,
    render,
    resolve,
    tokenize,
)
from aqgate.relstore import DATASET_SCHEMAS
from aqgate.values import DType

from fuzzers import random_ast, random_template_and_params

SCHEMAS = {s.name: s for s in DATASET_SCHEMAS}

# the running example throughout: country totals over a date range
COUNTRY_TOTALS = (
    "select Country, COUNT(Report_ID) AS TotalNum "
    "FROM examination, patient "
    "WHERE examination.Patient_ID = patient.PID "
    "AND Endoscopy_Date BETWEEN '2010-1-1' AND '2010-12-30' "
    "GROUP BY Country Order By TotalNum desc"
)


# --- tokenizer ----------------------------------------------------------------


def test_tokenize_kinds():
    toks = tokenize("COUNT(Report_ID ) AS TotalNum")
    assert [t.kind for t in toks] == [
        "keyword", "symbol", "identifier", "symbol", "keyword", "identifier",
    ]
    assert toks[0].text == "COUNT"
    assert toks[2].text == "Report_ID"


def test_tokenize_parameter():
    toks = tokenize(":country")
    assert len(toks) == 1
    assert toks[0].kind == "parameter"
    assert toks[0].text == ":country"


def test_tokenize_unterminated_string():
    with pytest.raises(ParseError) as exc:
        tokenize("'unterminated")
    assert exc.value.offset == 0


def test_tokenize_illegal_characters_with_offset():
    for text, bad_offset in (("a;b", 1), ("x --", 2), ("aé", 1)):
        with pytest.raises(ParseError) as exc:
            tokenize(text)
        assert exc.value.offset == bad_offset


def test_tokenize_string_escapes():
    toks = tokenize("'it''s'")
    assert toks[0].kind == "string"
    assert toks[0].text == "'it''s'"


def test_tokenize_hyphen_legal_only_inside_strings():
    toks = tokenize("'Anti-HBs'")
    assert toks[0].kind == "string"
    with pytest.raises(ParseError):
        tokenize("Anti-HBs")


def test_tokens_reconstruct_input():
    text = "SELECT Country , COUNT( * ) FROM patient  WHERE x = 'a''b'"
    toks = tokenize(text)
    buf = [" "] * len(text)
    for tok in toks:
        buf[tok.offset : tok.offset + len(tok.text)] = tok.text
    assert "".join(buf) == text
    offsets = [t.offset for t in toks]
    assert offsets == sorted(offsets)


# --- parser -------------------------------------------------------------------


def test_parse_country_totals_structure():
    ast = parse(COUNTRY_TOTALS)
    assert len(ast.select_items) == 2
    assert ast.select_items[0].expr == ColumnRef(None, "Country")
    assert ast.select_items[1].expr == Aggregate("count", ColumnRef(None, "Report_ID"))
    assert ast.select_items[1].alias == "TotalNum"
    assert [t.name for t in ast.from_tables] == ["examination", "patient"]
    assert isinstance(ast.where, And)
    join = ast.where.left
    assert join == Comparison(
        ColumnRef("examination", "Patient_ID"), "=", ColumnRef("patient", "PID")
    )
    rng = ast.where.right
    assert rng == Between(
        ColumnRef(None, "Endoscopy_Date"),
        Lit(datetime.date(2010, 1, 1)),
        Lit(datetime.date(2010, 12, 30)),
    )
    assert ast.group_by == (ColumnRef(None, "Country"),)
    assert ast.order_by == (OrderKey("TotalNum", desc=True),)
    assert ast.limit is None


def test_parse_count_star():
    ast = parse("SELECT COUNT(*) FROM patient")
    assert ast.select_items[0].expr == Aggregate("count", None)
    assert ast.group_by == ()


def test_parse_rejects_non_select():
    with pytest.raises(ParseError):
        parse("INSERT INTO patient VALUES (1)")
    with pytest.raises(ParseError):
        parse("UPDATE patient SET x = 1")


def test_parse_rejects_bare_star():
    with pytest.raises(ParseError):
        parse("SELECT * FROM patient")


def test_parse_count_distinct():
    ast = parse("SELECT COUNT(DISTINCT Patient_ID) FROM examination")
    assert ast.select_items[0].expr == Aggregate("count_distinct", ColumnRef(None, "Patient_ID"))


def test_parse_limit():
    assert parse("SELECT COUNT(*) FROM t LIMIT 5").limit == 5
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t LIMIT 0")
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t LIMIT x")


def test_parse_between_literal_sanity():
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t WHERE d BETWEEN '2010-12-30' AND '2010-1-1'")
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t WHERE d BETWEEN 1 AND 'x'")


def test_parse_invalid_date_literal():
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t WHERE d = '2010-13-01'")


def test_parse_duplicate_aliases_rejected():
    with pytest.raises(ParseError):
        parse("SELECT a AS x, b AS X FROM t")
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM t u, t2 U")


def test_parse_bucket_boundaries():
    ast = parse("SELECT BUCKET(AGE_YEARS(DOB, '2010-12-31'), 18, 40, 60) AS b FROM patient")
    expr = ast.select_items[0].expr
    assert isinstance(expr, Bucket)
    assert expr.bounds == (18, 40, 60)
    assert isinstance(expr.arg, AgeYears)
    with pytest.raises(ParseError):
        parse("SELECT BUCKET(x, 40, 18) FROM t")
    with pytest.raises(ParseError):
        parse("SELECT BUCKET(x, 18, 18) FROM t")
    with pytest.raises(ParseError):
        parse("SELECT BUCKET(x) FROM t")
    with pytest.raises(ParseError):
        parse("SELECT BUCKET(BUCKET(x, 1), 2) FROM t")


def test_parse_age_years_needs_date():
    with pytest.raises(ParseError):
        parse("SELECT AGE_YEARS(DOB, 'hello') FROM patient")
    ast = parse("SELECT AGE_YEARS(DOB, :ref) FROM patient")
    expr = ast.select_items[0].expr
    assert isinstance(expr, AgeYears) and expr.ref == Param("ref")


def test_parse_parameter_cannot_take_table_position():
    with pytest.raises(ParseError):
        parse("SELECT COUNT(*) FROM :tbl")
    with pytest.raises(ParseError):
        parse("SELECT :col FROM patient")


def test_parse_error_offset_points_at_problem():
    text = "SELECT COUNT(*) FROM"
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert exc.value.offset == len(text)


def test_parse_keywords_case_insensitive():
    ast = parse("select count(*) from patient group by Gender order by Gender asc limit 3")
    assert ast.limit == 3
    assert ast.order_by[0].desc is False


# --- render -------------------------------------------------------------------


def test_render_canonical_form():
    ast = parse(COUNTRY_TOTALS)
    text = render(ast)
    assert text == (
        "SELECT Country, COUNT(Report_ID) AS TotalNum "
        "FROM examination, patient "
        "WHERE examination.Patient_ID = patient.PID "
        "AND Endoscopy_Date BETWEEN '2010-01-01' AND '2010-12-30' "
        "GROUP BY Country ORDER BY TotalNum DESC"
    )


def test_render_normalizes_dates():
    ast = parse("SELECT COUNT(*) FROM t WHERE d = '2010-1-1'")
    assert "'2010-01-01'" in render(ast)


def test_render_escapes_strings():
    ast = parse("SELECT COUNT(*) FROM t WHERE s = 'it''s'")
    assert "'it''s'" in render(ast)


def test_render_parse_identity_on_example():
    ast = parse(COUNTRY_TOTALS)
    assert parse(render(ast)) == ast


def test_round_trip_fuzzed_asts():
    rng = random.Random(1234)
    for i in range(300):
        ast = random_ast(rng)
        text = render(ast)
        again = parse(text)
        assert again == ast, f"case {i}: {text}"
        # render is a fixed point
        assert render(again) == text


# --- resolution ---------------------------------------------------------------


def test_resolve_fills_sources():
    ast = parse(COUNTRY_TOTALS, SCHEMAS)
    country = ast.select_items[0].expr
    assert isinstance(country, ColumnRef)
    assert country.source == 1  # patient is the second FROM table
    assert country.column == "Country"


def test_resolve_is_case_insensitive():
    ast = parse("SELECT gender FROM PATIENT GROUP BY GENDER", SCHEMAS)
    expr = ast.select_items[0].expr
    assert isinstance(expr, ColumnRef)
    assert expr.column == "Gender"


def test_resolve_unknown_names():
    with pytest.raises(ResolveError):
        parse("SELECT COUNT(*) FROM nosuch", SCHEMAS)
    with pytest.raises(ResolveError):
        parse("SELECT Nope FROM patient", SCHEMAS)
    with pytest.raises(ResolveError):
        parse("SELECT bogus.PID FROM patient", SCHEMAS)


def test_resolve_ambiguous_column():
    with pytest.raises(ResolveError) as exc:
        parse(
            "SELECT COUNT(*) FROM examination, clinicaldetection WHERE Patient_ID = 5",
            SCHEMAS,
        )
    assert "ambiguous" in str(exc.value)


def test_resolve_self_join_aliases():
    ast = parse(
        "SELECT COUNT(DISTINCT d1.Patient_ID) FROM clinicaldetection d1, clinicaldetection d2 "
        "WHERE d1.Patient_ID = d2.Patient_ID",
        SCHEMAS,
    )
    agg = ast.select_items[0].expr
    assert isinstance(agg, Aggregate) and agg.arg is not None
    assert agg.arg.source == 0


def test_resolve_order_by_must_name_output():
    with pytest.raises(ResolveError):
        parse("SELECT Gender FROM patient GROUP BY Gender ORDER BY Country", SCHEMAS)
    ast = parse(
        "SELECT Gender, COUNT(*) AS n FROM patient GROUP BY Gender ORDER BY n DESC",
        SCHEMAS,
    )
    assert ast.order_by[0].item == 1


def test_resolve_group_by_alias():
    ast = parse(
        "SELECT BUCKET(AGE_YEARS(DOB, '2010-12-31'), 18, 40, 60) AS Band, COUNT(*) "
        "FROM patient GROUP BY Band",
        SCHEMAS,
    )
    assert ast.group_by[0].item == 0


def test_resolve_group_by_aggregate_alias_rejected():
    with pytest.raises(ResolveError):
        parse("SELECT COUNT(*) AS n FROM patient GROUP BY n", SCHEMAS)


def test_resolve_bool_literal_coercion():
    ast = parse("SELECT COUNT(*) FROM examination WHERE Is_Dialysis = 'true'", SCHEMAS)
    comp = ast.where
    assert isinstance(comp, Comparison)
    assert comp.rhs == Lit(True)
    with pytest.raises(ResolveError):
        parse("SELECT COUNT(*) FROM examination WHERE Is_Dialysis = 'maybe'", SCHEMAS)


def test_resolve_type_mismatches():
    with pytest.raises(ResolveError):
        parse("SELECT COUNT(*) FROM patient WHERE Country = 42", SCHEMAS)
    with pytest.raises(ResolveError):
        parse("SELECT COUNT(*) FROM examination WHERE Endoscopy_Date = 'hello'", SCHEMAS)
    with pytest.raises(ResolveError):
        parse(
            "SELECT COUNT(*) FROM examination, patient WHERE Endoscopy_Date = patient.PID",
            SCHEMAS,
        )
    # enum-to-enum comparison is allowed
    parse(
        "SELECT COUNT(*) FROM clinicaldetection WHERE Test_Name = Phase", SCHEMAS
    )


def test_resolve_age_years_needs_date_column():
    with pytest.raises(ResolveError):
        parse("SELECT AGE_YEARS(PID, '2010-01-01') FROM patient", SCHEMAS)


def test_resolve_bucket_needs_int():
    with pytest.raises(ResolveError):
        parse("SELECT BUCKET(Country, 5) FROM patient", SCHEMAS)
    parse("SELECT BUCKET(PID, 5) FROM patient", SCHEMAS)


# --- parameter binding ----------------------------------------------------------


def test_bind_substitutes_values_only():
    ast = parse(
        "SELECT Country, COUNT(*) AS n FROM examination, patient "
        "WHERE examination.Patient_ID = patient.PID "
        "AND Endoscopy_Date BETWEEN :start AND :end GROUP BY Country",
        SCHEMAS,
    )
    bound = bind_params(
        ast, {"start": (DType.DATE, "2010-1-1"), "end": (DType.DATE, "2010-12-30")}
    )
    assert param_names(bound.ast) == []
    between = bound.ast.where.right  # type: ignore[union-attr]
    assert between.lo == Lit(datetime.date(2010, 1, 1))
    assert between.hi == Lit(datetime.date(2010, 12, 30))
    assert bound.param_log == (
        ("start", datetime.date(2010, 1, 1)),
        ("end", datetime.date(2010, 12, 30)),
    )
    # the template itself is untouched
    assert param_names(ast) == ["start", "end"]


def test_bind_missing_and_extra():
    ast = parse("SELECT COUNT(*) FROM patient WHERE Country = :c", SCHEMAS)
    with pytest.raises(BindError) as exc:
        bind_params(ast, {})
    assert ":c" in str(exc.value)
    with pytest.raises(BindError) as exc:
        bind_params(ast, {"c": (DType.STR, "x"), "d": (DType.STR, "y")})
    assert ":d" in str(exc.value)


def test_bind_type_parse_failure():
    ast = parse("SELECT COUNT(*) FROM patient WHERE DOB = :d", SCHEMAS)
    with pytest.raises(BindError):
        bind_params(ast, {"d": (DType.DATE, "2010-13-01")})
    with pytest.raises(BindError):
        bind_params(ast, {"d": (DType.DATE, "' OR '1'='1")})


def test_bind_between_bounds_checked_after_substitution():
    ast = parse("SELECT COUNT(*) FROM patient WHERE DOB BETWEEN :a AND :b", SCHEMAS)
    with pytest.raises(BindError):
        bind_params(ast, {"a": (DType.DATE, "2011-01-01"), "b": (DType.DATE, "2010-01-01")})


def test_bind_shapes_fuzzed():
    rng = random.Random(777)
    for _ in range(200):
        ast, params = random_template_and_params(rng)
        bound = bind_params(ast, params)
        assert_same_shape(ast, bound.ast)


def assert_same_shape(template, bound) -> None:
    """Trees must be identical except Param -> Lit substitutions."""
    if isinstance(template, Param):
        assert isinstance(bound, Lit)
        return
    assert type(template) is type(bound)
    if isinstance(template, (tuple, list)):
        assert len(template) == len(bound)
        for a, b in zip(template, bound):
            assert_same_shape(a, b)
        return
    if hasattr(template, "__dataclass_fields__"):
        for name in template.__dataclass_fields__:
            assert_same_shape(getattr(template, name), getattr(bound, name))
        return
    assert template == bound


# --- type inference -------------------------------------------------------------


def test_infer_param_types_from_context():
    ast = parse(
        "SELECT Country, COUNT(*) AS n FROM examination, patient "
        "WHERE examination.Patient_ID = patient.PID AND Country = :country "
        "AND Endoscopy_Date BETWEEN :start AND :end AND Is_Dialysis = :flag "
        "GROUP BY Country",
        SCHEMAS,
    )
    inferred = infer_param_types(ast, SCHEMAS)
    assert inferred == {
        "country": DType.STR,
        "start": DType.DATE,
        "end": DType.DATE,
        "flag": DType.BOOL,
    }


def test_infer_enum_context_binds_as_str():
    ast = parse("SELECT COUNT(*) FROM clinicaldetection WHERE Result = :r", SCHEMAS)
    assert infer_param_types(ast, SCHEMAS) == {"r": DType.STR}


def test_infer_age_years_ref_is_date():
    ast = parse(
        "SELECT BUCKET(AGE_YEARS(DOB, :ref), 18) AS b, COUNT(*) FROM patient GROUP BY b",
        SCHEMAS,
    )
    assert infer_param_types(ast, SCHEMAS) == {"ref": DType.DATE}


def test_infer_conflicting_uses_rejected():
    ast = parse(
        "SELECT COUNT(*) FROM patient WHERE PID = :x AND Country = :x", SCHEMAS
    )
    with pytest.raises(ResolveError):
        infer_param_types(ast, SCHEMAS)
