"""Typed in-memory relational tables with CSV persistence.

Tables are loaded from RFC 4180 CSV files (UTF-8, mandatory header row,
one file per table named ``<table>.csv``) and assembled into immutable
snapshots. A snapshot is never mutated after construction: rows are
tuples, tables are frozen dataclasses, and the table map is a read-only
mapping, so snapshots are safe to share across concurrent readers.
"""

from __future__ import annotations

import csv
import itertools
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Union

from .values import DType, Scalar, ValueParseError, parse_scalar, render_scalar, scalar_matches

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

Row = tuple[Scalar, ...]


class RelstoreError(Exception):
    """Base error for table loading and snapshot assembly."""


class SchemaError(RelstoreError):
    """Invalid schema definition."""


class CsvFormatError(RelstoreError):
    """CSV file does not match the declared schema."""


class IntegrityError(RelstoreError):
    """Referential-integrity or key violation at snapshot assembly."""


@dataclass(frozen=True)
class ColumnDef:
    name: str
    dtype: DType
    enum_values: Optional[tuple[str, ...]] = None
    nullable: bool = False

    def __post_init__(self) -> None:
        if not _IDENT_RE.match(self.name):
            raise SchemaError(f"invalid column name {self.name!r}")
        if self.dtype is DType.ENUM:
            if not self.enum_values:
                raise SchemaError(f"enum column {self.name!r} has no values")
            if len(set(self.enum_values)) != len(self.enum_values):
                raise SchemaError(f"enum column {self.name!r} has duplicate values")
        elif self.enum_values is not None:
            raise SchemaError(f"column {self.name!r}: enum_values on non-enum column")


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: str
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self) -> None:
        if not _IDENT_RE.match(self.name):
            raise SchemaError(f"invalid table name {self.name!r}")
        lowered = [c.name.lower() for c in self.columns]
        if len(set(lowered)) != len(lowered):
            raise SchemaError(f"table {self.name!r} has duplicate column names")
        names = set(lowered)
        if self.primary_key.lower() not in names:
            raise SchemaError(f"table {self.name!r}: primary key {self.primary_key!r} not a column")
        for fk in self.foreign_keys:
            if fk.column.lower() not in names:
                raise SchemaError(f"table {self.name!r}: FK column {fk.column!r} not a column")

    def column_index(self, name: str) -> int:
        lowered = name.lower()
        for i, col in enumerate(self.columns):
            if col.name.lower() == lowered:
                return i
        raise KeyError(name)

    def column(self, name: str) -> ColumnDef:
        return self.columns[self.column_index(name)]


@dataclass(frozen=True)
class Table:
    schema: TableSchema
    rows: tuple[Row, ...]


@dataclass(frozen=True)
class Snapshot:
    tables: Mapping[str, Table]
    version: int

    def table(self, name: str) -> Table:
        """Case-insensitive table lookup."""
        try:
            return self.tables[name.lower()]
        except KeyError:
            raise KeyError(f"no table named {name!r}") from None

    def schemas(self) -> dict[str, TableSchema]:
        return {name: t.schema for name, t in self.tables.items()}


_version_lock = threading.Lock()
_version_counter = itertools.count(1)


def _next_version() -> int:
    with _version_lock:
        return next(_version_counter)


def load_csv(path: Union[str, Path], schema: TableSchema) -> tuple[Row, ...]:
    """Load one table's rows from a CSV file.

    The header must name exactly the schema's columns in order. Parse
    failures report the 1-based line number and the column name.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file (header row required)") from None
        expected = [c.name for c in schema.columns]
        if header != expected:
            raise CsvFormatError(
                f"{path}: header mismatch: got {header!r}, expected {expected!r}"
            )
        rows: list[Row] = []
        for lineno, record in enumerate(reader, start=2):
            if len(record) != len(schema.columns):
                raise CsvFormatError(
                    f"{path}:{lineno}: expected {len(schema.columns)} fields, got {len(record)}"
                )
            parsed: list[Scalar] = []
            for col, text in zip(schema.columns, record):
                try:
                    parsed.append(
                        parse_scalar(
                            text,
                            col.dtype,
                            enum_values=col.enum_values,
                            nullable=col.nullable,
                        )
                    )
                except ValueParseError as exc:
                    raise CsvFormatError(
                        f"{path}:{lineno}: column {col.name!r}: {exc}"
                    ) from None
            rows.append(tuple(parsed))
    return tuple(rows)


def save_csv(schema: TableSchema, rows: Iterable[Row], path: Union[str, Path]) -> None:
    """Write header + rows, RFC 4180 quoting, dates zero-padded.

    Output is deterministic, so identical inputs produce byte-identical
    files.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in schema.columns])
        for row in rows:
            writer.writerow([render_scalar(v) for v in row])


def build_snapshot(
    tables: Sequence[Union[Table, tuple[TableSchema, Sequence[Row]]]],
    *,
    version: Optional[int] = None,
) -> Snapshot:
    """Assemble loaded tables into an immutable snapshot.

    Verifies row shape and types against each schema, primary-key
    uniqueness, and that every foreign-key value exists as a primary key
    in the referenced table.
    """
    normalized: dict[str, Table] = {}
    for entry in tables:
        table = entry if isinstance(entry, Table) else Table(entry[0], tuple(tuple(r) for r in entry[1]))
        key = table.schema.name.lower()
        if key in normalized:
            raise IntegrityError(f"duplicate table {table.schema.name!r}")
        normalized[key] = table

    pk_values: dict[str, set[Scalar]] = {}
    for key, table in normalized.items():
        schema = table.schema
        pk_idx = schema.column_index(schema.primary_key)
        seen: set[Scalar] = set()
        for row in table.rows:
            if len(row) != len(schema.columns):
                raise IntegrityError(
                    f"table {schema.name!r}: row has {len(row)} values, expected {len(schema.columns)}"
                )
            for col, value in zip(schema.columns, row):
                if value is None:
                    if not col.nullable:
                        raise IntegrityError(
                            f"table {schema.name!r}: NULL in non-nullable column {col.name!r}"
                        )
                    continue
                if not scalar_matches(value, col.dtype):
                    raise IntegrityError(
                        f"table {schema.name!r}: column {col.name!r}: "
                        f"value {value!r} does not match {col.dtype.value}"
                    )
                if col.dtype is DType.ENUM and value not in (col.enum_values or ()):
                    raise IntegrityError(
                        f"table {schema.name!r}: column {col.name!r}: "
                        f"value {value!r} not in enum"
                    )
            pk = row[pk_idx]
            if pk in seen:
                raise IntegrityError(
                    f"table {schema.name!r}: duplicate primary key {pk!r}"
                )
            seen.add(pk)
        pk_values[key] = seen

    for key, table in normalized.items():
        schema = table.schema
        for fk in schema.foreign_keys:
            ref_key = fk.ref_table.lower()
            if ref_key not in normalized:
                raise IntegrityError(
                    f"table {schema.name!r}: FK references missing table {fk.ref_table!r}"
                )
            ref_pk = normalized[ref_key].schema.primary_key
            if ref_pk.lower() != fk.ref_column.lower():
                raise IntegrityError(
                    f"table {schema.name!r}: FK must reference the primary key of {fk.ref_table!r}"
                )
            fk_idx = schema.column_index(fk.column)
            pk_idx = normalized[key].schema.column_index(schema.primary_key)
            targets = pk_values[ref_key]
            for row in table.rows:
                value = row[fk_idx]
                if value is None:
                    continue
                if value not in targets:
                    raise IntegrityError(
                        f"table {schema.name!r}: row {row[pk_idx]!r}: "
                        f"dangling FK {fk.column}={value!r} (no {fk.ref_table}.{fk.ref_column})"
                    )

    return Snapshot(
        tables=MappingProxyType(dict(normalized)),
        version=_next_version() if version is None else version,
    )


# --- fixed clinical schema -------------------------------------------------
# The dataset has three tables; the patient id is carried as a foreign key
# in the examination and detection tables.

PATIENT_SCHEMA = TableSchema(
    name="patient",
    columns=(
        ColumnDef("PID", DType.INT),
        ColumnDef("Name", DType.STR),
        ColumnDef("Gender", DType.ENUM, ("M", "F")),
        ColumnDef("DOB", DType.DATE),
        ColumnDef("Country", DType.STR),
        ColumnDef("Address", DType.STR),
        ColumnDef("ZipCode", DType.STR),
    ),
    primary_key="PID",
)

EXAMINATION_SCHEMA = TableSchema(
    name="examination",
    columns=(
        ColumnDef("Report_ID", DType.INT),
        ColumnDef("Patient_ID", DType.INT),
        ColumnDef("Endoscopy_Date", DType.DATE),
        ColumnDef("Is_Dialysis", DType.BOOL),
        ColumnDef("Diagnoses_Text", DType.STR),
    ),
    primary_key="Report_ID",
    foreign_keys=(ForeignKey("Patient_ID", "patient", "PID"),),
)

CLINICAL_DETECTION_SCHEMA = TableSchema(
    name="clinicaldetection",
    columns=(
        ColumnDef("Detection_ID", DType.INT),
        ColumnDef("Patient_ID", DType.INT),
        ColumnDef("Test_Name", DType.ENUM, ("HBsAg", "Anti-HBs")),
        ColumnDef("Phase", DType.ENUM, ("baseline", "second")),
        ColumnDef("Result", DType.ENUM, ("negative", "positive")),
        ColumnDef("Detection_Date", DType.DATE),
    ),
    primary_key="Detection_ID",
    foreign_keys=(ForeignKey("Patient_ID", "patient", "PID"),),
)

DATASET_SCHEMAS: tuple[TableSchema, ...] = (
    PATIENT_SCHEMA,
    EXAMINATION_SCHEMA,
    CLINICAL_DETECTION_SCHEMA,
)


def load_dataset(data_dir: Union[str, Path]) -> Snapshot:
    """Load ``<table>.csv`` for each dataset table and build a snapshot."""
    data_dir = Path(data_dir)
    tables = []
    for schema in DATASET_SCHEMAS:
        path = data_dir / f"{schema.name}.csv"
        if not path.exists():
            raise CsvFormatError(f"missing table file: {path}")
        tables.append(Table(schema, load_csv(path, schema)))
    return build_snapshot(tables)
