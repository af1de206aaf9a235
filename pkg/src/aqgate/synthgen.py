"""Deterministic synthetic clinical dataset generator.

Everything is derived from one splitmix64 stream, so a (seed, config)
pair maps to exactly one dataset and repeated runs write byte-identical
CSV files. Row counts come straight from the config; referential
integrity holds by construction because foreign keys are drawn from the
generated patient ids.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

from .relstore import (
    CLINICAL_DETECTION_SCHEMA,
    EXAMINATION_SCHEMA,
    PATIENT_SCHEMA,
    Row,
    Snapshot,
    Table,
    build_snapshot,
    save_csv,
)

_MASK64 = (1 << 64) - 1


class GenConfigError(ValueError):
    """Generator configuration is unusable."""


class SplitMix64:
    """splitmix64 PRNG: a pure function of its 64-bit state."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, no modulo bias."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % n

    def coin(self) -> bool:
        return self.below(2) == 1

    def chance(self, pct: int) -> bool:
        """True with probability pct/100."""
        return self.below(100) < pct

    def choice(self, seq: Sequence):
        return seq[self.below(len(seq))]

    def date_in(self, start: datetime.date, end: datetime.date) -> datetime.date:
        span = (end - start).days + 1
        return start + datetime.timedelta(days=self.below(span))

    def sample_ints(self, upper: int, k: int) -> list[int]:
        """k distinct integers from 1..upper, partial Fisher-Yates."""
        pool = list(range(1, upper + 1))
        for i in range(k):
            j = i + self.below(upper - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


NAME_POOL = (
    "Alex", "Blair", "Casey", "Devon", "Emery", "Finley",
    "Harper", "Jordan", "Morgan", "Quinn", "Riley", "Sage",
)

COUNTRY_POOL = (
    "New Zealand", "Australia", "China", "India", "United Kingdom",
    "Samoa", "Fiji", "South Africa",
)

STREET_POOL = (
    "Queen Street", "Dominion Road", "High Street", "Victoria Avenue",
    "Great North Road", "Station Road",
)

DIAGNOSES_POOL = (
    "Colon: Primary malignant tumor, Quiescent Crohn's disease",
    "Esophagus: Normal, Ectopic gastric mucosa",
    "Esophagus: Reflux esophagitis",
    "Esophagus: Varices certain",
    "Esophagus:Barrett's esophagus",
)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 42
    n_patients: int = 1881
    n_examinations: int = 2020
    n_detections: int = 6393
    date_window: tuple[datetime.date, datetime.date] = (
        datetime.date(2009, 1, 1),
        datetime.date(2011, 12, 31),
    )
    dob_window: tuple[datetime.date, datetime.date] = (
        datetime.date(1920, 1, 1),
        datetime.date(2005, 12, 31),
    )
    fully_negative_pct: int = 20
    names: tuple[str, ...] = NAME_POOL
    countries: tuple[str, ...] = COUNTRY_POOL
    streets: tuple[str, ...] = STREET_POOL
    diagnoses: tuple[str, ...] = DIAGNOSES_POOL

    def __post_init__(self) -> None:
        for label, count in (
            ("n_patients", self.n_patients),
            ("n_examinations", self.n_examinations),
            ("n_detections", self.n_detections),
        ):
            if count < 0:
                raise GenConfigError(f"{label} must be >= 0")
        if self.n_patients == 0 and (self.n_examinations > 0 or self.n_detections > 0):
            raise GenConfigError("no patients to reference: set n_patients > 0")
        for label, (start, end) in (
            ("date_window", self.date_window),
            ("dob_window", self.dob_window),
        ):
            if start > end:
                raise GenConfigError(f"{label} start is after end")
        if not 0 <= self.fully_negative_pct <= 100:
            raise GenConfigError("fully_negative_pct must be 0..100")
        for label, pool in (
            ("names", self.names),
            ("countries", self.countries),
            ("streets", self.streets),
            ("diagnoses", self.diagnoses),
        ):
            if not pool:
                raise GenConfigError(f"value pool {label!r} is empty")


def generate_dataset(cfg: GenConfig) -> tuple[tuple[Row, ...], tuple[Row, ...], tuple[Row, ...]]:
    """Generate (patient, examination, clinicaldetection) row tuples."""
    rng = SplitMix64(cfg.seed)

    patients: list[Row] = []
    for pid in range(1, cfg.n_patients + 1):
        name = f"{rng.choice(cfg.names)} {rng.choice(cfg.names)}"
        gender = "F" if rng.coin() else "M"
        dob = rng.date_in(*cfg.dob_window)
        country = rng.choice(cfg.countries)
        address = f"{1 + rng.below(400)} {rng.choice(cfg.streets)}"
        zipcode = f"{1000 + rng.below(9000)}"
        patients.append((pid, name, gender, dob, country, address, zipcode))

    examinations: list[Row] = []
    for report_id in range(1, cfg.n_examinations + 1):
        examinations.append(
            (
                report_id,
                1 + rng.below(cfg.n_patients),
                rng.date_in(*cfg.date_window),
                rng.coin(),
                rng.choice(cfg.diagnoses),
            )
        )

    # Hepatitis-B panels: four rows per selected patient, one per
    # (Test_Name, Phase) pair, sharing a baseline date <= second date.
    # Leftover rows (n_detections mod 4, or when patients run out) are
    # independent single draws.
    detections: list[Row] = []
    n_panels = min(cfg.n_detections // 4, cfg.n_patients)
    panel_pids = sorted(rng.sample_ints(cfg.n_patients, n_panels))
    detection_id = 1
    for pid in panel_pids:
        d1 = rng.date_in(*cfg.date_window)
        d2 = rng.date_in(*cfg.date_window)
        baseline_date, second_date = min(d1, d2), max(d1, d2)
        if rng.chance(cfg.fully_negative_pct):
            results = ["negative"] * 4
        else:
            results = ["positive" if rng.coin() else "negative" for _ in range(4)]
            if "positive" not in results:
                results[rng.below(4)] = "positive"
        for i, (test, phase) in enumerate(
            (
                ("HBsAg", "baseline"),
                ("HBsAg", "second"),
                ("Anti-HBs", "baseline"),
                ("Anti-HBs", "second"),
            )
        ):
            date = baseline_date if phase == "baseline" else second_date
            detections.append((detection_id, pid, test, phase, results[i], date))
            detection_id += 1
    while detection_id <= cfg.n_detections:
        detections.append(
            (
                detection_id,
                1 + rng.below(cfg.n_patients),
                rng.choice(("HBsAg", "Anti-HBs")),
                rng.choice(("baseline", "second")),
                rng.choice(("negative", "positive")),
                rng.date_in(*cfg.date_window),
            )
        )
        detection_id += 1

    return tuple(patients), tuple(examinations), tuple(detections)


def generate_snapshot(cfg: GenConfig) -> Snapshot:
    patients, examinations, detections = generate_dataset(cfg)
    return build_snapshot(
        [
            Table(PATIENT_SCHEMA, patients),
            Table(EXAMINATION_SCHEMA, examinations),
            Table(CLINICAL_DETECTION_SCHEMA, detections),
        ]
    )


def write_dataset(cfg: GenConfig, out_dir: Union[str, Path]) -> dict[str, int]:
    """Generate and write the three CSV files; return row counts by table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    patients, examinations, detections = generate_dataset(cfg)
    save_csv(PATIENT_SCHEMA, patients, out_dir / "patient.csv")
    save_csv(EXAMINATION_SCHEMA, examinations, out_dir / "examination.csv")
    save_csv(CLINICAL_DETECTION_SCHEMA, detections, out_dir / "clinicaldetection.csv")
    return {
        "clinicaldetection": len(detections),
        "examination": len(examinations),
        "patient": len(patients),
    }


def summary_lines(counts: dict[str, int]) -> list[str]:
    """Per-table row counts plus their sum, one line each."""
    lines = [f"{name} {counts[name]}" for name in sorted(counts)]
    lines.append(f"sum {sum(counts.values())}")
    return lines
