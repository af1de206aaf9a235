"""Fixture state: two roles, two users, five stored queries.

administrator holds every stored query plus the dynamic capability;
organization_a holds the first two queries plus the dynamic capability.
Passwords come from arguments, then AQG_ADMIN_PASSWORD /
AQG_ORG_A_PASSWORD, then development defaults.
"""

from __future__ import annotations

import os
from typing import Any, Optional

from .rbac import hash_password, password_to_json
from .state import DYNAMIC_QUERY_ID, empty_document

DEFAULT_ADMIN_PASSWORD = "admin-password"
DEFAULT_ORG_A_PASSWORD = "org-a-password"

_HEPB_FILTERS = (
    "d1.Patient_ID = d2.Patient_ID"
    " AND d1.Patient_ID = d3.Patient_ID"
    " AND d1.Patient_ID = d4.Patient_ID"
    " AND d1.Test_Name = 'HBsAg' AND d1.Phase = 'baseline' AND d1.Result = 'negative'"
    " AND d2.Test_Name = 'HBsAg' AND d2.Phase = 'second' AND d2.Result = 'negative'"
    " AND d3.Test_Name = 'Anti-HBs' AND d3.Phase = 'baseline' AND d3.Result = 'negative'"
    " AND d4.Test_Name = 'Anti-HBs' AND d4.Phase = 'second' AND d4.Result = 'negative'"
)

SEED_QUERIES: tuple[dict[str, Any], ...] = (
    {
        "id": 1,
        "name": "country_totals",
        "description": "Examination totals per country over a date range.",
        "url_path": "queryone",
        "template": (
            "SELECT Country, COUNT(Report_ID) AS TotalNum"
            " FROM examination, patient"
            " WHERE examination.Patient_ID = patient.PID"
            " AND Endoscopy_Date BETWEEN :start AND :end"
            " GROUP BY Country ORDER BY TotalNum DESC"
        ),
        "params": [
            {"name": "start", "dtype": "date", "required": True},
            {"name": "end", "dtype": "date", "required": True},
        ],
        "enabled": True,
    },
    {
        "id": 2,
        "name": "top_diagnoses",
        "description": "Five most frequent diagnoses among dialysis examinations.",
        "url_path": "querytwo",
        "template": (
            "SELECT Diagnoses_Text, COUNT(*) AS TotalNum"
            " FROM examination WHERE Is_Dialysis = 'true'"
            " GROUP BY Diagnoses_Text ORDER BY TotalNum DESC LIMIT 5"
        ),
        "params": [],
        "enabled": True,
    },
    {
        "id": 3,
        "name": "age_profile",
        "description": "Dialysis patients per age band over a date range.",
        "url_path": "querythree",
        "template": (
            "SELECT BUCKET(AGE_YEARS(DOB, :ref), 18, 40, 60) AS AgeBand,"
            " COUNT(DISTINCT patient.PID) AS Patients"
            " FROM patient, examination"
            " WHERE examination.Patient_ID = patient.PID"
            " AND Is_Dialysis = 'true'"
            " AND Endoscopy_Date BETWEEN :start AND :end"
            " GROUP BY AgeBand"
        ),
        "params": [
            {"name": "ref", "dtype": "date", "required": True},
            {"name": "start", "dtype": "date", "required": True},
            {"name": "end", "dtype": "date", "required": True},
        ],
        "enabled": True,
    },
    {
        "id": 4,
        "name": "hepb_all_negative",
        "description": "Patients negative on all four hepatitis B panel tests.",
        "url_path": "queryfour",
        "template": (
            "SELECT COUNT(DISTINCT d1.Patient_ID) AS NegativePatients"
            " FROM clinicaldetection d1, clinicaldetection d2,"
            " clinicaldetection d3, clinicaldetection d4"
            f" WHERE {_HEPB_FILTERS}"
        ),
        "params": [],
        "enabled": True,
    },
    {
        "id": 5,
        "name": "hepb_all_negative_by_gender",
        "description": "All-negative hepatitis B panels split by gender.",
        "url_path": "queryfive",
        "template": (
            "SELECT Gender, COUNT(DISTINCT d1.Patient_ID) AS NegativePatients"
            " FROM clinicaldetection d1, clinicaldetection d2,"
            " clinicaldetection d3, clinicaldetection d4, patient"
            f" WHERE {_HEPB_FILTERS}"
            " AND d1.Patient_ID = patient.PID"
            " GROUP BY Gender ORDER BY Gender"
        ),
        "params": [],
        "enabled": True,
    },
)

ADMIN_QUERY_IDS = (1, 2, 3, 4, 5)
ORG_A_QUERY_IDS = (1, 2)


def seed_document(
    admin_password: Optional[str] = None,
    org_a_password: Optional[str] = None,
) -> dict[str, Any]:
    admin_password = (
        admin_password
        or os.environ.get("AQG_ADMIN_PASSWORD")
        or DEFAULT_ADMIN_PASSWORD
    )
    org_a_password = (
        org_a_password
        or os.environ.get("AQG_ORG_A_PASSWORD")
        or DEFAULT_ORG_A_PASSWORD
    )
    doc = empty_document()
    doc["roles"] = [
        {"id": 1, "name": "administrator"},
        {"id": 2, "name": "organization_a"},
    ]
    doc["users"] = [
        {
            "id": 1,
            "username": "admin",
            "password": password_to_json(hash_password(admin_password)),
            "roles": [1],
        },
        {
            "id": 2,
            "username": "org_a_user",
            "password": password_to_json(hash_password(org_a_password)),
            "roles": [2],
        },
    ]
    doc["queries"] = [dict(q) for q in SEED_QUERIES]
    doc["grants"] = (
        [{"role": 1, "query": qid} for qid in ADMIN_QUERY_IDS]
        + [{"role": 1, "query": DYNAMIC_QUERY_ID}]
        + [{"role": 2, "query": qid} for qid in ORG_A_QUERY_IDS]
        + [{"role": 2, "query": DYNAMIC_QUERY_ID}]
    )
    doc["next_ids"] = {"user": 3, "role": 3, "query": 6}
    return doc
