"""Shipped query corpus, organisation schema and sample data."""

from __future__ import annotations

from importlib import resources

#: name -> file stem, in reporting order
QUERIES = {
    "Q1": "q1",
    "Q2": "q2",
    "Q3": "q3",
    "Q4": "q4",
    "Q5": "q5",
    "Q6": "q6",
    "QF1": "qf1",
    "QF2": "qf2",
    "QF3": "qf3",
    "QF4": "qf4",
}


def read_text(filename: str) -> str:
    return resources.files(__name__).joinpath(filename).read_text(encoding="utf-8")


def query_text(name: str) -> str:
    """Source of a corpus query by name (``"Q1"`` ... ``"QF4"`` or ``"Qcomp"``)."""
    stem = "qcomp" if name.lower() == "qcomp" else QUERIES[name.upper()]
    return read_text(f"{stem}.nrc")


def schema_text() -> str:
    return read_text("org_schema.json")


def sample_data_text() -> str:
    return read_text("org_data.json")
