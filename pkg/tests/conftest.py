from __future__ import annotations

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from qshred.corpus import QUERIES, query_text, sample_data_text, schema_text
from qshred.frontend import parse_data, parse_schema
from qshred.pipeline import compile_query

GOLDEN_DIR = Path(__file__).parent / "golden"

settings.register_profile(
    "qshred",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large, HealthCheck.filter_too_much],
)
settings.load_profile("qshred")


@pytest.fixture(scope="session")
def schema():
    return parse_schema(schema_text())


@pytest.fixture(scope="session")
def sample_db(schema):
    return parse_data(sample_data_text(), schema)


@pytest.fixture(scope="session")
def corpus_compiled(schema):
    return {name: compile_query(query_text(name), schema, filename=name) for name in QUERIES}


@pytest.fixture(scope="session")
def qcomp(schema):
    return compile_query(query_text("Qcomp"), schema, filename="Qcomp")


def check_golden(name: str, text: str) -> None:
    """Compare ``text`` with ``tests/golden/<name>``; QSHRED_UPDATE_GOLDEN=1 rewrites it."""
    path = GOLDEN_DIR / name
    if os.environ.get("QSHRED_UPDATE_GOLDEN") == "1":
        path.write_text(text, encoding="utf-8")
    assert path.exists(), f"missing golden file {path}"
    assert text == path.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    criterion = getattr(item.function, "criterion", None)
    if criterion is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _ACCEPTANCE[item.nodeid] = (status, criterion)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, criterion in _ACCEPTANCE.values():
        terminalreporter.write_line(f"{status}  {criterion}")
