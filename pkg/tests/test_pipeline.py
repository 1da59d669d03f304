from __future__ import annotations

import json

import pytest

from qshred.ast import INT, Database, Schema, TableSchema, erase, multiset_equal
from qshred.corpus import QUERIES, query_text
from qshred.datagen import generate_org_data
from qshred.drivers import SqliteDriver
from qshred.errors import ConfigError, EquivalenceFailure
from qshred.evaluator import SCHEMES, eval_nested
from qshred.pipeline import (
    PipelineConfig,
    Report,
    check_equivalence,
    collapse_dynamic,
    compile_query,
    compile_sql,
    departments_for,
    package_manifest,
    run_pipeline,
    stitch_manifest_results,
)

import running_example as ex


@pytest.mark.parametrize("scheme", SCHEMES)
def test_q_comp_runs_in_memory_under_every_scheme(schema, sample_db, scheme):
    result = run_pipeline(PipelineConfig(query_text("Qcomp"), schema, sample_db, scheme=scheme))
    assert multiset_equal(erase(result.value), ex.RESULT_VALUE)
    assert result.report.query_count == 3


def test_flat_result_query_needs_one_shredded_query(schema, sample_db):
    result = run_pipeline(PipelineConfig(query_text("Q2"), schema, sample_db))
    assert result.report.query_count == 1
    assert multiset_equal(erase(result.value), eval_nested(result.compiled.normal_form, sample_db))


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"engine": "postgres", "data": None}, "needs --dsn"),
        ({"engine": "oracle"}, "unknown engine"),
        ({"scheme": "dense"}, "unknown scheme"),
        ({"engine": "sqlite", "scheme": "natural"}, "flat indexing scheme"),
        ({"data": None}, "needs --data"),
    ],
)
def test_invalid_configurations(schema, sample_db, changes, message):
    fields = {"query": query_text("Q1"), "schema": schema, "data": sample_db, **changes}
    with pytest.raises(ConfigError, match=message):
        run_pipeline(PipelineConfig(**fields))


def test_natural_scheme_requires_keys():
    schema = Schema((TableSchema("t", (("a", INT),)),))
    db = Database(schema, {"t": []})
    cfg = PipelineConfig("for (x <- t) return x.a", schema, db, scheme="natural")
    with pytest.raises(ConfigError, match="needs keys"):
        cfg.validate()


def test_zero_trials_give_an_empty_passing_report(schema):
    report = check_equivalence(PipelineConfig(query_text("Q1"), schema), trials=0)
    assert report.ok and report.trials == 0 and report.passed == 0
    assert report.to_json() == {"query": "query", "trials": 0, "passed": 0, "failed": 0}


def test_equivalence_holds_on_the_corpus(schema):
    for name in sorted(QUERIES):
        report = check_equivalence(PipelineConfig(query_text(name), schema, name=name), trials=4)
        assert report.ok and report.passed == 4, name


def test_a_non_injective_index_function_is_caught(schema):
    cfg = PipelineConfig(query_text("Qcomp"), schema, name="Qcomp")
    with pytest.raises(EquivalenceFailure):
        check_equivalence(cfg, trials=2, index_hook=collapse_dynamic)
    report = check_equivalence(cfg, trials=2, index_hook=collapse_dynamic, raise_on_failure=False)
    assert not report.ok
    # the failing instance is shrunk to the fewest departments that still fail
    assert report.minimal_failure.departments < departments_for(report.minimal_failure.seed)
    assert report.to_json()["minimal_failure"]["scheme"] in SCHEMES


def test_equivalence_checking_is_memory_only(schema):
    with pytest.raises(ConfigError):
        check_equivalence(PipelineConfig(query_text("Q1"), schema, engine="sqlite"), trials=1)


def test_department_counts_cycle():
    assert [departments_for(s) for s in range(1, 6)] == [4, 8, 16, 32, 4]


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_sqlite_engine_agrees_with_memory(schema, name):
    db = generate_org_data(4, 7, schema=schema)
    memory = run_pipeline(PipelineConfig(query_text(name), schema, db))
    sqlite = run_pipeline(PipelineConfig(query_text(name), schema, db, engine="sqlite"))
    assert multiset_equal(erase(sqlite.value), erase(memory.value))
    assert {"compile", "execute", "stitch"} <= set(sqlite.report.timings)


def test_an_open_driver_can_be_supplied(schema, sample_db):
    with SqliteDriver() as driver:
        driver.load(sample_db)
        cfg = PipelineConfig(query_text("Qcomp"), schema, sample_db, engine="sqlite", inline_with=True)
        assert multiset_equal(erase(run_pipeline(cfg, driver).value), ex.RESULT_VALUE)
        # the driver stays usable afterwards
        assert driver.execute('SELECT 1 AS "x"') == [{"x": 1}]


def test_manifest_round_trip_through_sqlite(schema, sample_db):
    compiled = compile_query(query_text("Qcomp"), schema)
    queries = compile_sql(compiled, schema)
    manifest = json.loads(json.dumps(package_manifest("qcomp", compiled, queries)))
    assert [q["file"] for q in manifest["queries"]] == ["qcomp.1.sql", "qcomp.2.sql", "qcomp.3.sql"]
    assert manifest["root"] == [0, 1]
    assert set(manifest["tags"].values()) == {"⊤", "a", "b", "c", "d", "e"}
    with SqliteDriver() as driver:
        driver.load(sample_db)
        results = [driver.execute(q.sql) for q in queries]
    assert multiset_equal(erase(stitch_manifest_results(manifest, results)), ex.RESULT_VALUE)
    with pytest.raises(ConfigError):
        stitch_manifest_results(manifest, results[:2])


def test_compilation_is_deterministic(schema):
    runs = []
    for _ in range(2):
        compiled = compile_query(query_text("Qcomp"), schema)
        queries = compile_sql(compiled, schema)
        runs.append(([q.sql for q in queries], json.dumps(package_manifest("q", compiled, queries))))
    assert runs[0] == runs[1]


def test_report_records_stage_timings(schema, sample_db):
    result = run_pipeline(PipelineConfig(query_text("Q6"), schema, sample_db, trace=True))
    out = result.report.to_json()
    assert out["query_count"] == 3
    assert all(v >= 0 for v in out["timings_ms"].values())
    assert {"normalize", "shred", "evaluate", "stitch"} <= set(out["timings_ms"])
    assert result.report.trace is not None and len(result.report.trace) > 0


def test_report_stages_accumulate():
    report = Report()
    for _ in range(2):
        with report.stage("x"):
            pass
    assert list(report.timings) == ["x"]
