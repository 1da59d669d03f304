"""End-to-end composition of the stages, with timings and an equivalence harness."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .ast import (
    BASE_TYPES,
    TOP,
    Bag,
    BagT,
    Database,
    Index,
    PBag,
    Query,
    Schema,
    erase,
    make_package,
    multiset_equal,
    package_annotations,
    path_str,
    pmap,
    tag_name,
    type_from_json,
    type_to_json,
)
from .backend import CompiledQuery, SqlOptions, compile_shredded, let_type, rows_to_shredded
from .datagen import generate_org_data
from .drivers import DbDriver, PostgresDriver, SqliteDriver
from .errors import ConfigError, EquivalenceFailure, QShredError
from .evaluator import SCHEMES, IndexFn, eval_nested, eval_shredded, make_index_fn
from .frontend import load_query
from .normalizer import RewriteTrace, annotate, normalize, tags_of
from .shredder import shred_package, shred_type_package
from .stitcher import stitch

ENGINES = ("memory", "sqlite", "postgres")
DEPARTMENT_CYCLE = (4, 8, 16, 32)


@dataclass
class PipelineConfig:
    """Everything one run needs; ``data`` is used by the memory and sqlite engines."""

    query: str
    schema: Schema
    data: Database | None = None
    dsn: str | None = None
    scheme: str = "flat"
    engine: str = "memory"
    seed: int = 1
    inline_with: bool = False
    key_rownum: bool = False
    trace: bool = False
    name: str = "query"

    def validate(self) -> None:
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}; expected one of {', '.join(ENGINES)}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")
        if self.engine == "postgres" and not self.dsn:
            raise ConfigError("the postgres engine needs --dsn")
        if self.engine != "memory" and self.scheme != "flat":
            raise ConfigError("SQL is emitted only for the flat indexing scheme")
        if self.engine != "postgres" and self.data is None:
            raise ConfigError(f"the {self.engine} engine needs --data")
        if self.scheme == "natural":
            missing = [t.name for t in self.schema.tables if not t.key]
            if missing:
                raise ConfigError(f"the natural scheme needs keys; none declared for {missing}")

    @property
    def sql_options(self) -> SqlOptions:
        return SqlOptions(inline_with=self.inline_with, key_rownum=self.key_rownum)


@dataclass
class Report:
    timings: dict[str, float] = field(default_factory=dict)
    query_count: int = 0
    trace: RewriteTrace | None = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def to_json(self) -> dict[str, Any]:
        return {
            "query_count": self.query_count,
            "timings_ms": {k: round(v * 1000, 3) for k, v in self.timings.items()},
        }


@dataclass
class CompiledQueryPackage:
    """A query taken through every query-level stage, without data."""

    term: Any
    type: BagT
    normal_form: Query
    annotated: Query
    shredded: PBag  # package of shredded queries
    shredded_types: PBag  # package of their types

    @property
    def query_count(self) -> int:
        return len(package_annotations(self.shredded))


def compile_query(text: str, schema: Schema, report: Report | None = None, filename: str | None = None) -> CompiledQueryPackage:
    """Parse, typecheck, normalise, annotate and shred."""
    report = report if report is not None else Report()
    with report.stage("typecheck"):
        term, a = load_query(text, schema, filename)
    with report.stage("normalize"):
        nf = normalize(term, a, schema, report.trace)
    with report.stage("annotate"):
        l = annotate(nf)
    with report.stage("shred"):
        pkg = shred_package(l, a)
        types = shred_type_package(a)
    compiled = CompiledQueryPackage(term, a, nf, l, pkg, types)
    report.query_count = compiled.query_count
    return compiled


def compile_sql(compiled: CompiledQueryPackage, schema: Schema, options: SqlOptions = SqlOptions()) -> list[CompiledQuery]:
    """One SQL statement per shredded query, outermost first."""
    types = dict(package_annotations(compiled.shredded_types))
    return [compile_shredded(q, types[p], p, schema, options) for p, q in package_annotations(compiled.shredded)]


def package_manifest(name: str, compiled: CompiledQueryPackage, queries: list[CompiledQuery]) -> dict[str, Any]:
    """What stitching needs after the SQL has run elsewhere."""
    tags = [TOP] + sorted(set(tags_of(compiled.annotated)))
    return {
        "query": name,
        "type": type_to_json(compiled.type),
        "tags": {str(t): tag_name(t) for t in tags},
        "root": [TOP, 1],
        "queries": [
            {
                "file": f"{name}.{i}.sql",
                "path": path_str(q.path),
                "shredded_type": type_to_json(q.shredded_type),
                "columns": [[c, t.name] for c, t in q.columns],
            }
            for i, q in enumerate(queries, 1)
        ],
    }


def stitch_manifest_results(manifest: dict[str, Any], results: list[list[dict[str, Any]]]) -> Bag:
    """Stitch database rows (one row list per manifest query) into a nested value."""
    a = type_from_json(manifest["type"])
    entries = manifest["queries"]
    if len(results) != len(entries):
        raise ConfigError(f"expected {len(entries)} result sets, got {len(results)}")
    by_path: dict[str, Any] = {}
    for entry, rows in zip(entries, results):
        st = type_from_json(entry["shredded_type"])
        cq = CompiledQuery((), st, let_type(st).elem, tuple((c, BASE_TYPES[t]) for c, t in entry["columns"]), "")
        by_path[entry["path"]] = rows_to_shredded(rows, cq)
    pkg = make_package(lambda p: by_path[path_str(p)], a)
    return stitch(pkg, Index(*manifest["root"]))


@dataclass
class PipelineResult:
    value: Bag
    report: Report
    compiled: CompiledQueryPackage


def run_pipeline(cfg: PipelineConfig, driver: DbDriver | None = None) -> PipelineResult:
    """Run a query through shredding and stitching on the configured engine.

    ``driver`` overrides the connection the engine would open; it must
    already hold the data.
    """
    cfg.validate()
    report = Report(trace=RewriteTrace() if cfg.trace else None)
    compiled = compile_query(cfg.query, cfg.schema, report, cfg.name)
    if cfg.engine == "memory":
        with report.stage("index"):
            ix = make_index_fn(cfg.scheme, compiled.annotated, cfg.data)
        with report.stage("evaluate"):
            results = pmap(lambda q: eval_shredded(q, cfg.data, ix), compiled.shredded)
        root = ix.root
    else:
        with report.stage("compile"):
            queries = compile_sql(compiled, cfg.schema, cfg.sql_options)
        owned = driver is None
        if owned:
            driver = _open_driver(cfg)
        try:
            with report.stage("execute"):
                rows = {q.path: rows_to_shredded(driver.execute(q.sql), q) for q in queries}
        finally:
            if owned:
                driver.close()
        results = make_package(lambda p: rows[tuple(p)], compiled.type)
        root = Index(TOP, 1)
    with report.stage("stitch"):
        value = stitch(results, root)
    return PipelineResult(value, report, compiled)


def _open_driver(cfg: PipelineConfig) -> DbDriver:
    driver = PostgresDriver(cfg.dsn) if cfg.engine == "postgres" else SqliteDriver()
    if cfg.data is not None:
        # on postgres this creates session-local tables that shadow the permanent ones
        driver.load(cfg.data)
    return driver


# ---------------------------------------------------------------------------
# Equivalence harness


@dataclass
class Failure:
    seed: int
    departments: int
    scheme: str
    detail: str


@dataclass
class EquivalenceReport:
    query: str
    trials: int = 0
    passed: int = 0
    failures: list[Failure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def minimal_failure(self) -> Failure | None:
        if not self.failures:
            return None
        return min(self.failures, key=lambda f: (f.departments, f.seed))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"query": self.query, "trials": self.trials, "passed": self.passed, "failed": len(self.failures)}
        m = self.minimal_failure
        if m is not None:
            out["minimal_failure"] = {"seed": m.seed, "departments": m.departments, "scheme": m.scheme}
        return out


def departments_for(seed: int) -> int:
    return DEPARTMENT_CYCLE[(seed - 1) % len(DEPARTMENT_CYCLE)]


def check_equivalence(
    cfg: PipelineConfig,
    trials: int,
    mean_employees: int = 10,
    index_hook: Callable[[IndexFn], IndexFn] | None = None,
    raise_on_failure: bool = True,
) -> EquivalenceReport:
    """Compare direct nested evaluation with shredding and stitching.

    Trial ``k`` uses seed ``cfg.seed + k`` on generated organisation data.
    ``index_hook`` may replace each scheme's index function, which is how
    the harness is shown to catch broken schemes.  A failing trial is
    re-run on fewer departments to find the smallest failing instance.
    """
    if cfg.engine != "memory":
        raise ConfigError("equivalence checking runs on the memory engine")
    compiled = compile_query(cfg.query, cfg.schema, filename=cfg.name)
    report = EquivalenceReport(cfg.name)
    for seed in range(cfg.seed, cfg.seed + trials):
        n = departments_for(seed)
        report.trials += 1
        failure = _trial(compiled, cfg.schema, seed, n, mean_employees, index_hook)
        if failure is None:
            report.passed += 1
            continue
        for smaller in range(1, n):
            f = _trial(compiled, cfg.schema, seed, smaller, mean_employees, index_hook)
            if f is not None:
                failure = f
                break
        report.failures.append(failure)
    m = report.minimal_failure
    if m is not None and raise_on_failure:
        raise EquivalenceFailure(m.seed, cfg.name, m.scheme, f"{m.departments} departments: {m.detail}")
    return report


def _trial(
    compiled: CompiledQueryPackage,
    schema: Schema,
    seed: int,
    departments: int,
    mean_employees: int,
    index_hook: Callable[[IndexFn], IndexFn] | None,
) -> Failure | None:
    db = generate_org_data(departments, seed, mean_employees, schema=schema)
    expected = eval_nested(compiled.normal_form, db)
    for scheme in SCHEMES:
        try:
            ix = make_index_fn(scheme, compiled.annotated, db)
            if index_hook is not None:
                ix = index_hook(ix)
            results = pmap(lambda q: eval_shredded(q, db, ix), compiled.shredded)
            got = erase(stitch(results, ix.root))
        except QShredError as e:
            return Failure(seed, departments, scheme, f"{type(e).__name__}: {e}")
        if not multiset_equal(got, expected):
            return Failure(seed, departments, scheme, "stitched value differs from the nested evaluation")
    return None


def collapse_dynamic(ix: IndexFn) -> IndexFn:
    """A broken index function: every index of a tag maps to the same value."""

    class Collapsed(IndexFn):
        def __call__(self, idx: Index) -> Any:
            return Index(IndexFn.__call__(self, idx).tag, 1)

    return Collapsed(ix.scheme, Index(ix.root.tag, 1), ix.mapping)


__all__ = [
    "PipelineConfig",
    "Report",
    "CompiledQueryPackage",
    "compile_query",
    "compile_sql",
    "package_manifest",
    "stitch_manifest_results",
    "run_pipeline",
    "check_equivalence",
    "collapse_dynamic",
    "departments_for",
]
