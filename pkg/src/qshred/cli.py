"""Command-line interface: ``qshred <command> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 parse or type
error (and other compile-time failures), 3 equivalence failure, 4 database
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import corpus
from .ast import package_annotations, path_str
from .backend import let_insert
from .datagen import generate_org_data
from .errors import ConfigError, DatabaseError, EquivalenceFailure, QShredError
from .frontend import parse_data, parse_schema
from .pipeline import (
    PipelineConfig,
    Report,
    check_equivalence,
    compile_query,
    compile_sql,
    package_manifest,
    run_pipeline,
)
from .normalizer import RewriteTrace
from .pretty import show_letinserted, show_nf, show_shredded, show_surface_type, show_type, value_to_json

EXIT_OK, EXIT_USAGE, EXIT_COMPILE, EXIT_EQUIV, EXIT_DB = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qshred", description="Compile nested queries to flat SQL by query shredding.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, query_required: bool = True) -> None:
        sp.add_argument("--query", required=query_required, help="query file (.nrc) or corpus name such as Q1 or Qcomp")
        sp.add_argument("--schema", help="schema JSON (default: the shipped organisation schema)")
        sp.add_argument("--trace", action="store_true", help="print normalisation rewrites to stderr")

    sp = sub.add_parser("normalize", help="print the annotated normal form")
    common(sp)

    sp = sub.add_parser("shred", help="print the shredded types and queries")
    common(sp)
    sp.add_argument("--let", action="store_true", help="also print the let-inserted queries")

    sp = sub.add_parser("compile", help="write one SQL file per shredded query plus a package manifest")
    common(sp)
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--name", help="file name stem (default: the query file stem)")
    _sql_flags(sp)

    sp = sub.add_parser("run", help="evaluate a query by shredding and stitching; prints JSON")
    common(sp)
    sp.add_argument("--data", help="data JSON (default: the shipped sample data)")
    sp.add_argument("--dsn", help="PostgreSQL connection string for --engine postgres")
    sp.add_argument("--scheme", default="flat", help="canonical | natural | flat")
    sp.add_argument("--engine", default="memory", help="memory | sqlite | postgres")
    sp.add_argument("--report", action="store_true", help="print timings and query count to stderr")
    _sql_flags(sp)

    sp = sub.add_parser("check", help="compare shredded and nested evaluation on generated data")
    common(sp, query_required=False)
    sp.add_argument("--seed", type=int, default=1, help="first seed")
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--mean-employees", type=int, default=10)

    sp = sub.add_parser("gen-data", help="print a generated organisation database as JSON")
    sp.add_argument("--departments", type=int, default=4)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--mean-employees", type=int, default=10)
    sp.add_argument("--out", help="write to this file instead of stdout")
    return p


def _sql_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--inline-with", action="store_true", help="inline let-bound queries as derived tables")
    sp.add_argument("--key-rownum", action="store_true", help="number rows by key columns only")


def _read_query(ref: str) -> tuple[str, str]:
    """Source text and a display name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.stem
    try:
        return corpus.query_text(ref), ref
    except KeyError:
        raise ConfigError(f"no query file or corpus query named {ref!r}") from None


def _read_schema(args: argparse.Namespace) -> Any:
    if args.schema:
        return parse_schema(_read_file(args.schema))
    return parse_schema(corpus.schema_text())


def _read_file(name: str) -> str:
    try:
        return Path(name).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(e)) from e


def _emit_trace(report: Report) -> None:
    if report.trace is not None:
        print(report.trace.dump(), file=sys.stderr)


def cmd_normalize(args: argparse.Namespace) -> int:
    text, name = _read_query(args.query)
    report = Report(trace=RewriteTrace() if args.trace else None)
    compiled = compile_query(text, _read_schema(args), report, name)
    _emit_trace(report)
    print(f"-- : {show_surface_type(compiled.type)}")
    print(show_nf(compiled.annotated))
    return EXIT_OK


def cmd_shred(args: argparse.Namespace) -> int:
    text, name = _read_query(args.query)
    schema = _read_schema(args)
    report = Report(trace=RewriteTrace() if args.trace else None)
    compiled = compile_query(text, schema, report, name)
    _emit_trace(report)
    types = dict(package_annotations(compiled.shredded_types))
    blocks = []
    for path, q in package_annotations(compiled.shredded):
        block = f"-- {path_str(path)} : {show_type(types[path])}\n{show_shredded(q)}"
        if args.let:
            block += f"\n-- let-inserted\n{show_letinserted(let_insert(q, schema))}"
        blocks.append(block)
    print("\n\n".join(blocks))
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    text, name = _read_query(args.query)
    name = args.name or name
    schema = _read_schema(args)
    report = Report(trace=RewriteTrace() if args.trace else None)
    compiled = compile_query(text, schema, report, name)
    _emit_trace(report)
    cfg = PipelineConfig(text, schema, inline_with=args.inline_with, key_rownum=args.key_rownum)
    queries = compile_sql(compiled, schema, cfg.sql_options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = package_manifest(name, compiled, queries)
    for entry, q in zip(manifest["queries"], queries):
        (out / entry["file"]).write_text(q.sql + ";\n", encoding="utf-8")
        print(out / entry["file"])
    (out / f"{name}.package.json").write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(out / f"{name}.package.json")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    text, name = _read_query(args.query)
    schema = _read_schema(args)
    data = None
    if args.data:
        data = parse_data(_read_file(args.data), schema)
    elif args.engine != "postgres":
        data = parse_data(corpus.sample_data_text(), schema)
    cfg = PipelineConfig(
        text,
        schema,
        data=data,
        dsn=args.dsn,
        scheme=args.scheme,
        engine=args.engine,
        inline_with=args.inline_with,
        key_rownum=args.key_rownum,
        trace=args.trace,
        name=name,
    )
    result = run_pipeline(cfg)
    _emit_trace(result.report)
    print(json.dumps(value_to_json(result.value), indent=2, ensure_ascii=False))
    if args.report:
        print(json.dumps(result.report.to_json()), file=sys.stderr)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    schema = _read_schema(args)
    refs = [args.query] if args.query else list(corpus.QUERIES)
    status = EXIT_OK
    for ref in refs:
        text, name = _read_query(ref)
        cfg = PipelineConfig(text, schema, seed=args.seed, name=name)
        report = check_equivalence(cfg, args.trials, args.mean_employees, raise_on_failure=False)
        print(json.dumps(report.to_json()))
        if not report.ok:
            m = report.minimal_failure
            print(f"{name}: {m.scheme} scheme fails on seed {m.seed} with {m.departments} departments: {m.detail}", file=sys.stderr)
            status = EXIT_EQUIV
    return status


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.departments < 1:
        raise ConfigError("--departments must be at least 1")
    db = generate_org_data(args.departments, args.seed, args.mean_employees)
    text = json.dumps(db.to_json(), indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


COMMANDS = {
    "normalize": cmd_normalize,
    "shred": cmd_shred,
    "compile": cmd_compile,
    "run": cmd_run,
    "check": cmd_check,
    "gen-data": cmd_gen_data,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # --help and usage errors
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"qshred: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EquivalenceFailure as e:
        print(f"qshred: {e}", file=sys.stderr)
        return EXIT_EQUIV
    except DatabaseError as e:
        print(f"qshred [{e.stage}]: {e}", file=sys.stderr)
        return EXIT_DB
    except QShredError as e:
        print(f"qshred [{e.stage}]: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPILE


if __name__ == "__main__":
    sys.exit(main())
