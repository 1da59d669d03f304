"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class QShredError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised it."""

    stage = "pipeline"


class QuerySyntaxError(QShredError):
    stage = "frontend"

    def __init__(self, message: str, line: int = 0, col: int = 0, expected: str | None = None):
        self.line = line
        self.col = col
        self.expected = expected
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{message}")


class SchemaError(QShredError):
    stage = "frontend"


class QueryTypeError(QShredError):
    stage = "frontend"


class NotFlatNested(QueryTypeError):
    """The query is well typed but its result type contains a function."""


class TypeHasFunctions(QShredError):
    stage = "ast"


class TypeMismatch(QShredError):
    stage = "ast"


class InvalidPath(QShredError):
    stage = "shredder"


class InternalNonTermination(QShredError):
    stage = "normalizer"


class NotNormalInput(QShredError):
    stage = "normalizer"


class UnannotatedInput(QShredError):
    stage = "shredder"


class UnboundVariable(QShredError):
    stage = "evaluator"


class MissingTable(QShredError):
    stage = "evaluator"


class IndexUndefined(QShredError):
    stage = "evaluator"


class NonInjectiveIndex(QShredError):
    stage = "evaluator"


class NoKeyDeclared(QShredError):
    stage = "evaluator"


class KeyNotUnique(QShredError):
    stage = "evaluator"


class DanglingIndex(QShredError):
    stage = "stitcher"


class UnboundQueryName(QShredError):
    stage = "backend"


class NameClashZ(QShredError):
    stage = "backend"


class UnflattenedInput(QShredError):
    stage = "backend"


class ColumnMismatch(QShredError):
    stage = "backend"


class DatabaseError(QShredError):
    stage = "backend"


class ConfigError(QShredError):
    stage = "cli"


class EquivalenceFailure(QShredError):
    stage = "check"

    def __init__(self, seed: int, query: str, scheme: str, detail: str = ""):
        self.seed = seed
        self.query = query
        self.scheme = scheme
        self.detail = detail
        msg = f"query {query!r} differs under the {scheme} scheme (seed {seed})"
        super().__init__(msg + (f": {detail}" if detail else ""))
