"""Shredding of annotated normal forms into flat queries, one per bag path.

``shred_term(l, p)`` returns the query computing the bag found at path ``p``
of the result of ``l``.  Every comprehension on the way to that bag
contributes one ``for`` level; the innermost returns a pair of the outer
index ``a⟨↑⟩`` (linking to the enclosing bag) and a flat payload in which
nested queries are replaced by inner indexes ``b⟨↓⟩``.
"""

from __future__ import annotations

from typing import Any, Mapping

from .ast import (
    BOOL,
    DOWN,
    DOWN_DYN,
    INDEX,
    INT,
    STRING,
    TOP,
    UP,
    BagT,
    BaseT,
    Comprehension,
    Const,
    IndexRef,
    IndexT,
    IsEmpty,
    PrimApp,
    Project,
    Query,
    Record,
    RecordT,
    Schema,
    SFor,
    SQuery,
    SReturn,
    Var,
    const_type,
    make_package,
    path_str,
    tuple_type,
)
from .errors import InvalidPath, QueryTypeError, TypeHasFunctions, UnannotatedInput

# ---------------------------------------------------------------------------
# Types


def shred_type_inner(a: Any) -> Any:
    """Flat representation of bag contents: nested bags become indexes."""
    if isinstance(a, BaseT):
        return a
    if isinstance(a, RecordT):
        return RecordT(tuple((label, shred_type_inner(t)) for label, t in a.fields))
    if isinstance(a, BagT):
        return INDEX
    if isinstance(a, IndexT):
        return a
    raise TypeHasFunctions(f"cannot shred type {a!r}")


def shred_type_outer(a: Any, path: tuple = ()) -> BagT:
    """Shredded type of the bag at ``path`` inside ``a``."""
    t, rest = a, tuple(path)
    while True:
        if isinstance(t, BagT):
            if not rest:
                return BagT(tuple_type(INDEX, shred_type_inner(t.elem)))
            if rest[0] != DOWN:
                break
            t, rest = t.elem, rest[1:]
        elif isinstance(t, RecordT) and rest and rest[0] in t.labels:
            t, rest = t.field_type(rest[0]), rest[1:]
        else:
            break
    if not isinstance(a, (BaseT, RecordT, BagT)):
        raise TypeHasFunctions(f"cannot shred type {a!r}")
    raise InvalidPath(f"{path_str(tuple(path))} is not a bag path of the type")


def shred_type_package(a: Any) -> Any:
    """The package of ``a`` annotated with its outer shreddings."""
    return make_package(lambda p: shred_type_outer(a, p), a)


# ---------------------------------------------------------------------------
# Terms


def shred_term(l: Query, path: tuple = ()) -> SQuery:
    """The shredded query for the bag at ``path`` of an annotated normal form."""
    if not isinstance(l, Query):
        raise InvalidPath("shredding starts from a union of comprehensions")
    return SQuery(tuple(_shlist(l, TOP, tuple(path), tuple(path))))


def _shlist(m: Any, a: int, p: tuple, full: tuple) -> list[SFor]:
    if isinstance(m, Query):
        return [c for comp in m.comps for c in _shlist(comp, a, p, full)]
    if isinstance(m, Record):
        if not p or p[0] == DOWN or p[0] not in {label for label, _ in m.fields}:
            raise InvalidPath(f"{path_str(full)} does not select a field here")
        return _shlist(m.get(p[0]), a, p[1:], full)
    if isinstance(m, Comprehension):
        b = m.tag
        if b is None:
            raise UnannotatedInput("comprehension without a static tag; run annotate first")
        guard = _inner(m.guard, b)
        if not p:
            return [SFor(m.gens, guard, SReturn(IndexRef(a, UP), _inner(m.body, b), b))]
        if p[0] != DOWN:
            raise InvalidPath(f"{path_str(full)} selects a field of a bag")
        return [SFor(m.gens, guard, c) for c in _shlist(m.body, b, p[1:], full)]
    raise InvalidPath(f"{path_str(full)} leads into a base value")


def _inner(m: Any, a: int) -> Any:
    if isinstance(m, Query):
        return IndexRef(a, DOWN_DYN)
    if isinstance(m, Record):
        return Record(tuple((label, _inner(f, a)) for label, f in m.fields))
    if isinstance(m, PrimApp):
        return PrimApp(m.op, tuple(_inner(x, a) for x in m.args))
    if isinstance(m, IsEmpty):
        return IsEmpty(shred_term(m.term, ()))
    return m


def shred_package(l: Query, a: Any) -> Any:
    """Package of type ``a`` whose bag annotations are the shredded queries."""
    return make_package(lambda p: shred_term(l, p), a)


# ---------------------------------------------------------------------------
# Typing of shredded terms


_PRIM_SIGS: dict[str, tuple[tuple[BaseT, ...], BaseT]] = {
    "&&": ((BOOL, BOOL), BOOL),
    "||": ((BOOL, BOOL), BOOL),
    "not": ((BOOL,), BOOL),
    "+": ((INT, INT), INT),
    "-": ((INT, INT), INT),
    "*": ((INT, INT), INT),
}


def prim_type(op: str, args: list[Any]) -> BaseT:
    """Result type of a primitive applied to arguments of the given types."""
    if op in _PRIM_SIGS:
        params, res = _PRIM_SIGS[op]
        if tuple(args) != params:
            raise QueryTypeError(f"{op} applied to {args}")
        return res
    if op in ("=", "<>", "<", ">", "<=", ">="):
        allowed = (INT, STRING, BOOL) if op in ("=", "<>") else (INT, STRING)
        if len(args) != 2 or args[0] != args[1] or args[0] not in allowed:
            raise QueryTypeError(f"{op} applied to {args}")
        return BOOL
    raise QueryTypeError(f"unknown primitive {op!r}")


def check_shredded(q: SQuery, schema: Schema, env: Mapping[str, Any] | None = None) -> BagT:
    """Type of a shredded query under the shredded typing rules.

    Raises :class:`QueryTypeError` when the term is ill-typed.
    """
    return _ShreddedChecker(schema).query(q, dict(env or {}))


class _ShreddedChecker:
    def __init__(self, schema: Schema):
        self.schema = schema

    def query(self, q: SQuery, env: dict[str, Any]) -> BagT:
        if not isinstance(q, SQuery):
            raise QueryTypeError(f"not a shredded query: {type(q).__name__}")
        result: BagT | None = None
        for c in q.comps:
            t = self.comp(c, env)
            if result is not None and t != result:
                raise QueryTypeError(f"union branches disagree: {result} vs {t}")
            result = t
        if result is None:
            # the empty union has every shredded type; report the least informative one
            return BagT(tuple_type(INDEX, RecordT(())))
        return result

    def comp(self, c: Any, env: dict[str, Any]) -> BagT:
        if isinstance(c, SReturn):
            if not isinstance(c.outer, IndexRef) or c.outer.dyn != UP:
                raise QueryTypeError("the outer component of a return must be an outer index")
            return BagT(tuple_type(INDEX, self.inner(c.inner, env)))
        if isinstance(c, SFor):
            env = dict(env)
            for g in c.gens:
                env[g.var] = self.schema.table(g.table).row_type
            if self.base(c.guard, env) != BOOL:
                raise QueryTypeError("guard is not boolean")
            return self.comp(c.body, env)
        raise QueryTypeError(f"not a shredded comprehension: {type(c).__name__}")

    def inner(self, n: Any, env: dict[str, Any]) -> Any:
        if isinstance(n, IndexRef):
            if n.dyn != DOWN_DYN:
                raise QueryTypeError("outer index inside a payload")
            return INDEX
        if isinstance(n, Record):
            return RecordT(tuple((label, self.inner(f, env)) for label, f in n.fields))
        return self.base(n, env)

    def base(self, x: Any, env: dict[str, Any]) -> BaseT:
        if isinstance(x, Const):
            return const_type(x.value)
        if isinstance(x, Project) and isinstance(x.term, Var):
            row = env.get(x.term.name)
            if not isinstance(row, RecordT) or x.label not in row.labels:
                raise QueryTypeError(f"bad projection {x.term.name}.{x.label}")
            return row.field_type(x.label)
        if isinstance(x, PrimApp):
            return prim_type(x.op, [self.base(a, env) for a in x.args])
        if isinstance(x, IsEmpty):
            self.query(x.term, env)
            return BOOL
        raise QueryTypeError(f"not a base term: {type(x).__name__}")
