"""Reference semantics for every intermediate language, and indexing schemes.

All evaluators read tables in the canonical order kept by
:class:`~qshred.ast.Database` and enumerate generator products
lexicographically, so positions (and hence canonical and flat indexes) are
deterministic.  Guards are split by :class:`~qshred.ast.LoopPlan` so each
conjunct is tested as soon as its variables are bound; equality conjuncts on
a table column become hash lookups.  This changes cost only, never the
sequence of surviving bindings.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping

from .ast import (
    DOWN,
    DOWN_DYN,
    INDEX,
    TOP,
    App,
    Bag,
    BagT,
    Comprehension,
    Const,
    Database,
    Empty,
    For,
    If,
    Index,
    IndexPrim,
    IndexRef,
    IndexT,
    IsEmpty,
    Lam,
    LComp,
    LetGenerator,
    LQuery,
    LSub,
    PrimApp,
    Project,
    Query,
    Rec,
    Record,
    RecordT,
    SFor,
    ShreddedRow,
    Singleton,
    SQuery,
    SReturn,
    Table,
    Union,
    Var,
)
from .errors import IndexUndefined, NonInjectiveIndex, NoKeyDeclared, UnboundQueryName, UnboundVariable

_OPS: dict[str, Callable[..., Any]] = {
    "&&": lambda a, b: a and b,
    "||": lambda a, b: a or b,
    "not": operator.not_,
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}


def apply_prim(op: str, args: list[Any]) -> Any:
    return _OPS[op](*args)


# ---------------------------------------------------------------------------
# Base terms and generator enumeration (shared by every layer)


def eval_base(x: Any, env: Mapping[str, Any], db: Database) -> Any:
    """Value of a base term; ``x.l1...ln`` projections may be nested."""
    if isinstance(x, Const):
        return x.value
    if isinstance(x, Project):
        return eval_base(x.term, env, db)[x.label]
    if isinstance(x, Var):
        try:
            return env[x.name]
        except KeyError:
            raise UnboundVariable(f"unbound variable {x.name!r}") from None
    if isinstance(x, PrimApp):
        if x.op == "&&":
            return eval_base(x.args[0], env, db) and eval_base(x.args[1], env, db)
        if x.op == "||":
            return eval_base(x.args[0], env, db) or eval_base(x.args[1], env, db)
        return _OPS[x.op](*(eval_base(a, env, db) for a in x.args))
    if isinstance(x, IsEmpty):
        return not _exists(x.term, env, db)
    raise TypeError(f"not a base term: {x!r}")


def _exists(q: Any, env: Mapping[str, Any], db: Database) -> bool:
    if isinstance(q, Query):
        return any(next(bindings(c, env, db), None) is not None for c in q.comps)
    if isinstance(q, SQuery):
        return any(_sfor_exists(c, env, db) for c in q.comps)
    if isinstance(q, LQuery):
        return any(True for c in q.comps for _ in _lcomp_rows(c, env, db))
    raise TypeError(f"emptiness test of {type(q).__name__}")


def _sfor_exists(c: Any, env: Mapping[str, Any], db: Database) -> bool:
    if isinstance(c, SReturn):
        return True
    return any(_sfor_exists(c.body, e, db) for e in bindings(c, env, db))


def bindings(
    node: Comprehension | SFor | LSub, env: Mapping[str, Any], db: Database, let_rows: list[Any] | None = None
) -> Iterator[dict[str, Any]]:
    """Environments extending ``env`` for every generator binding of ``node``
    that satisfies its guard, in enumeration order."""
    plan = node.plan
    gens = node.gens
    n = len(gens)
    for c in plan.checks[0]:
        if not eval_base(c, env, db):
            return

    def go(i: int, env: dict[str, Any]) -> Iterator[dict[str, Any]]:
        if i == n:
            yield env
            return
        g = gens[i]
        probe = plan.probes[i + 1]
        if isinstance(g, LetGenerator):
            if let_rows is None:
                raise UnboundQueryName("generator over a let-bound query outside its let")
            rows = let_rows
        elif probe is not None:
            rows = db.lookup(g.table, probe[0], eval_base(probe[1], env, db))
        else:
            rows = db.rows(g.table)
        checks = plan.checks[i + 1]
        var = g.var
        for r in rows:
            e = dict(env)
            e[var] = r
            for c in checks:
                if not eval_base(c, e, db):
                    break
            else:
                yield from go(i + 1, e)

    yield from go(0, dict(env))


# ---------------------------------------------------------------------------
# Nested semantics


def eval_nested(m: Any, db: Database, env: Mapping[str, Any] | None = None) -> Any:
    """Value of a source term or of a normal form."""
    env = dict(env or {})
    if isinstance(m, (Query, Comprehension)):
        return _nf_value(m, env, db)
    return _core(m, env, db)


def _core(t: Any, env: dict[str, Any], db: Database) -> Any:
    if isinstance(t, Var):
        try:
            return env[t.name]
        except KeyError:
            raise UnboundVariable(f"unbound variable {t.name!r}") from None
    if isinstance(t, Const):
        return t.value
    if isinstance(t, PrimApp):
        if t.op == "&&":
            return _core(t.args[0], env, db) and _core(t.args[1], env, db)
        if t.op == "||":
            return _core(t.args[0], env, db) or _core(t.args[1], env, db)
        return _OPS[t.op](*(_core(a, env, db) for a in t.args))
    if isinstance(t, Table):
        return Bag(db.rows(t.name))
    if isinstance(t, If):
        return _core(t.then if _core(t.cond, env, db) else t.else_, env, db)
    if isinstance(t, Lam):
        return lambda v, t=t, env=env: _core(t.body, {**env, t.param: v}, db)
    if isinstance(t, App):
        return _core(t.fun, env, db)(_core(t.arg, env, db))
    if isinstance(t, Record):
        return Rec((label, _core(f, env, db)) for label, f in t.fields)
    if isinstance(t, Project):
        return _core(t.term, env, db)[t.label]
    if isinstance(t, Empty):
        return Bag()
    if isinstance(t, Singleton):
        return Bag((_core(t.term, env, db),))
    if isinstance(t, Union):
        return Bag(_core(t.left, env, db).items + _core(t.right, env, db).items)
    if isinstance(t, For):
        out: list[Any] = []
        for v in _core(t.source, env, db).items:
            out.extend(_core(t.body, {**env, t.var: v}, db).items)
        return Bag(out)
    if isinstance(t, IsEmpty):
        return len(_core(t.term, env, db)) == 0
    if isinstance(t, Query):
        return _nf_value(t, env, db)
    raise TypeError(f"cannot evaluate {t!r}")


def _nf_value(t: Any, env: Mapping[str, Any], db: Database) -> Any:
    if isinstance(t, Query):
        return Bag(v for c in t.comps for v in _nf_comp(c, env, db))
    if isinstance(t, Comprehension):
        return Bag(_nf_comp(t, env, db))
    if isinstance(t, Record):
        return Rec((label, _nf_value(f, env, db)) for label, f in t.fields)
    return eval_base(t, env, db)


def _nf_comp(c: Comprehension, env: Mapping[str, Any], db: Database) -> list[Any]:
    return [_nf_value(c.body, e, db) for e in bindings(c, env, db)]


# ---------------------------------------------------------------------------
# Index functions


@dataclass
class IndexFn:
    """A concrete indexing scheme: maps canonical indexes to concrete ones.

    ``mapping`` is ``None`` for the canonical scheme (the identity).
    """

    scheme: str
    root: Any
    mapping: dict[Index, Any] | None = None

    def __call__(self, idx: Index) -> Any:
        if self.mapping is None:
            return idx
        try:
            return self.mapping[idx]
        except KeyError:
            raise IndexUndefined(f"{self.scheme} index undefined on {idx}") from None


ROOT = Index(TOP, (1,))
CANONICAL = IndexFn("canonical", ROOT)


def canonical_index_fn() -> IndexFn:
    return CANONICAL


def _walk_indexes(l: Query, db: Database, natural: bool) -> Iterator[tuple[Index, tuple | None]]:
    """Canonical indexes in enumeration order, each with its natural dynamic
    part (a path of per-level key tuples) when ``natural`` is set."""
    schema = db.schema

    def keys_of(c: Comprehension) -> list[tuple[str, tuple[str, ...]]]:
        out = []
        for g in c.gens:
            ts = schema.table(g.table)
            if not ts.key:
                raise NoKeyDeclared(f"table {g.table!r} declares no key")
            out.append((g.table, ts.key))
        return out

    def query(q: Query, env: Mapping[str, Any], iota: tuple, nat: tuple) -> Iterator[tuple[Index, tuple | None]]:
        for c in q.comps:
            keys = keys_of(c) if natural else None
            for j, e in enumerate(bindings(c, env, db), 1):
                here = iota + (j,)
                nat_here = None
                if natural:
                    level = tuple((t, tuple(e[g.var][k] for k in key)) for g, (t, key) in zip(c.gens, keys))
                    nat_here = nat + (level,)
                yield Index(c.tag, here), nat_here
                yield from nterm(c.body, e, here, nat_here)

    def nterm(t: Any, env: Mapping[str, Any], iota: tuple, nat: tuple | None) -> Iterator[tuple[Index, tuple | None]]:
        if isinstance(t, Query):
            yield from query(t, env, iota, nat)
        elif isinstance(t, Record):
            for _, f in t.fields:
                yield from nterm(f, env, iota, nat)

    yield from query(l, {}, (1,), ())


def canonical_indexes(l: Query, db: Database) -> list[Index]:
    """Canonical indexes of every element of every bag in the result."""
    return [i for i, _ in _walk_indexes(l, db, natural=False)]


def natural_indexes(l: Query, db: Database) -> list[Index]:
    """Natural indexes in the same order as :func:`canonical_indexes`."""
    return [Index(i.tag, nat) for i, nat in _walk_indexes(l, db, natural=True)]


def flat_index_fn(l: Query, db: Database) -> IndexFn:
    """Number the canonical dynamic indexes of each static tag from 1."""
    counts: dict[int, int] = {}
    mapping: dict[Index, Any] = {ROOT: Index(TOP, 1)}
    for idx in canonical_indexes(l, db):
        n = counts.get(idx.tag, 0) + 1
        counts[idx.tag] = n
        mapping[idx] = Index(idx.tag, n)
    return IndexFn("flat", Index(TOP, 1), mapping)


def natural_index_fn(l: Query, db: Database) -> IndexFn:
    """Map canonical indexes to key-derived natural indexes.

    Raises :class:`NoKeyDeclared` or :class:`KeyNotUnique` when a generator
    table cannot supply keys, and :class:`NonInjectiveIndex` if two
    canonical indexes collapse.
    """
    for t in sorted(_result_tables(l)):
        db.check_keys(t)
    root = Index(TOP, ())
    mapping: dict[Index, Any] = {ROOT: root}
    seen: set[Any] = {root}
    for idx, nat in _walk_indexes(l, db, natural=True):
        value = Index(idx.tag, nat)
        if value in seen:
            raise NonInjectiveIndex(f"natural index {value} repeats")
        seen.add(value)
        mapping[idx] = value
    return IndexFn("natural", root, mapping)


def _result_tables(l: Query) -> set[str]:
    out: set[str] = set()

    def nterm(t: Any) -> None:
        if isinstance(t, Query):
            for c in t.comps:
                out.update(g.table for g in c.gens)
                nterm(c.body)
        elif isinstance(t, Record):
            for _, f in t.fields:
                nterm(f)

    nterm(l)
    return out


def make_index_fn(scheme: str, l: Query, db: Database) -> IndexFn:
    if scheme == "canonical":
        return CANONICAL
    if scheme == "natural":
        return natural_index_fn(l, db)
    if scheme == "flat":
        return flat_index_fn(l, db)
    raise ValueError(f"unknown indexing scheme {scheme!r}")


SCHEMES = ("canonical", "natural", "flat")


# ---------------------------------------------------------------------------
# Annotated semantics


def eval_annotated(l: Query, db: Database, ix: IndexFn = CANONICAL) -> Bag:
    """Nested value whose bag elements carry ``ix`` of their canonical index."""

    def query(q: Query, env: Mapping[str, Any], iota: tuple) -> Bag:
        items: list[Any] = []
        anns: list[Any] = []
        for c in q.comps:
            for j, e in enumerate(bindings(c, env, db), 1):
                here = iota + (j,)
                items.append(nterm(c.body, e, here))
                anns.append(ix(Index(c.tag, here)))
        return Bag(items, anns)

    def nterm(t: Any, env: Mapping[str, Any], iota: tuple) -> Any:
        if isinstance(t, Query):
            return query(t, env, iota)
        if isinstance(t, Record):
            return Rec((label, nterm(f, env, iota)) for label, f in t.fields)
        return eval_base(t, env, db)

    return query(l, {}, (1,))


def indexes_along(path: tuple, v: Any) -> list[Any]:
    """Annotations met at ``path`` of an annotated value."""
    if not path:
        if not isinstance(v, Bag):
            raise TypeError("path does not end at a bag")
        return list(v.annotations or ())
    step, rest = path[0], path[1:]
    if step == DOWN:
        return [a for x in v.items for a in indexes_along(rest, x)]
    return indexes_along(rest, v[step])


def is_well_indexed(v: Any, paths: list[tuple]) -> bool:
    """Annotations along every path are pairwise distinct."""
    for p in paths:
        anns = indexes_along(p, v)
        if len(set(anns)) != len(anns):
            return False
    return True


# ---------------------------------------------------------------------------
# Shredded semantics


def eval_shredded(
    m: SQuery, db: Database, ix: IndexFn = CANONICAL, env: Mapping[str, Any] | None = None
) -> list[ShreddedRow]:
    """Rows ``⟨outer index, payload⟩``, each annotated with its own index."""
    out: list[ShreddedRow] = []

    def comp(c: Any, env: Mapping[str, Any], iota: tuple) -> None:
        if isinstance(c, SReturn):
            outer = ix(Index(c.outer.tag, iota[:-1]))
            out.append(ShreddedRow(outer, inner(c.inner, env, iota), ix(Index(c.tag, iota))))
            return
        for j, e in enumerate(bindings(c, env, db), 1):
            comp(c.body, e, iota + (j,))

    def inner(n: Any, env: Mapping[str, Any], iota: tuple) -> Any:
        if isinstance(n, IndexRef):
            if n.dyn != DOWN_DYN:
                raise IndexUndefined("outer index reference inside a payload")
            return ix(Index(n.tag, iota))
        if isinstance(n, Record):
            return Rec((label, inner(f, env, iota)) for label, f in n.fields)
        return eval_base(n, env, db)

    for c in m.comps:
        comp(c, dict(env or {}), (1,))
    return out


# ---------------------------------------------------------------------------
# Let-inserted semantics


def eval_letinserted(m: LQuery, db: Database, env: Mapping[str, Any] | None = None) -> list[Any]:
    """Rows of a let-inserted query; indexes appear as ``⟨tag, position⟩`` records."""
    env = dict(env or {})
    return [row for c in m.comps for row in _lcomp_rows(c, env, db)]


def _lcomp_rows(c: LComp, env: Mapping[str, Any], db: Database) -> Iterator[Any]:
    let_rows = None
    if c.outer is not None:
        let_rows = list(_lsub_rows(c.outer, env, db, None))
    yield from _lsub_rows(c.inner, env, db, let_rows)


def _lsub_rows(s: LSub, env: Mapping[str, Any], db: Database, let_rows: list[Any] | None) -> Iterator[Any]:
    for i, e in enumerate(bindings(s, env, db, let_rows), 1):
        yield _linner(s.body, e, i, db)


def _linner(n: Any, env: Mapping[str, Any], i: int, db: Database) -> Any:
    if isinstance(n, IndexPrim):
        return i
    if isinstance(n, Record):
        return Rec((label, _linner(f, env, i, db)) for label, f in n.fields)
    return eval_base(n, env, db)


# ---------------------------------------------------------------------------
# Conversions used to compare layers


def decode_index_pairs(v: Any, t: Any) -> Any:
    """Replace ``⟨tag, position⟩`` records by flat :class:`Index` values
    wherever the shredded type ``t`` has an index."""
    if isinstance(t, IndexT):
        return Index(v["#1"], v["#2"])
    if isinstance(t, RecordT):
        return Rec((label, decode_index_pairs(v[label], ft)) for label, ft in t.fields)
    return v


def letinserted_rows_to_shredded(rows: list[Any], shredded_type: BagT) -> list[ShreddedRow]:
    """Let-inserted result rows as :class:`ShreddedRow` values (no inner annotation)."""
    payload_t = shredded_type.elem.field_type("#2")
    return [ShreddedRow(decode_index_pairs(r["#1"], INDEX), decode_index_pairs(r["#2"], payload_t)) for r in rows]
