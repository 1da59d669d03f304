"""Hypothesis strategies: nested types, flat values and well-typed queries.

Queries are generated type-first.  A result type is drawn, then a term of
that type is built from comprehensions, unions, conditionals, beta-redexes
(including functions over bags), record projections and emptiness tests.
Binder names come from a small pool so that shadowing and capture happen,
and the pool includes ``z``, which later stages reserve.
"""

from __future__ import annotations

from typing import Any

from hypothesis import strategies as st

from qshred.ast import (
    BOOL,
    INT,
    STRING,
    UNIT,
    AnyT,
    App,
    BagT,
    BaseT,
    Const,
    Empty,
    For,
    If,
    IsEmpty,
    Lam,
    PrimApp,
    Project,
    Rec,
    Record,
    RecordT,
    Singleton,
    Table,
    Union,
    Var,
)
from qshred.datagen import generate_org_data, org_schema

SCHEMA = org_schema()
ROW_TYPES = {t.name: t.row_type for t in SCHEMA.tables}
NAMES = ("x", "y", "w", "z")
LABELS = ("a", "b", "c")
STRINGS = ("abstract", "buy", "call", "dept1", "dept2", "emp1", "emp3")

base_types = st.sampled_from([INT, BOOL, STRING])


def nested_types(max_leaves: int = 8, unit: Any = UNIT) -> st.SearchStrategy:
    """Flat-nested types: records, bags and base types (including unit)."""
    leaves = st.sampled_from([INT, BOOL, STRING, unit])

    def extend(inner: st.SearchStrategy) -> st.SearchStrategy:
        records = st.lists(inner, min_size=1, max_size=3).map(
            lambda ts: RecordT(tuple((LABELS[i], t) for i, t in enumerate(ts)))
        )
        return st.one_of(inner.map(BagT), records)

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def result_types() -> st.SearchStrategy:
    """Bag types whose elements are base values or records of base values and bags.

    Unit appears as the empty record, which is how ``{}`` is typed.
    """
    return nested_types(max_leaves=6, unit=RecordT(())).map(lambda t: t if isinstance(t, BagT) else BagT(t))


def record_flat_types() -> st.SearchStrategy:
    """Record-nested types without bags; positional and named labels, unit leaves."""
    leaves = st.sampled_from([INT, BOOL, STRING, UNIT])

    def extend(inner: st.SearchStrategy) -> st.SearchStrategy:
        def mk(ts: list, positional: bool) -> RecordT:
            labels = [f"#{i}" for i in range(1, len(ts) + 1)] if positional else LABELS[: len(ts)]
            return RecordT(tuple(zip(labels, ts)))

        return st.builds(mk, st.lists(inner, min_size=1, max_size=3), st.booleans())

    return st.recursive(leaves, extend, max_leaves=10)


def values_of(t: Any) -> st.SearchStrategy:
    if t == INT:
        return st.integers(-1000, 1000)
    if t == BOOL:
        return st.booleans()
    if t == STRING:
        return st.text(max_size=5)
    if t == UNIT:
        return st.just(Rec())
    if isinstance(t, RecordT):
        if not t.fields:
            return st.just(Rec())
        return st.tuples(*(values_of(ft) for _, ft in t.fields)).map(
            lambda vs: Rec(zip([label for label, _ in t.fields], vs))
        )
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Queries


class _Builder:
    def __init__(self, draw: Any, budget: int):
        self.draw = draw
        self.budget = budget

    def spend(self) -> bool:
        if self.budget <= 0:
            return False
        self.budget -= 1
        return True

    def name(self) -> str:
        return self.draw(st.sampled_from(NAMES))

    def bag(self, t: BagT, env: dict[str, Any]) -> Any:
        if not self.spend():
            return Empty() if self.draw(st.booleans()) else Singleton(self.elem(t.elem, env))
        kinds = ["return", "for", "for", "where", "union", "if", "empty", "beta", "bag-arg", "for-for"]
        if any(isinstance(ty, BagT) for ty in env.values()):
            kinds.append("for-var")
        kind = self.draw(st.sampled_from(kinds))
        if kind == "empty":
            return Empty()
        if kind == "return":
            return Singleton(self.elem(t.elem, env))
        if kind == "union":
            return Union(self.bag(t, env), self.bag(t, env))
        if kind == "if":
            return If(self.base(BOOL, env), self.bag(t, env), self.bag(t, env))
        if kind == "beta":
            b = self.draw(base_types)
            v = self.name()
            return App(Lam(v, self.bag(t, {**env, v: b})), self.base(b, env))
        if kind == "bag-arg":
            table = self.draw(st.sampled_from(sorted(ROW_TYPES)))
            v = self.name()
            return App(Lam(v, self.bag(t, {**env, v: BagT(ROW_TYPES[table])})), Table(table))
        table = self.draw(st.sampled_from(sorted(ROW_TYPES)))
        row = ROW_TYPES[table]
        source: Any = Table(table)
        if kind == "for-for":
            source = self.bag(BagT(row), env)
        elif kind == "for-var":
            v, row_bag = self.draw(st.sampled_from([(k, ty) for k, ty in sorted(env.items()) if isinstance(ty, BagT)]))
            source, row = Var(v), row_bag.elem
        x = self.name()
        inner = {**env, x: row}
        body = self.bag(t, inner)
        if kind == "where":
            body = If(self.base(BOOL, inner), body, Empty())
        return For(x, source, body)

    def elem(self, t: Any, env: dict[str, Any]) -> Any:
        if isinstance(t, BagT):
            return self.bag(t, env)
        if isinstance(t, RecordT):
            rec = Record(tuple((label, self.elem(ft, env)) for label, ft in t.fields))
            if self.budget > 0 and self.draw(st.integers(0, 5)) == 0:
                # project the record back out of a wider one
                wider = Record((("wrap", rec), ("other", Const(0))))
                return Project(wider, "wrap")
            if self.budget > 0 and not _has_bag(t) and self.draw(st.integers(0, 5)) == 0:
                alt = Record(tuple((label, self.elem(ft, env)) for label, ft in t.fields))
                return If(self.base(BOOL, env), rec, alt)
            return rec
        return self.base(t, env)

    def base(self, t: BaseT, env: dict[str, Any]) -> Any:
        options = ["const"]
        projs = [(v, c) for v, ty in sorted(env.items()) if isinstance(ty, RecordT) for c, ct in ty.fields if ct == t]
        vars_ = [v for v, ty in sorted(env.items()) if ty == t]
        if projs:
            options += ["proj", "proj"]
        if vars_:
            options.append("var")
        if self.budget > 0:
            options += ["prim", "if"]
            if t == BOOL:
                options += ["cmp", "cmp", "empty"]
        kind = self.draw(st.sampled_from(options))
        if kind == "proj":
            v, c = self.draw(st.sampled_from(projs))
            return Project(Var(v), c)
        if kind == "var":
            return Var(self.draw(st.sampled_from(vars_)))
        if kind == "if":
            self.spend()
            return If(self.base(BOOL, env), self.base(t, env), self.base(t, env))
        if kind == "prim":
            self.spend()
            if t == INT:
                op = self.draw(st.sampled_from(["+", "-", "*"]))
                if op == "*":
                    # one small factor keeps products inside 64-bit SQL integers
                    return PrimApp(op, (self.base(INT, env), Const(self.draw(st.integers(-3, 3)))))
                return PrimApp(op, (self.base(INT, env), self.base(INT, env)))
            if t == BOOL:
                op = self.draw(st.sampled_from(["&&", "||", "not"]))
                if op == "not":
                    return PrimApp(op, (self.base(BOOL, env),))
                return PrimApp(op, (self.base(BOOL, env), self.base(BOOL, env)))
        if kind == "cmp":
            self.spend()
            at = self.draw(st.sampled_from([INT, STRING, BOOL]))
            ops = ["=", "<>"] if at == BOOL else ["=", "<>", "<", ">", "<=", ">="]
            op = self.draw(st.sampled_from(ops))
            return PrimApp(op, (self.base(at, env), self.base(at, env)))
        if kind == "empty":
            self.spend()
            return IsEmpty(self.bag(self.draw(result_types()), env))
        return Const(self.const(t))

    def const(self, t: BaseT) -> Any:
        if t == INT:
            return self.draw(st.sampled_from([0, 1, 2, 900, 1000, 50000, 2000000]))
        if t == BOOL:
            return self.draw(st.booleans())
        return self.draw(st.sampled_from(STRINGS))


def _has_bag(t: Any) -> bool:
    if isinstance(t, BagT):
        return True
    if isinstance(t, RecordT):
        return any(_has_bag(ft) for _, ft in t.fields)
    return False


@st.composite
def typed_queries(draw: Any, budget: int = 12) -> tuple[Any, BagT]:
    """A closed core term over the organisation schema with its result type."""
    t = draw(result_types())
    size = draw(st.integers(1, budget))
    return _Builder(draw, size).bag(t, {}), t


def databases(max_departments: int = 3) -> st.SearchStrategy:
    return st.builds(
        lambda n, seed: generate_org_data(n, seed, mean_employees=2, mean_contacts=1),
        st.integers(1, max_departments),
        st.integers(0, 10_000),
    )


def agrees(inferred: Any, t: Any) -> bool:
    """``inferred`` equals ``t`` except where an empty bag leaves the element type open."""
    if isinstance(inferred, AnyT):
        return True
    if isinstance(inferred, BagT) and isinstance(t, BagT):
        return agrees(inferred.elem, t.elem)
    if isinstance(inferred, RecordT) and isinstance(t, RecordT):
        return inferred.labels == t.labels and all(agrees(a, b) for (_, a), (_, b) in zip(inferred.fields, t.fields))
    return inferred == t
