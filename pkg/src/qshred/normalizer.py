"""Normalisation of flat-nested queries into unions of comprehensions.

Three stages:

1. :func:`symbolic_eval` applies beta rules and commuting conversions until no
   redex remains;
2. :func:`hoist_ifs` lifts conditionals out of primitive arguments, record
   fields, union operands and singleton bodies;
3. :func:`split` walks the result type and turns the term into a
   :class:`~qshred.ast.Query`, moving conditionals into comprehension guards
   and eta-expanding tables and row variables.

Stages 1 and 2 alternate until neither applies: hoisting a conditional out of
a primitive that sits in a condition position creates a new commuting redex.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

from .ast import (
    TRUE,
    UNIT,
    App,
    BagT,
    BaseT,
    Comprehension,
    Const,
    Empty,
    For,
    Generator,
    If,
    IsEmpty,
    Lam,
    NameSupply,
    PrimApp,
    Project,
    Query,
    Record,
    RecordT,
    Schema,
    Singleton,
    Table,
    Union,
    Var,
    all_names,
    conj,
    free_vars,
    substitute,
    term_size,
)
from .errors import InternalNonTermination, NotNormalInput

LET_RESERVED = frozenset({"z"})


@dataclass
class RewriteTrace:
    """Rules applied during normalisation, as ``(stage, rule, location)``."""

    steps: list[tuple[str, str, str]] = field(default_factory=list)

    def record(self, stage: str, rule: str, location: str) -> None:
        self.steps.append((stage, rule, location))

    def __len__(self) -> int:
        return len(self.steps)

    def dump(self) -> str:
        return "\n".join(f"[{stage}] {rule} at {loc or 'root'}" for stage, rule, loc in self.steps)


class _Rewriter:
    def __init__(self, term: Any, trace: RewriteTrace | None, fuel: int | None):
        self.supply = NameSupply(all_names(term))
        self.trace = trace
        self.fuel = fuel if fuel is not None else 10 * term_size(term) ** 2 + 100

    def step(self, stage: str, rule: str, loc: str) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise InternalNonTermination(f"normalisation exceeded its step budget in stage {stage}")
        if self.trace is not None:
            self.trace.record(stage, rule, loc)

    def fix(self, t: Any, stage: str, root: Callable[[Any], tuple[str, Any] | None]) -> Any:
        while True:
            t, changed = self.pass_(t, stage, root, "")
            if not changed:
                return t

    def pass_(self, t: Any, stage: str, root: Callable, loc: str) -> tuple[Any, bool]:
        """One leftmost-outermost sweep: rewrite at the node, then descend."""
        changed = False
        while True:
            r = root(t)
            if r is None:
                break
            rule, t = r
            self.step(stage, rule, loc)
            changed = True
        new, child_changed = self.descend(t, stage, root, loc)
        return new, changed or child_changed

    def descend(self, t: Any, stage: str, root: Callable, loc: str) -> tuple[Any, bool]:
        def sub(x: Any, name: str) -> tuple[Any, bool]:
            return self.pass_(x, stage, root, f"{loc}.{name}" if loc else name)

        if isinstance(t, PrimApp):
            results = [sub(a, f"arg{i}") for i, a in enumerate(t.args)]
            if any(c for _, c in results):
                return PrimApp(t.op, tuple(x for x, _ in results), t.pos), True
            return t, False
        if isinstance(t, Record):
            results = [sub(f, label) for label, f in t.fields]
            if any(c for _, c in results):
                return Record(tuple((label, x) for (label, _), (x, _) in zip(t.fields, results)), t.pos), True
            return t, False
        if isinstance(t, If):
            (c, c1), (a, c2), (b, c3) = sub(t.cond, "cond"), sub(t.then, "then"), sub(t.else_, "else")
            return (If(c, a, b, t.pos), True) if c1 or c2 or c3 else (t, False)
        if isinstance(t, Lam):
            body, c = sub(t.body, "body")
            return (Lam(t.param, body, t.param_type, t.pos), True) if c else (t, False)
        if isinstance(t, App):
            (f, c1), (a, c2) = sub(t.fun, "fun"), sub(t.arg, "arg")
            return (App(f, a, t.pos), True) if c1 or c2 else (t, False)
        if isinstance(t, Project):
            x, c = sub(t.term, "record")
            return (Project(x, t.label, t.pos), True) if c else (t, False)
        if isinstance(t, Singleton):
            x, c = sub(t.term, "elem")
            return (Singleton(x, t.pos), True) if c else (t, False)
        if isinstance(t, IsEmpty):
            x, c = sub(t.term, "empty")
            return (IsEmpty(x, t.pos), True) if c else (t, False)
        if isinstance(t, Union):
            (a, c1), (b, c2) = sub(t.left, "left"), sub(t.right, "right")
            return (Union(a, b, t.pos), True) if c1 or c2 else (t, False)
        if isinstance(t, For):
            (s, c1), (b, c2) = sub(t.source, "source"), sub(t.body, "body")
            return (For(t.var, s, b, t.pos), True) if c1 or c2 else (t, False)
        return t, False

    # -- stage c ------------------------------------------------------------

    def c_root(self, t: Any) -> tuple[str, Any] | None:
        if isinstance(t, App):
            f = t.fun
            if isinstance(f, Lam):
                return "beta-fun", substitute(f.body, f.param, t.arg, self.supply)
            if isinstance(f, If):
                return "if-app", If(f.cond, App(f.then, t.arg), App(f.else_, t.arg))
            return None
        if isinstance(t, Project):
            r = t.term
            if isinstance(r, Record):
                try:
                    return "beta-record", r.get(t.label)
                except KeyError:
                    raise NotNormalInput(f"projection of missing field {t.label!r}") from None
            if isinstance(r, If):
                return "if-project", If(r.cond, Project(r.then, t.label), Project(r.else_, t.label))
            return None
        if isinstance(t, If):
            c = t.cond
            if c == TRUE:
                return "beta-if-true", t.then
            if c == Const(False):
                return "beta-if-false", t.else_
            if isinstance(c, If):
                return "if-if", If(c.cond, If(c.then, t.then, t.else_), If(c.else_, t.then, t.else_))
            return None
        if isinstance(t, For):
            s = t.source
            if isinstance(s, Singleton):
                return "beta-for", substitute(t.body, t.var, s.term, self.supply)
            if isinstance(s, For):
                inner_var, inner_body = s.var, s.body
                if inner_var in free_vars(t.body) or inner_var == t.var:
                    new = self.supply.fresh(inner_var)
                    inner_body = substitute(inner_body, inner_var, Var(new), self.supply)
                    inner_var = new
                return "for-for", For(inner_var, s.source, For(t.var, inner_body, t.body))
            if isinstance(s, If):
                return "for-if", If(s.cond, For(t.var, s.then, t.body), For(t.var, s.else_, t.body))
            if isinstance(s, Empty):
                return "for-empty", Empty()
            if isinstance(s, Union):
                return "for-union", Union(For(t.var, s.left, t.body), For(t.var, s.right, t.body))
            return None
        return None

    # -- stage h ------------------------------------------------------------

    def h_root(self, t: Any) -> tuple[str, Any] | None:
        if isinstance(t, PrimApp):
            for i, a in enumerate(t.args):
                if isinstance(a, If):
                    def rebuild(x: Any, i: int = i) -> Any:
                        return PrimApp(t.op, t.args[:i] + (x,) + t.args[i + 1 :])

                    return "hoist-prim", If(a.cond, rebuild(a.then), rebuild(a.else_))
            return None
        if isinstance(t, Record):
            for i, (label, f) in enumerate(t.fields):
                if isinstance(f, If):
                    def rebuild(x: Any, i: int = i, label: str = label) -> Any:
                        return Record(t.fields[:i] + ((label, x),) + t.fields[i + 1 :])

                    return "hoist-record", If(f.cond, rebuild(f.then), rebuild(f.else_))
            return None
        if isinstance(t, Union):
            if isinstance(t.left, If):
                a = t.left
                return "hoist-union-left", If(a.cond, Union(a.then, t.right), Union(a.else_, t.right))
            if isinstance(t.right, If):
                a = t.right
                return "hoist-union-right", If(a.cond, Union(t.left, a.then), Union(t.left, a.else_))
            return None
        if isinstance(t, Singleton) and isinstance(t.term, If):
            a = t.term
            return "hoist-return", If(a.cond, Singleton(a.then), Singleton(a.else_))
        return None


def symbolic_eval(m: Any, trace: RewriteTrace | None = None, fuel: int | None = None) -> Any:
    """Normalise with respect to beta rules and commuting conversions."""
    rw = _Rewriter(m, trace, fuel)
    return rw.fix(m, "c", rw.c_root)


def hoist_ifs(m: Any, trace: RewriteTrace | None = None, fuel: int | None = None) -> Any:
    """Lift conditionals out of primitive, record, union and singleton frames."""
    rw = _Rewriter(m, trace, fuel)
    return rw.fix(m, "h", rw.h_root)


def _eval_and_hoist(m: Any, trace: RewriteTrace | None, fuel: int | None) -> Any:
    rw = _Rewriter(m, trace, fuel)
    while True:
        m = rw.fix(m, "c", rw.c_root)
        m, changed = rw.pass_(m, "h", rw.h_root, "")
        if not changed:
            return m
        m = rw.fix(m, "h", rw.h_root)


# ---------------------------------------------------------------------------
# Split


class _Splitter:
    def __init__(self, schema: Schema, used: set[str], trace: RewriteTrace | None):
        self.schema = schema
        self.used = used
        self.trace = trace
        self.counter = itertools.count()

    def note(self, rule: str) -> None:
        if self.trace is not None:
            self.trace.record("split", rule, "")

    def fresh_table_var(self) -> str:
        while True:
            name = f"_t{next(self.counter)}"
            if name not in self.used:
                self.used.add(name)
                return name

    def fresh(self, base: str) -> str:
        while True:
            name = f"{base}_s{next(self.counter)}"
            if name not in self.used:
                self.used.add(name)
                return name

    def split(self, m: Any, a: Any, env: dict[str, Any]) -> Any:
        if isinstance(a, BaseT):
            if a == UNIT and isinstance(m, Record) and not m.fields:
                return m
            return self.base(m, env)
        if isinstance(a, RecordT):
            if isinstance(m, Var):
                self.note("splitfield-var")
                return Record(tuple((label, self.split(Project(m, label), ft, env)) for label, ft in a.fields))
            if isinstance(m, Record):
                return Record(tuple((label, self.split(f, a.field_type(label), env)) for label, f in m.fields))
            raise NotNormalInput(f"record-typed term is neither a variable nor a record: {type(m).__name__}")
        if isinstance(a, BagT):
            return Query(tuple(self.splitbag(m, a.elem, (), TRUE, env)))
        raise NotNormalInput(f"cannot split at type {a!r}")

    def base(self, m: Any, env: dict[str, Any]) -> Any:
        if isinstance(m, Const):
            return m
        if isinstance(m, Project) and isinstance(m.term, Var):
            if m.term.name not in env:
                raise NotNormalInput(f"projection from unbound variable {m.term.name!r}")
            return m
        if isinstance(m, PrimApp):
            return PrimApp(m.op, tuple(self.base(x, env) for x in m.args))
        if isinstance(m, IsEmpty):
            from .frontend import type_of

            t = type_of(m.term, self.schema, env)
            if not isinstance(t, BagT):
                raise NotNormalInput("emptiness test of a non-bag")
            return IsEmpty(self.split(m.term, t, env))
        if isinstance(m, If):
            # a conditional of Bool type in condition position; encode it
            c = self.base(m.cond, env)
            return PrimApp("||", (conj(c, self.base(m.then, env)), conj(PrimApp("not", (c,)), self.base(m.else_, env))))
        raise NotNormalInput(f"not a base term: {type(m).__name__}")

    def splitbag(self, m: Any, a: Any, gens: tuple, guard: Any, env: dict[str, Any]) -> list[Comprehension]:
        if isinstance(m, Singleton):
            return [Comprehension(gens, guard, self.split(m.term, a, env))]
        if isinstance(m, For):
            if not isinstance(m.source, Table):
                raise NotNormalInput(f"generator over a non-table source: {type(m.source).__name__}")
            row = self.schema.table(m.source.name).row_type
            var, body = m.var, m.body
            if var in env or any(g.var == var for g in gens):
                # the guard built so far may mention the variable this generator shadows
                var = self.fresh(var)
                body = substitute(body, m.var, Var(var))
                self.note("split-rename")
            return self.splitbag(body, a, gens + (Generator(var, m.source.name),), guard, {**env, var: row})
        if isinstance(m, Table):
            self.note("splitbag-table")
            x = self.fresh_table_var()
            row = self.schema.table(m.name).row_type
            return [Comprehension(gens + (Generator(x, m.name),), guard, self.split(Var(x), a, {**env, x: row}))]
        if isinstance(m, Empty):
            return []
        if isinstance(m, Union):
            return self.splitbag(m.left, a, gens, guard, env) + self.splitbag(m.right, a, gens, guard, env)
        if isinstance(m, If):
            c = self.base(m.cond, env)
            return self.splitbag(m.then, a, gens, conj(guard, c), env) + self.splitbag(
                m.else_, a, gens, conj(guard, PrimApp("not", (c,))), env
            )
        raise NotNormalInput(f"not a bag term in normal position: {type(m).__name__}")


def split(m: Any, a: Any, schema: Schema, trace: RewriteTrace | None = None) -> Query:
    """Turn a c- and h-normal closed term of bag type ``a`` into a normal form."""
    if not isinstance(a, BagT):
        raise NotNormalInput("only bag-typed queries can be split")
    return _Splitter(schema, all_names(m), trace).split(m, a, {})


def normalize(m: Any, a: Any, schema: Schema, trace: RewriteTrace | None = None, fuel: int | None = None) -> Query:
    """Normal form of a closed flat-nested query ``m`` of type ``a``.

    Generator variables of the result are pairwise distinct and none is
    named ``z``, which the let-insertion stage reserves.
    """
    nf = split(_eval_and_hoist(m, trace, fuel), a, schema, trace)
    nf = rename_nf(nf)
    validate_nf(nf, schema)
    return nf


# ---------------------------------------------------------------------------
# Normal-form utilities


def rename_nf(q: Query, reserved: frozenset[str] = LET_RESERVED) -> Query:
    """Canonical generator names: each binder takes the first of ``x``,
    ``x_1``, ``x_2``, ... that shadows no enclosing binder and is not
    reserved.  Sibling branches may therefore reuse a variable."""
    return _rename_query(q, {}, frozenset(reserved))


def _rename_query(q: Query, env: dict[str, str], scope: frozenset[str]) -> Query:
    return Query(tuple(_rename_comp(c, env, scope) for c in q.comps))


def _rename_comp(c: Comprehension, env: dict[str, str], scope: frozenset[str]) -> Comprehension:
    env = dict(env)
    gens = []
    local: set[str] = set()
    for g in c.gens:
        new = _first_free(g.var, scope | local)
        local.add(new)
        env[g.var] = new
        gens.append(Generator(new, g.table))
    scope = scope | local
    return Comprehension(tuple(gens), _rename_nterm(c.guard, env, scope), _rename_nterm(c.body, env, scope), c.tag)


def _first_free(name: str, taken: frozenset[str] | set[str]) -> str:
    head, _, tail = name.rpartition("_")
    base = head if head and tail.isdigit() else name
    if base not in taken:
        return base
    for i in itertools.count(1):
        cand = f"{base}_{i}"
        if cand not in taken:
            return cand
    raise AssertionError("unreachable")


def _rename_nterm(t: Any, env: dict[str, str], scope: frozenset[str]) -> Any:
    if isinstance(t, Query):
        return _rename_query(t, env, scope)
    if isinstance(t, Record):
        return Record(tuple((label, _rename_nterm(f, env, scope)) for label, f in t.fields))
    if isinstance(t, Project) and isinstance(t.term, Var):
        return Project(Var(env.get(t.term.name, t.term.name)), t.label)
    if isinstance(t, PrimApp):
        return PrimApp(t.op, tuple(_rename_nterm(a, env, scope) for a in t.args))
    if isinstance(t, IsEmpty):
        return IsEmpty(_rename_nterm(t.term, env, scope))
    return t


def validate_nf(q: Any, schema: Schema | None = None) -> None:
    """Check the normal-form grammar; raises :class:`NotNormalInput`."""
    if not isinstance(q, Query):
        raise NotNormalInput(f"expected a union of comprehensions, found {type(q).__name__}")
    _validate_query(q, frozenset(), schema)


def is_normal(q: Any, schema: Schema | None = None) -> bool:
    try:
        validate_nf(q, schema)
    except NotNormalInput:
        return False
    return True


def _validate_query(q: Query, scope: frozenset[str], schema: Schema | None) -> None:
    for c in q.comps:
        if not isinstance(c, Comprehension):
            raise NotNormalInput(f"union member is not a comprehension: {type(c).__name__}")
        names = [g.var for g in c.gens]
        if len(set(names)) != len(names):
            raise NotNormalInput("generator variables of one comprehension must be distinct")
        for g in c.gens:
            if not isinstance(g, Generator):
                raise NotNormalInput("generators must range over tables")
            if schema is not None and g.table not in schema:
                raise NotNormalInput(f"generator over unknown table {g.table!r}")
        inner = scope | set(names)
        _validate_base(c.guard, inner, schema)
        _validate_nterm(c.body, inner, schema)


def _validate_nterm(t: Any, scope: frozenset[str], schema: Schema | None) -> None:
    if isinstance(t, Query):
        _validate_query(t, scope, schema)
    elif isinstance(t, Record):
        for _, f in t.fields:
            _validate_nterm(f, scope, schema)
    else:
        _validate_base(t, scope, schema)


def _validate_base(t: Any, scope: frozenset[str], schema: Schema | None) -> None:
    if isinstance(t, Const):
        return
    if isinstance(t, Project) and isinstance(t.term, Var):
        if t.term.name not in scope:
            raise NotNormalInput(f"projection from unbound variable {t.term.name!r}")
        return
    if isinstance(t, PrimApp):
        for a in t.args:
            _validate_base(a, scope, schema)
        return
    if isinstance(t, IsEmpty):
        if not isinstance(t.term, Query):
            raise NotNormalInput("emptiness test of a non-normal query")
        _validate_query(t.term, scope, schema)
        return
    raise NotNormalInput(f"not a base term: {type(t).__name__}")


def annotate(q: Query) -> Query:
    """Tag every comprehension with a distinct static tag 1, 2, ... (a, b, ...).

    Tags are issued in textual order: a comprehension, then the queries in its
    guard, then those in its body.
    """
    counter = itertools.count(1)

    def query(x: Query) -> Query:
        return Query(tuple(comp(c) for c in x.comps))

    def comp(c: Comprehension) -> Comprehension:
        tag = next(counter)
        guard = nterm(c.guard)
        return Comprehension(c.gens, guard, nterm(c.body), tag)

    def nterm(t: Any) -> Any:
        if isinstance(t, Query):
            return query(t)
        if isinstance(t, Record):
            return Record(tuple((label, nterm(f)) for label, f in t.fields))
        if isinstance(t, PrimApp):
            return PrimApp(t.op, tuple(nterm(a) for a in t.args))
        if isinstance(t, IsEmpty):
            return IsEmpty(nterm(t.term))
        return t

    return query(q)


def tags_of(q: Query) -> list[int]:
    """Static tags in annotation order."""
    out: list[int] = []

    def nterm(t: Any) -> None:
        if isinstance(t, Query):
            for c in t.comps:
                out.append(c.tag)
                nterm(c.guard)
                nterm(c.body)
        elif isinstance(t, Record):
            for _, f in t.fields:
                nterm(f)
        elif isinstance(t, PrimApp):
            for a in t.args:
                nterm(a)
        elif isinstance(t, IsEmpty):
            nterm(t.term)

    nterm(q)
    return out


def nf_to_term(q: Any) -> Any:
    """Embed a normal form back into the source calculus."""
    if isinstance(q, Query):
        if not q.comps:
            return Empty()
        terms = [nf_to_term(c) for c in q.comps]
        out = terms[0]
        for t in terms[1:]:
            out = Union(out, t)
        return out
    if isinstance(q, Comprehension):
        body: Any = Singleton(nf_to_term(q.body))
        if q.guard != TRUE:
            body = If(nf_to_term(q.guard), body, Empty())
        for g in reversed(q.gens):
            body = For(g.var, Table(g.table), body)
        return body
    if isinstance(q, Record):
        return Record(tuple((label, nf_to_term(f)) for label, f in q.fields))
    if isinstance(q, PrimApp):
        return PrimApp(q.op, tuple(nf_to_term(a) for a in q.args))
    if isinstance(q, IsEmpty):
        return IsEmpty(nf_to_term(q.term))
    return q


def canonical_nf(q: Query, keep_tags: bool = False) -> Query:
    """Representative of ``q`` up to variable names, tags and the operand
    order of ``&&`` and ``||`` chains."""
    counter = itertools.count()

    def query(x: Query, env: dict[str, str]) -> Query:
        return Query(tuple(comp(c, env) for c in x.comps))

    def comp(c: Comprehension, env: dict[str, str]) -> Comprehension:
        env = dict(env)
        gens = []
        for g in c.gens:
            env[g.var] = f"v{next(counter)}"
            gens.append(Generator(env[g.var], g.table))
        return Comprehension(tuple(gens), nterm(c.guard, env), nterm(c.body, env), c.tag if keep_tags else None)

    def nterm(t: Any, env: dict[str, str]) -> Any:
        if isinstance(t, Query):
            return query(t, env)
        if isinstance(t, Record):
            return Record(tuple((label, nterm(f, env)) for label, f in t.fields))
        if isinstance(t, Project) and isinstance(t.term, Var):
            return Project(Var(env.get(t.term.name, t.term.name)), t.label)
        if isinstance(t, PrimApp):
            if t.op in ("&&", "||"):
                ops = sorted((nterm(a, env) for a in _chain(t, t.op)), key=repr)
                out = ops[0]
                for o in ops[1:]:
                    out = PrimApp(t.op, (out, o))
                return out
            return PrimApp(t.op, tuple(nterm(a, env) for a in t.args))
        if isinstance(t, IsEmpty):
            return IsEmpty(nterm(t.term, env))
        return t

    return query(q, {})


def _chain(t: Any, op: str) -> list[Any]:
    if isinstance(t, PrimApp) and t.op == op:
        return _chain(t.args[0], op) + _chain(t.args[1], op)
    return [t]


def nf_equivalent(a: Query, b: Query) -> bool:
    """Structural equality modulo variable names, tags and operand order of
    conjunctions and disjunctions."""
    return canonical_nf(a) == canonical_nf(b)
