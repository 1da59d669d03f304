"""Concrete syntax, schema/data loading and the typechecker.

Grammar (``--`` starts a line comment)::

    program  ::= binding* expr
    binding  ::= 'fun' IDENT '(' [IDENT {',' IDENT}] ')' '=' expr [';']
    expr     ::= 'for' '(' [gen {',' gen}] ')' ['where' or] expr
               | 'if' expr 'then' expr 'else' expr
               | 'fun' '(' [param {',' param}] ')' '->' expr
               | or {'++' or}
    gen      ::= IDENT '<-' expr
    param    ::= IDENT [':' type]
    or       ::= and {'||' and}
    and      ::= not {'&&' not}
    not      ::= 'not' not | cmp
    cmp      ::= add [('=' | '<>' | '<' | '>' | '<=' | '>=') add]
    add      ::= mul {('+' | '-') mul}
    mul      ::= post {'*' post}
    post     ::= atom {'.' (IDENT | INT) | '(' [expr {',' expr}] ')'}
    atom     ::= INT | '-' INT | STRING | 'true' | 'false' | IDENT
               | '(' ')' | '(' expr ')' | '(' expr ',' expr {',' expr} ')'
               | '{' [label '=' expr {',' label '=' expr}] '}' | '[' ']'
               | 'return' or | 'empty' '(' expr ')' | 'table' IDENT
               | 'for' ... | 'if' ... | 'fun' ...

``f(a, b)`` is curried application ``f(a)(b)``; ``f()`` is ``f`` itself, so a
zero-parameter binding is a plain definition.  Tuples ``(a, b)`` are records
with labels ``1``, ``2``.  Free identifiers naming a schema table denote that
table.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .ast import (
    ANY,
    BASE_TYPES,
    BOOL,
    INT,
    STRING,
    AnyT,
    App,
    BagT,
    BaseT,
    Const,
    Database,
    Empty,
    For,
    FunT,
    If,
    IsEmpty,
    Lam,
    NameSupply,
    PrimApp,
    Project,
    Record,
    RecordT,
    Schema,
    Singleton,
    Table,
    TableSchema,
    Union,
    Var,
    has_functions,
    pos_label,
    resolve_any,
    substitute,
)
from .errors import NotFlatNested, QuerySyntaxError, QueryTypeError, SchemaError

KEYWORDS = {"for", "where", "return", "if", "then", "else", "fun", "empty", "table", "true", "false", "not"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym><-|->|<>|<=|>=|&&|\|\||\+\+|[(){}\[\],.=<>+\-*:;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # int | string | ident | kw | sym | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        col = pos - line_start + 1
        if kind == "ident" and chunk in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass(frozen=True)
class Binding:
    name: str
    params: tuple[str, ...]
    body: Any


@dataclass(frozen=True)
class SourceQuery:
    bindings: tuple[Binding, ...]
    main: Any
    text: str = field(default="", compare=False, repr=False)
    filename: str | None = field(default=None, compare=False)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("kw", "sym") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        return self.advance()

    def ident(self) -> str:
        if self.tok.kind != "ident":
            self.fail("identifier")
        return self.advance().text

    def fail(self, expected: str) -> None:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise QuerySyntaxError(f"expected {expected}, found {found}", t.line, t.col, expected)

    # program
    def program(self) -> SourceQuery:
        bindings = []
        while self.at("fun") and self.peek().kind == "ident":
            bindings.append(self.binding())
        main = self.expr()
        if self.tok.kind != "eof":
            self.fail("end of input")
        return SourceQuery(tuple(bindings), main)

    def binding(self) -> Binding:
        self.expect("fun")
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident())
            while self.at(","):
                self.advance()
                params.append(self.ident())
        self.expect(")")
        self.expect("=")
        body = self.expr()
        if self.at(";"):
            self.advance()
        return Binding(name, tuple(params), body)

    # expressions
    def expr(self) -> Any:
        if self.at("for"):
            return self.for_expr()
        if self.at("if"):
            return self.if_expr()
        if self.at("fun"):
            return self.lambda_expr()
        return self.union()

    def for_expr(self) -> Any:
        start = self.expect("for")
        self.expect("(")
        gens = []
        if not self.at(")"):
            gens.append(self.generator())
            while self.at(","):
                self.advance()
                gens.append(self.generator())
        self.expect(")")
        cond = None
        if self.at("where"):
            self.advance()
            cond = self.or_()
        body = self.expr()
        if cond is not None:
            body = If(cond, body, Empty(), pos=cond.pos)
        for var, source, pos in reversed(gens):
            body = For(var, source, body, pos=pos)
        if not gens:
            return body
        return For(body.var, body.source, body.body, pos=(start.line, start.col))

    def generator(self) -> tuple[str, Any, tuple[int, int]]:
        t = self.tok
        var = self.ident()
        self.expect("<-")
        return var, self.expr(), (t.line, t.col)

    def if_expr(self) -> Any:
        t = self.expect("if")
        cond = self.expr()
        self.expect("then")
        then = self.expr()
        self.expect("else")
        else_ = self.expr()
        return If(cond, then, else_, pos=(t.line, t.col))

    def lambda_expr(self) -> Any:
        t = self.expect("fun")
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                self.advance()
                params.append(self.param())
        self.expect(")")
        self.expect("->")
        body = self.expr()
        if not params:
            return body
        for name, ty in reversed(params):
            body = Lam(name, body, ty, pos=(t.line, t.col))
        return body

    def param(self) -> tuple[str, Any]:
        name = self.ident()
        ty = None
        if self.at(":"):
            self.advance()
            ty = self.type_()
        return name, ty

    def union(self) -> Any:
        left = self.or_()
        while self.at("++"):
            t = self.advance()
            left = Union(left, self.or_(), pos=(t.line, t.col))
        return left

    def or_(self) -> Any:
        left = self.and_()
        while self.at("||"):
            t = self.advance()
            left = PrimApp("||", (left, self.and_()), pos=(t.line, t.col))
        return left

    def and_(self) -> Any:
        left = self.not_()
        while self.at("&&"):
            t = self.advance()
            left = PrimApp("&&", (left, self.not_()), pos=(t.line, t.col))
        return left

    def not_(self) -> Any:
        if self.at("not"):
            t = self.advance()
            return PrimApp("not", (self.not_(),), pos=(t.line, t.col))
        return self.cmp()

    def cmp(self) -> Any:
        left = self.add()
        for op in ("=", "<>", "<=", ">=", "<", ">"):
            if self.at(op):
                t = self.advance()
                return PrimApp(op, (left, self.add()), pos=(t.line, t.col))
        return left

    def add(self) -> Any:
        left = self.mul()
        while self.at("+") or self.at("-"):
            t = self.advance()
            left = PrimApp(t.text, (left, self.mul()), pos=(t.line, t.col))
        return left

    def mul(self) -> Any:
        left = self.post()
        while self.at("*"):
            t = self.advance()
            left = PrimApp("*", (left, self.post()), pos=(t.line, t.col))
        return left

    def post(self) -> Any:
        term = self.atom()
        while True:
            if self.at("."):
                t = self.advance()
                term = Project(term, self.label(), pos=(t.line, t.col))
            elif self.at("("):
                t = self.advance()
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                for a in args:
                    term = App(term, a, pos=(t.line, t.col))
            else:
                return term

    def label(self) -> str:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return pos_label(int(t.text))
        return self.ident()

    def atom(self) -> Any:
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "int":
            self.advance()
            return Const(int(t.text), pos=pos)
        if t.kind == "string":
            self.advance()
            return Const(json.loads(t.text), pos=pos)
        if t.kind == "ident":
            self.advance()
            return Var(t.text, pos=pos)
        if self.at("-") and self.peek().kind == "int":
            self.advance()
            return Const(-int(self.advance().text), pos=pos)
        if self.at("true") or self.at("false"):
            self.advance()
            return Const(t.text == "true", pos=pos)
        if self.at("("):
            self.advance()
            if self.at(")"):
                self.advance()
                return Record((), pos=pos)
            first = self.expr()
            if self.at(","):
                elems = [first]
                while self.at(","):
                    self.advance()
                    elems.append(self.expr())
                self.expect(")")
                return Record(tuple((pos_label(i), e) for i, e in enumerate(elems, 1)), pos=pos)
            self.expect(")")
            return first
        if self.at("{"):
            self.advance()
            fields = []
            if not self.at("}"):
                fields.append(self.field())
                while self.at(","):
                    self.advance()
                    fields.append(self.field())
            self.expect("}")
            labels = [label for label, _ in fields]
            if len(set(labels)) != len(labels):
                raise QuerySyntaxError("duplicate record label", t.line, t.col)
            return Record(tuple(fields), pos=pos)
        if self.at("["):
            self.advance()
            self.expect("]")
            return Empty(pos=pos)
        if self.at("return"):
            self.advance()
            return Singleton(self.or_(), pos=pos)
        if self.at("empty"):
            self.advance()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return IsEmpty(arg, pos=pos)
        if self.at("table"):
            self.advance()
            return Table(self.ident(), pos=pos)
        if self.at("for") or self.at("if") or self.at("fun"):
            return self.expr()
        self.fail("expression")

    def field(self) -> tuple[str, Any]:
        label = self.label()
        self.expect("=")
        return label, self.expr()

    # types
    def type_(self) -> Any:
        left = self.type_atom()
        if self.at("->"):
            self.advance()
            return FunT(left, self.type_())
        return left

    def type_atom(self) -> Any:
        if self.at("["):
            self.advance()
            elem = self.type_()
            self.expect("]")
            return BagT(elem)
        if self.at("{"):
            self.advance()
            fields = []
            if not self.at("}"):
                fields.append(self.type_field())
                while self.at(","):
                    self.advance()
                    fields.append(self.type_field())
            self.expect("}")
            return RecordT(tuple(fields))
        if self.at("("):
            self.advance()
            t = self.type_()
            self.expect(")")
            return t
        name = self.ident()
        if name == "Bag":
            return BagT(self.type_atom())
        if name not in BASE_TYPES:
            raise QuerySyntaxError(f"unknown type {name!r}", self.tok.line, self.tok.col, "type")
        return BASE_TYPES[name]

    def type_field(self) -> tuple[str, Any]:
        label = self.label()
        self.expect(":")
        return label, self.type_()


def parse_query(text: str, filename: str | None = None) -> SourceQuery:
    """Parse a query file: function bindings followed by one main expression."""
    q = _Parser(text).program()
    return SourceQuery(q.bindings, q.main, text, filename)


def parse_term(text: str) -> Any:
    """Parse a single expression (no bindings)."""
    p = _Parser(text)
    term = p.expr()
    if p.tok.kind != "eof":
        p.fail("end of input")
    return term


def parse_type(text: str) -> Any:
    p = _Parser(text)
    t = p.type_()
    if p.tok.kind != "eof":
        p.fail("end of input")
    return t


# ---------------------------------------------------------------------------
# Schema and data files


def parse_schema(text: str | Mapping[str, Any]) -> Schema:
    """Load ``{"tables": {name: {"columns": [[label, type], ...], "key": [...]}}}``."""
    obj = json.loads(text) if isinstance(text, str) else text
    if not isinstance(obj, dict) or not isinstance(obj.get("tables"), dict):
        raise SchemaError('schema must be an object with a "tables" map')
    tables = []
    for name, spec in obj["tables"].items():
        if not isinstance(spec, dict) or "columns" not in spec:
            raise SchemaError(f"table {name!r}: missing columns")
        columns = []
        for entry in spec["columns"]:
            if not (isinstance(entry, list) and len(entry) == 2):
                raise SchemaError(f"table {name!r}: column entries are [label, type] pairs")
            label, tname = entry
            if tname not in ("Int", "Bool", "String"):
                raise SchemaError(f"table {name!r}, column {label!r}: tables must be flat, got {tname!r}")
            if "#" in label:
                raise SchemaError(f"table {name!r}, column {label!r}: labels may not contain '#'")
            columns.append((label, BASE_TYPES[tname]))
        labels = [c for c, _ in columns]
        if len(set(labels)) != len(labels):
            raise SchemaError(f"table {name!r}: duplicate column labels")
        key = spec.get("key")
        if key is not None:
            if not key:
                raise SchemaError(f"table {name!r}: key must be nonempty")
            missing = [k for k in key if k not in labels]
            if missing:
                raise SchemaError(f"table {name!r}: key references missing columns {missing}")
            key = tuple(key)
        tables.append(TableSchema(name, tuple(columns), key))
    return Schema(tuple(tables))


def schema_to_json(schema: Schema) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for t in schema.tables:
        entry: dict[str, Any] = {"columns": [[c, ct.name] for c, ct in t.columns]}
        if t.key:
            entry["key"] = list(t.key)
        out[t.name] = entry
    return {"tables": out}


def parse_data(text: str | Mapping[str, Any], schema: Schema) -> Database:
    """Load ``{table: [row, ...]}`` and validate it against ``schema``."""
    obj = json.loads(text) if isinstance(text, str) else text
    if not isinstance(obj, dict):
        raise SchemaError("data must be an object mapping table names to row lists")
    return Database(schema, obj)


# ---------------------------------------------------------------------------
# Elaboration: inline bindings, resolve table names, rename binders apart


def elaborate(q: SourceQuery | Any, schema: Schema) -> Any:
    """Turn a parsed query into a closed core term.

    Bindings are inlined by substitution, free identifiers that name tables
    become :class:`Table` nodes and every binder receives a distinct name.
    """
    if isinstance(q, SourceQuery):
        defs: dict[str, Any] = {}
        for b in q.bindings:
            body = _inline(b.body, defs)
            for p in reversed(b.params):
                body = Lam(p, body)
            defs[b.name] = body
        term = _inline(q.main, defs)
    else:
        term = q
    term = _resolve_tables(term, schema, frozenset())
    return rename_apart(term)


def _inline(term: Any, defs: Mapping[str, Any]) -> Any:
    for name, value in defs.items():
        term = substitute(term, name, value)
    return term


def _resolve_tables(t: Any, schema: Schema, bound: frozenset[str]) -> Any:
    if isinstance(t, Var):
        if t.name in bound:
            return t
        if t.name in schema:
            return Table(t.name, pos=t.pos)
        raise QueryTypeError(f"{_where(t)}unbound variable {t.name!r}")
    if isinstance(t, (Const, Table, Empty)):
        return t
    if isinstance(t, PrimApp):
        return PrimApp(t.op, tuple(_resolve_tables(a, schema, bound) for a in t.args), t.pos)
    if isinstance(t, If):
        return If(*(_resolve_tables(x, schema, bound) for x in (t.cond, t.then, t.else_)), pos=t.pos)
    if isinstance(t, Lam):
        return Lam(t.param, _resolve_tables(t.body, schema, bound | {t.param}), t.param_type, t.pos)
    if isinstance(t, App):
        return App(_resolve_tables(t.fun, schema, bound), _resolve_tables(t.arg, schema, bound), t.pos)
    if isinstance(t, Record):
        return Record(tuple((label, _resolve_tables(f, schema, bound)) for label, f in t.fields), t.pos)
    if isinstance(t, Project):
        return Project(_resolve_tables(t.term, schema, bound), t.label, t.pos)
    if isinstance(t, Singleton):
        return Singleton(_resolve_tables(t.term, schema, bound), t.pos)
    if isinstance(t, IsEmpty):
        return IsEmpty(_resolve_tables(t.term, schema, bound), t.pos)
    if isinstance(t, Union):
        return Union(_resolve_tables(t.left, schema, bound), _resolve_tables(t.right, schema, bound), t.pos)
    if isinstance(t, For):
        return For(t.var, _resolve_tables(t.source, schema, bound), _resolve_tables(t.body, schema, bound | {t.var}), t.pos)
    raise TypeError(f"unexpected node {t!r}")


def rename_apart(term: Any, reserved: Iterable[str] = ()) -> Any:
    """Give every binder in ``term`` a distinct name (first occurrences keep theirs)."""
    from .ast import free_vars

    supply = NameSupply(set(free_vars(term)) | set(reserved))
    return _rename(term, {}, supply)


def _rename(t: Any, env: dict[str, str], supply: NameSupply) -> Any:
    if isinstance(t, Var):
        return Var(env.get(t.name, t.name), t.pos)
    if isinstance(t, (Const, Table, Empty)):
        return t
    if isinstance(t, PrimApp):
        return PrimApp(t.op, tuple(_rename(a, env, supply) for a in t.args), t.pos)
    if isinstance(t, If):
        return If(*(_rename(x, env, supply) for x in (t.cond, t.then, t.else_)), pos=t.pos)
    if isinstance(t, Lam):
        new = supply.fresh(t.param)
        return Lam(new, _rename(t.body, {**env, t.param: new}, supply), t.param_type, t.pos)
    if isinstance(t, App):
        return App(_rename(t.fun, env, supply), _rename(t.arg, env, supply), t.pos)
    if isinstance(t, Record):
        return Record(tuple((label, _rename(f, env, supply)) for label, f in t.fields), t.pos)
    if isinstance(t, Project):
        return Project(_rename(t.term, env, supply), t.label, t.pos)
    if isinstance(t, Singleton):
        return Singleton(_rename(t.term, env, supply), t.pos)
    if isinstance(t, IsEmpty):
        return IsEmpty(_rename(t.term, env, supply), t.pos)
    if isinstance(t, Union):
        return Union(_rename(t.left, env, supply), _rename(t.right, env, supply), t.pos)
    if isinstance(t, For):
        source = _rename(t.source, env, supply)
        new = supply.fresh(t.var)
        return For(new, source, _rename(t.body, {**env, t.var: new}, supply), t.pos)
    raise TypeError(f"unexpected node {t!r}")


# ---------------------------------------------------------------------------
# Typechecking


@dataclass(eq=False)
class _Pending:
    """An unannotated lambda, typed afresh at each application site."""

    lam: Lam
    env: dict[str, Any]


def _where(t: Any) -> str:
    pos = getattr(t, "pos", None)
    return f"{pos[0]}:{pos[1]}: " if pos else ""


def _show(t: Any) -> str:
    from .pretty import show_type

    if isinstance(t, _Pending):
        return "function"
    return show_type(t)


class Typechecker:
    """Syntax-directed checker for the nested calculus.

    Unannotated lambdas are checked at their application sites; this is what
    makes higher-order helpers such as ``filter(p, xs)`` typeable without
    annotations once bindings are inlined.
    """

    def __init__(self, schema: Schema):
        self.schema = schema
        self.depth = 0

    def synth(self, t: Any, env: Mapping[str, Any]) -> Any:
        if isinstance(t, Var):
            if t.name not in env:
                raise QueryTypeError(f"{_where(t)}unbound variable {t.name!r}")
            return env[t.name]
        if isinstance(t, Const):
            return t.type
        if isinstance(t, Table):
            if t.name not in self.schema:
                raise QueryTypeError(f"{_where(t)}unknown table {t.name!r}")
            return BagT(self.schema.table(t.name).row_type)
        if isinstance(t, PrimApp):
            return self._prim(t, [self.synth(a, env) for a in t.args])
        if isinstance(t, If):
            c = self.synth(t.cond, env)
            self._expect(t.cond, c, BOOL)
            return self._join(t, self.synth(t.then, env), self.synth(t.else_, env))
        if isinstance(t, Lam):
            if t.param_type is None:
                return _Pending(t, dict(env))
            res = self.synth(t.body, {**env, t.param: t.param_type})
            if isinstance(res, _Pending):
                raise QueryTypeError(f"{_where(t)}cannot infer the type of a returned function")
            return FunT(t.param_type, res)
        if isinstance(t, App):
            return self._apply(t, self.synth(t.fun, env), self.synth(t.arg, env))
        if isinstance(t, Record):
            return RecordT(tuple((label, self.synth(f, env)) for label, f in t.fields))
        if isinstance(t, Project):
            rt = self.synth(t.term, env)
            if isinstance(rt, AnyT):
                return ANY
            if not isinstance(rt, RecordT) or t.label not in rt.labels:
                raise QueryTypeError(f"{_where(t)}expected a record with field {t.label!r}, found {_show(rt)}")
            return rt.field_type(t.label)
        if isinstance(t, Empty):
            return BagT(ANY)
        if isinstance(t, Singleton):
            return BagT(self.synth(t.term, env))
        if isinstance(t, Union):
            lt, rt = self.synth(t.left, env), self.synth(t.right, env)
            self._expect_bag(t.left, lt)
            self._expect_bag(t.right, rt)
            return self._join(t, lt, rt)
        if isinstance(t, For):
            st = self.synth(t.source, env)
            self._expect_bag(t.source, st)
            bt = self.synth(t.body, {**env, t.var: st.elem})
            self._expect_bag(t.body, bt)
            return bt
        if isinstance(t, IsEmpty):
            self._expect_bag(t.term, self.synth(t.term, env))
            return BOOL
        raise QueryTypeError(f"unexpected node {t!r}")

    def _apply(self, t: Any, ft: Any, at: Any) -> Any:
        if isinstance(ft, _Pending):
            self.depth += 1
            if self.depth > 500:
                raise QueryTypeError(f"{_where(t)}function application nests too deeply")
            try:
                return self.synth(ft.lam.body, {**ft.env, ft.lam.param: at})
            finally:
                self.depth -= 1
        if isinstance(ft, FunT):
            if isinstance(at, _Pending):
                self._check_pending(t, at, ft.arg)
            else:
                self._join(t, ft.arg, at)
            return ft.res
        raise QueryTypeError(f"{_where(t)}expected a function, found {_show(ft)}")

    def _check_pending(self, t: Any, pf: _Pending, expected: Any) -> None:
        if not isinstance(expected, FunT):
            raise QueryTypeError(f"{_where(t)}expected {_show(expected)}, found function")
        res = self.synth(pf.lam.body, {**pf.env, pf.lam.param: expected.arg})
        self._join(t, expected.res, res)

    def _prim(self, t: PrimApp, args: list[Any]) -> Any:
        op = t.op
        arity = 1 if op == "not" else 2
        if len(args) != arity:
            raise QueryTypeError(f"{_where(t)}{op} expects {arity} arguments")
        if op in ("&&", "||", "not"):
            for a, at in zip(t.args, args):
                self._expect(a, at, BOOL)
            return BOOL
        if op in ("+", "-", "*"):
            for a, at in zip(t.args, args):
                self._expect(a, at, INT)
            return INT
        if op in ("=", "<>", "<", ">", "<=", ">="):
            allowed = (INT, STRING, BOOL) if op in ("=", "<>") else (INT, STRING)
            at = self._join(t, args[0], args[1])
            if isinstance(at, AnyT):
                return BOOL
            if at not in allowed:
                raise QueryTypeError(
                    f"{_where(t)}{op} expects arguments of type {' or '.join(x.name for x in allowed)}, found {_show(at)}"
                )
            return BOOL
        raise QueryTypeError(f"{_where(t)}unknown primitive {op!r}")

    def _expect(self, t: Any, found: Any, expected: Any) -> None:
        if isinstance(found, AnyT):
            return
        if found != expected:
            raise QueryTypeError(f"{_where(t)}expected {_show(expected)}, found {_show(found)}")

    def _expect_bag(self, t: Any, found: Any) -> None:
        if not isinstance(found, BagT):
            raise QueryTypeError(f"{_where(t)}expected a bag, found {_show(found)}")

    def _join(self, t: Any, a: Any, b: Any) -> Any:
        if isinstance(a, AnyT):
            return b
        if isinstance(b, AnyT):
            return a
        if isinstance(a, _Pending) or isinstance(b, _Pending):
            if a is b:
                return a
            raise QueryTypeError(f"{_where(t)}cannot infer the type of a function-valued branch")
        if isinstance(a, BaseT) and isinstance(b, BaseT):
            if a != b:
                raise QueryTypeError(f"{_where(t)}expected {_show(a)}, found {_show(b)}")
            return a
        if isinstance(a, BagT) and isinstance(b, BagT):
            return BagT(self._join(t, a.elem, b.elem))
        if isinstance(a, RecordT) and isinstance(b, RecordT) and set(a.labels) == set(b.labels):
            return RecordT(tuple((label, self._join(t, ft, b.field_type(label))) for label, ft in a.fields))
        if isinstance(a, FunT) and isinstance(b, FunT):
            return FunT(self._join(t, a.arg, b.arg), self._join(t, a.res, b.res))
        raise QueryTypeError(f"{_where(t)}expected {_show(a)}, found {_show(b)}")


def type_of(term: Any, schema: Schema, env: Mapping[str, Any] | None = None) -> Any:
    """Type of a core term; unresolved empty-bag element types stay as ``?``."""
    return Typechecker(schema).synth(term, dict(env or {}))


def typecheck(q: SourceQuery | Any, schema: Schema, env: Mapping[str, Any] | None = None) -> Any:
    """Type of the main expression, checked to be a flat-nested query result.

    Empty bags whose element type the query does not determine get the unit
    record as element type.
    """
    term = elaborate(q, schema) if isinstance(q, SourceQuery) else q
    t = type_of(term, schema, env)
    if isinstance(t, _Pending) or has_functions(t) or _has_pending(t):
        raise NotFlatNested("query result type contains a function")
    return resolve_any(t)


def _has_pending(t: Any) -> bool:
    if isinstance(t, _Pending):
        return True
    if isinstance(t, RecordT):
        return any(_has_pending(ft) for _, ft in t.fields)
    if isinstance(t, BagT):
        return _has_pending(t.elem)
    return False


def load_query(text: str, schema: Schema, filename: str | None = None) -> tuple[Any, Any]:
    """Parse, elaborate and typecheck; returns ``(core term, result type)``."""
    term = elaborate(parse_query(text, filename), schema)
    t = typecheck(term, schema)
    if not isinstance(t, BagT):
        raise QueryTypeError(f"a query must return a bag, found {_show(t)}")
    return term, t
