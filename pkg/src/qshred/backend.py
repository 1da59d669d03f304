"""From shredded queries to SQL.

Three steps, each a total function on the output of the previous one:

``let_insert``
    splits every shredded comprehension into a let-bound query that numbers
    the bindings of all but its last level, and a body that reads those
    numbers back as outer indexes and numbers its own bindings for the
    inner ones.
``flatten_query``
    removes nested records; column names join labels with ``#``.
``emit_sql``
    prints one statement per shredded query, with ``ROW_NUMBER()`` standing
    in for the ``index`` primitive.

Unflattening and the conversion of database rows back into shredded rows
live here as well, so that stitching can run on results fetched from a DBMS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .ast import (
    BOOL,
    INDEX,
    INT,
    LET_VAR,
    STRING,
    TOP,
    TRUE,
    UNIT,
    UNIT_VALUE,
    UP,
    BagT,
    BaseT,
    Const,
    Generator,
    Index,
    IndexPrim,
    IndexRef,
    IndexT,
    IsEmpty,
    LComp,
    LetGenerator,
    LQuery,
    LSub,
    PrimApp,
    Project,
    Rec,
    Record,
    RecordT,
    Schema,
    SFor,
    ShreddedRow,
    SQuery,
    Var,
    bound_vars,
    conj_all,
    is_pos_label,
    sfor_levels,
    tuple_term,
    tuple_type,
)
from .errors import ColumnMismatch, NameClashZ, QueryTypeError, SchemaError, UnflattenedInput
from .shredder import prim_type

SEP = "#"
BULLET = "•"

# ---------------------------------------------------------------------------
# Let-insertion


def let_insert(m: SQuery, schema: Schema) -> LQuery:
    """Let-inserted form of a shredded query.

    Raises :class:`NameClashZ` if some generator is already called ``z``.
    """
    if LET_VAR in bound_vars(m):
        raise NameClashZ(f"the variable name {LET_VAR!r} is reserved for let-bound rows")
    return LQuery(tuple(_let_comp(c, schema) for c in m.comps))


def _let_comp(comp: SFor, schema: Schema) -> LComp:
    levels, ret = sfor_levels(comp)
    if not levels:
        raise QueryTypeError("a shredded comprehension needs at least one for level")
    init, last = levels[:-1], levels[-1]
    outer_gens = tuple(g for level in init for g in level.gens)
    outer_guard = conj_all(level.guard for level in init)
    if not outer_gens and outer_guard == TRUE:
        up = tuple_term(Const(ret.outer.tag), Const(1))
        inner = LSub(last.gens, _ly(last.guard, {}), tuple_term(up, _ly(ret.inner, {})))
        return LComp(None, inner)
    ys = {g.var: i for i, g in enumerate(outer_gens, 1)}
    row = tuple_term(*(_expand(g, schema) for g in outer_gens))
    outer = LSub(outer_gens, _ly(outer_guard, {}), tuple_term(row, IndexPrim()))
    up = tuple_term(Const(ret.outer.tag), Project(Var(LET_VAR), "#2"))
    inner = LSub(
        (LetGenerator(LET_VAR),) + last.gens,
        _ly(last.guard, ys),
        tuple_term(up, _ly(ret.inner, ys)),
    )
    return LComp(outer, inner)


def _expand(g: Generator, schema: Schema) -> Record:
    return Record(tuple((c, Project(Var(g.var), c)) for c in schema.table(g.table).column_names))


def _ly(t: Any, ys: Mapping[str, int]) -> Any:
    """Redirect projections of outer generators to the let-bound row ``z``."""
    if isinstance(t, Project) and isinstance(t.term, Var):
        i = ys.get(t.term.name)
        if i is None:
            return t
        return Project(Project(Project(Var(LET_VAR), "#1"), f"#{i}"), t.label)
    if isinstance(t, PrimApp):
        return PrimApp(t.op, tuple(_ly(a, ys) for a in t.args))
    if isinstance(t, IsEmpty):
        return IsEmpty(_ly_query(t.term, ys))
    if isinstance(t, Record):
        return Record(tuple((label, _ly(f, ys)) for label, f in t.fields))
    if isinstance(t, IndexRef):
        if t.dyn == UP:
            raise QueryTypeError("outer index inside a payload")
        return tuple_term(Const(t.tag), IndexPrim())
    return t


def _ly_query(q: SQuery, ys: Mapping[str, int]) -> LQuery:
    comps = []
    for comp in q.comps:
        levels, ret = sfor_levels(comp)
        gens = tuple(g for level in levels for g in level.gens)
        guard = conj_all(_ly(level.guard, ys) for level in levels)
        up = tuple_term(Const(TOP), Const(1)) if ret.outer.tag == TOP else tuple_term(Const(ret.outer.tag), Const(1))
        comps.append(LComp(None, LSub(gens, guard, tuple_term(up, _ly(ret.inner, ys)))))
    return LQuery(tuple(comps))


def let_type(t: Any) -> Any:
    """Let-inserted counterpart of a shredded type: indexes become pairs of integers."""
    if isinstance(t, IndexT):
        return tuple_type(INT, INT)
    if isinstance(t, RecordT):
        return RecordT(tuple((label, let_type(ft)) for label, ft in t.fields))
    if isinstance(t, BagT):
        return BagT(let_type(t.elem))
    return t


def check_letinserted(q: LQuery, schema: Schema, env: Mapping[str, Any] | None = None) -> BagT:
    """Type of a (possibly flattened) let-inserted query; raises :class:`QueryTypeError`."""
    return _LetChecker(schema).query(q, dict(env or {}))


class _LetChecker:
    def __init__(self, schema: Schema):
        self.schema = schema

    def query(self, q: LQuery, env: dict[str, Any]) -> BagT:
        result = None
        for c in q.comps:
            t = self.comp(c, env)
            if result is not None and t != result:
                raise QueryTypeError(f"union branches disagree: {result} vs {t}")
            result = t
        return result if result is not None else BagT(tuple_type(tuple_type(INT, INT), RecordT(())))

    def comp(self, c: LComp, env: dict[str, Any]) -> BagT:
        let_row = self.sub(c.outer, env, None).elem if c.outer is not None else None
        return self.sub(c.inner, env, let_row)

    def sub(self, s: LSub, env: dict[str, Any], let_row: Any) -> BagT:
        env = dict(env)
        for g in s.gens:
            if isinstance(g, LetGenerator):
                if let_row is None:
                    raise QueryTypeError("generator over a let-bound query outside its let")
                env[g.var] = let_row
            else:
                env[g.var] = self.schema.table(g.table).row_type
        if self.base(s.guard, env) != BOOL:
            raise QueryTypeError("guard is not boolean")
        return BagT(self.inner(s.body, env))

    def inner(self, n: Any, env: dict[str, Any]) -> Any:
        if isinstance(n, IndexPrim):
            return INT
        if isinstance(n, Record):
            return RecordT(tuple((label, self.inner(f, env)) for label, f in n.fields))
        return self.base(n, env)

    def base(self, x: Any, env: dict[str, Any]) -> Any:
        if isinstance(x, Const):
            return x.type
        if isinstance(x, Var):
            if x.name not in env:
                raise QueryTypeError(f"unbound variable {x.name!r}")
            return env[x.name]
        if isinstance(x, Project):
            t = self.base(x.term, env)
            if not isinstance(t, RecordT) or x.label not in t.labels:
                raise QueryTypeError(f"no field {x.label!r}")
            return t.field_type(x.label)
        if isinstance(x, PrimApp):
            return prim_type(x.op, [self.base(a, env) for a in x.args])
        if isinstance(x, IsEmpty):
            self.query(x.term, env)
            return BOOL
        raise QueryTypeError(f"not a base term: {type(x).__name__}")


# ---------------------------------------------------------------------------
# Record flattening


def column_name(path: tuple[str, ...]) -> str:
    """Column for a leaf reached by ``path``; ``•`` for a bare base value."""
    if not path:
        return BULLET
    parts = []
    for i, label in enumerate(path):
        if is_pos_label(label):
            parts.append(("i" if i == 0 else "") + label[1:])
        else:
            parts.append(label)
    return SEP.join(parts)


def _leaves(t: Any, path: tuple[str, ...] = ()) -> list[tuple[tuple[str, ...], BaseT]]:
    if isinstance(t, RecordT):
        if not t.fields:
            return [(path, UNIT)]
        return [leaf for label, ft in t.fields for leaf in _leaves(ft, path + (label,))]
    if isinstance(t, BaseT):
        return [(path, t)]
    if isinstance(t, IndexT):
        raise UnflattenedInput("index types must be let-inserted before flattening")
    raise UnflattenedInput(f"cannot flatten {t!r}")


def flatten_type(t: Any) -> list[tuple[str, BaseT]]:
    """Columns of a record-nested flat type, in field order."""
    cols = [(column_name(p), bt) for p, bt in _leaves(t)]
    names = [c for c, _ in cols]
    if len(set(names)) != len(names):
        raise SchemaError(f"flattening produces duplicate columns: {names}")
    return cols


def check_labels(t: Any) -> None:
    """Reject labels the column naming cannot represent."""
    if isinstance(t, RecordT):
        for label, ft in t.fields:
            if SEP in label and not is_pos_label(label):
                raise SchemaError(f"label {label!r} contains the reserved separator {SEP!r}")
            check_labels(ft)
    elif isinstance(t, BagT):
        check_labels(t.elem)


def flatten_query(m: LQuery) -> LQuery:
    """Let-inserted query whose subqueries return flat records of columns."""
    return LQuery(tuple(_flatten_comp(c) for c in m.comps))


def _flatten_comp(c: LComp) -> LComp:
    outer = _flatten_sub(c.outer) if c.outer is not None else None
    return LComp(outer, _flatten_sub(c.inner))


def _flatten_sub(s: LSub) -> LSub:
    cols = _flatten_inner(s.body, ())
    names = [n for n, _ in cols]
    if len(set(names)) != len(names):
        raise SchemaError(f"flattening produces duplicate columns: {names}")
    return LSub(s.gens, _flatten_base(s.guard), Record(tuple(cols)))


def _flatten_inner(n: Any, path: tuple[str, ...]) -> list[tuple[str, Any]]:
    if isinstance(n, Record):
        if not n.fields:
            return [(column_name(path), Const(UNIT_VALUE))]
        return [col for label, f in n.fields for col in _flatten_inner(f, path + (label,))]
    if isinstance(n, IndexPrim):
        return [(column_name(path), n)]
    return [(column_name(path), _flatten_base(n))]


def _flatten_base(x: Any) -> Any:
    if isinstance(x, Project):
        labels = []
        node: Any = x
        while isinstance(node, Project):
            labels.append(node.label)
            node = node.term
        if not isinstance(node, Var):
            raise UnflattenedInput("projection from a non-variable")
        labels.reverse()
        if node.name == LET_VAR or len(labels) > 1:
            return Project(node, column_name(tuple(labels)))
        return x
    if isinstance(x, PrimApp):
        return PrimApp(x.op, tuple(_flatten_base(a) for a in x.args))
    if isinstance(x, IsEmpty):
        return IsEmpty(flatten_query(x.term))
    return x


def unflatten_values(rows: Iterable[Mapping[str, Any]], t: Any) -> list[Any]:
    """Rebuild record-nested values of type ``t`` from flat rows."""
    leaves = _leaves(t)
    expected = {column_name(p) for p, _ in leaves}
    out = []
    for r in rows:
        if set(r) != expected:
            raise ColumnMismatch(f"row has columns {sorted(r)}, expected {sorted(expected)}")
        out.append(_unflatten(r, t, ()))
    return out


def _unflatten(r: Mapping[str, Any], t: Any, path: tuple[str, ...]) -> Any:
    if isinstance(t, RecordT):
        if not t.fields:
            return UNIT_VALUE
        return Rec((label, _unflatten(r, ft, path + (label,))) for label, ft in t.fields)
    v = r[column_name(path)]
    return UNIT_VALUE if t == UNIT else v


def flatten_value(v: Any, t: Any) -> dict[str, Any]:
    """Flat row of a record-nested value (inverse of :func:`unflatten_values`)."""
    out: dict[str, Any] = {}

    def go(v: Any, t: Any, path: tuple[str, ...]) -> None:
        if isinstance(t, RecordT) and t.fields:
            for label, ft in t.fields:
                go(v[label], ft, path + (label,))
        else:
            out[column_name(path)] = v

    go(v, t, ())
    return out


# ---------------------------------------------------------------------------
# SQL emission


@dataclass(frozen=True)
class SqlOptions:
    inline_with: bool = False
    key_rownum: bool = False


def quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def sql_literal(v: Any) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return f"({v})" if v < 0 else str(v)
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    if isinstance(v, dict) and not v:
        return "0"
    raise UnflattenedInput(f"no SQL literal for {v!r}")


_DEFAULTS = {INT: "0", BOOL: "FALSE", STRING: "''", UNIT: "0"}

_SQL_OPS = {"&&": "AND", "||": "OR", "=": "=", "<>": "<>", "<": "<", ">": ">", "<=": "<=", ">=": ">=", "+": "+", "-": "-", "*": "*"}


class _Emitter:
    def __init__(self, schema: Schema, options: SqlOptions):
        self.schema = schema
        self.options = options
        self.ctes: list[tuple[str, str]] = []

    def statement(self, m: LQuery, row_type: Any) -> str:
        if not m.comps:
            cols = ", ".join(f"{_DEFAULTS[bt]} AS {quote_ident(c)}" for c, bt in flatten_type(row_type))
            return f"SELECT {cols}\nWHERE FALSE"
        selects = [self.comp(c) for c in m.comps]
        body = "\nUNION ALL\n".join(selects)
        if not self.ctes:
            return body
        ctes = ",\n".join(f"{quote_ident(name)} AS (\n{_indent(sql)}\n)" for name, sql in self.ctes)
        return f"WITH {ctes}\n{body}"

    def comp(self, c: LComp) -> str:
        source = None
        let_cols: list[str] = []
        if c.outer is not None:
            outer_sql = self.select(c.outer, {}, None)
            let_cols = [name for name, _ in c.outer.body.fields]
            if self.options.inline_with:
                source = f"(\n{_indent(outer_sql)}\n)"
            else:
                name = f"q{len(self.ctes) + 1}"
                self.ctes.append((name, outer_sql))
                source = quote_ident(name)
        return self.select(c.inner, {LET_VAR: let_cols}, source)

    def select(self, s: LSub, let_cols: Mapping[str, list[str]], let_source: str | None, exists: bool = False) -> str:
        if not isinstance(s.body, Record) or any(isinstance(f, Record) for _, f in s.body.fields):
            raise UnflattenedInput("emit_sql expects a flattened query")
        if exists:
            cols = "1"
        else:
            cols = ", ".join(f"{self.inner(f, s, let_cols)} AS {quote_ident(name)}" for name, f in s.body.fields)
        sources = []
        for g in s.gens:
            if isinstance(g, LetGenerator):
                if let_source is None:
                    raise UnflattenedInput("let generator without a let-bound query")
                sources.append(f"{let_source} AS {quote_ident(g.var)}")
            else:
                sources.append(f"{quote_ident(g.table)} AS {quote_ident(g.var)}")
        sql = f"SELECT {cols}"
        if sources:
            sql += "\nFROM " + ", ".join(sources)
        if s.guard != TRUE:
            sql += "\nWHERE " + self.base(s.guard)
        return sql

    def inner(self, n: Any, s: LSub, let_cols: Mapping[str, list[str]]) -> str:
        if isinstance(n, IndexPrim):
            order = self.order_by(s, let_cols)
            return f"ROW_NUMBER() OVER ({'ORDER BY ' + ', '.join(order) if order else ''})"
        return self.base(n)

    def order_by(self, s: LSub, let_cols: Mapping[str, list[str]]) -> list[str]:
        out = []
        for g in s.gens:
            v = quote_ident(g.var)
            if isinstance(g, LetGenerator):
                cols = ["i2"] if self.options.key_rownum else let_cols.get(g.var, [])
            else:
                ts = self.schema.table(g.table)
                cols = list(ts.key) if self.options.key_rownum and ts.key else list(ts.column_names)
            out.extend(f"{v}.{quote_ident(c)}" for c in cols)
        return out

    def base(self, x: Any) -> str:
        if isinstance(x, Const):
            return sql_literal(x.value)
        if isinstance(x, Project):
            if not isinstance(x.term, Var):
                raise UnflattenedInput("multi-step projection survived flattening")
            return f"{quote_ident(x.term.name)}.{quote_ident(x.label)}"
        if isinstance(x, PrimApp):
            if x.op == "not":
                return f"(NOT {self.base(x.args[0])})"
            return f"({self.base(x.args[0])} {_SQL_OPS[x.op]} {self.base(x.args[1])})"
        if isinstance(x, IsEmpty):
            q = x.term
            if not q.comps:
                return "TRUE"
            parts = []
            for c in q.comps:
                if c.outer is not None:
                    outer = self.select(c.outer, {}, None)
                    let_cols = {LET_VAR: [name for name, _ in c.outer.body.fields]}
                    parts.append(self.select(c.inner, let_cols, f"({outer})", exists=True))
                else:
                    parts.append(self.select(c.inner, {}, None, exists=True))
            return "(NOT EXISTS (" + "\nUNION ALL\n".join(parts) + "))"
        raise UnflattenedInput(f"cannot emit {type(x).__name__}")


def _indent(text: str, n: int = 2) -> str:
    return "\n".join(" " * n + line for line in text.splitlines())


def emit_sql(m: LQuery, schema: Schema, row_type: Any, options: SqlOptions = SqlOptions()) -> str:
    """SQL text of a flattened let-inserted query.

    ``row_type`` is the let-inserted element type; it fixes the columns of
    an empty union.
    """
    return _Emitter(schema, options).statement(m, row_type)


# ---------------------------------------------------------------------------
# Compiled packages and database rows


@dataclass(frozen=True)
class CompiledQuery:
    path: tuple
    shredded_type: BagT
    row_type: Any  # let-inserted element type
    columns: tuple[tuple[str, BaseT], ...]
    sql: str


def compile_shredded(m: SQuery, shredded_type: BagT, path: tuple, schema: Schema, options: SqlOptions = SqlOptions()) -> CompiledQuery:
    """Let-insert, flatten and emit one shredded query."""
    row_type = let_type(shredded_type).elem
    check_labels(row_type)
    flat = flatten_query(let_insert(m, schema))
    sql = emit_sql(flat, schema, row_type, options)
    return CompiledQuery(tuple(path), shredded_type, row_type, tuple(flatten_type(row_type)), sql)


def coerce_column(v: Any, t: BaseT) -> Any:
    """Database value to the in-memory representation of base type ``t``."""
    if t == BOOL and not isinstance(v, bool):
        return bool(v)
    if t == INT and not isinstance(v, int):
        return int(v)
    if t == UNIT:
        return UNIT_VALUE
    return v


def rows_to_shredded(rows: Iterable[Mapping[str, Any]], cq: CompiledQuery) -> list[ShreddedRow]:
    """Shredded rows from the result of a compiled query."""
    types = dict(cq.columns)
    fixed = []
    for r in rows:
        if set(r) != set(types):
            raise ColumnMismatch(f"row has columns {sorted(r)}, expected {sorted(types)}")
        fixed.append({c: coerce_column(v, types[c]) for c, v in r.items()})
    values = unflatten_values(fixed, cq.row_type)
    payload_t = cq.shredded_type.elem.field_type("#2")
    return [ShreddedRow(_decode(v["#1"], INDEX), _decode(v["#2"], payload_t)) for v in values]


def _decode(v: Any, t: Any) -> Any:
    if isinstance(t, IndexT):
        return Index(v["#1"], v["#2"])
    if isinstance(t, RecordT):
        return Rec((label, _decode(v[label], ft)) for label, ft in t.fields)
    return v
