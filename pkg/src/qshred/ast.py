"""Core data definitions shared by every stage of the pipeline.

The module holds four families of immutable nodes:

* types (:class:`BaseT`, :class:`RecordT`, :class:`BagT`, :class:`FunT`,
  :class:`IndexT`),
* source terms of the nested calculus (:class:`Var` ... :class:`IsEmpty`),
* normal forms (:class:`Query` of :class:`Comprehension`), shredded queries
  (:class:`SQuery`) and let-inserted queries (:class:`LQuery`),
* runtime values (:class:`Rec`, :class:`Bag`, :class:`Index`) together with a
  :class:`Schema` and an in-memory :class:`Database`.

Base terms are shared between the layers: ``x.l`` is ``Project(Var(x), l)``,
primitive applications are :class:`PrimApp` and constants are :class:`Const`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterable, Iterator, Mapping, NamedTuple, Union as TUnion

from .errors import (
    InvalidPath,
    KeyNotUnique,
    MissingTable,
    NoKeyDeclared,
    SchemaError,
    TypeHasFunctions,
    TypeMismatch,
)

# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class BaseT:
    name: str

    def __str__(self) -> str:
        return self.name


INT = BaseT("Int")
BOOL = BaseT("Bool")
STRING = BaseT("String")
UNIT = BaseT("Unit")
BASE_TYPES = {t.name: t for t in (INT, BOOL, STRING, UNIT)}


@dataclass(frozen=True, eq=False)
class RecordT:
    """Record type. Equality ignores field order."""

    fields: tuple[tuple[str, Any], ...]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RecordT) and dict(self.fields) == dict(other.fields)

    def __hash__(self) -> int:
        return hash(frozenset(self.fields))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.fields)

    def field_type(self, label: str) -> Any:
        for name, t in self.fields:
            if name == label:
                return t
        raise KeyError(label)


@dataclass(frozen=True)
class BagT:
    elem: Any


@dataclass(frozen=True)
class FunT:
    arg: Any
    res: Any


@dataclass(frozen=True)
class IndexT:
    """The type of indexes, used only in shredded types."""


@dataclass(frozen=True)
class AnyT:
    """Element type of an empty bag whose type the context does not fix."""


INDEX = IndexT()
ANY = AnyT()

Type = TUnion[BaseT, RecordT, BagT, FunT, IndexT, AnyT]


def pos_label(i: int) -> str:
    """Label of the ``i``-th tuple component (1-based)."""
    return f"#{i}"


def is_pos_label(label: str) -> bool:
    return label.startswith("#") and label[1:].isdigit()


def tuple_type(*elems: Type) -> RecordT:
    return RecordT(tuple((pos_label(i), t) for i, t in enumerate(elems, 1)))


def is_base(t: Type) -> bool:
    return isinstance(t, BaseT)


def has_functions(t: Type) -> bool:
    if isinstance(t, FunT):
        return True
    if isinstance(t, RecordT):
        return any(has_functions(ft) for _, ft in t.fields)
    if isinstance(t, BagT):
        return has_functions(t.elem)
    return False


def is_flat(t: Type) -> bool:
    """Flat types: bags of records of base types."""
    return (
        isinstance(t, BagT)
        and isinstance(t.elem, RecordT)
        and all(isinstance(ft, BaseT) for _, ft in t.elem.fields)
    )


def resolve_any(t: Type, default: Type = None) -> Type:
    """Replace unresolved empty-bag element types by ``default`` (unit record)."""
    if default is None:
        default = RecordT(())
    if isinstance(t, AnyT):
        return default
    if isinstance(t, RecordT):
        return RecordT(tuple((label, resolve_any(ft, default)) for label, ft in t.fields))
    if isinstance(t, BagT):
        return BagT(resolve_any(t.elem, default))
    if isinstance(t, FunT):
        return FunT(resolve_any(t.arg, default), resolve_any(t.res, default))
    return t


def type_to_json(t: Type) -> Any:
    if isinstance(t, BaseT):
        return t.name
    if isinstance(t, IndexT):
        return "Index"
    if isinstance(t, RecordT):
        return {"record": [[label, type_to_json(ft)] for label, ft in t.fields]}
    if isinstance(t, BagT):
        return {"bag": type_to_json(t.elem)}
    raise TypeHasFunctions(f"cannot serialise type {t}")


def type_from_json(obj: Any) -> Type:
    if isinstance(obj, str):
        if obj == "Index":
            return INDEX
        if obj in BASE_TYPES:
            return BASE_TYPES[obj]
        raise SchemaError(f"unknown base type {obj!r}")
    if isinstance(obj, dict) and "record" in obj:
        return RecordT(tuple((label, type_from_json(ft)) for label, ft in obj["record"]))
    if isinstance(obj, dict) and "bag" in obj:
        return BagT(type_from_json(obj["bag"]))
    raise SchemaError(f"malformed type {obj!r}")


# ---------------------------------------------------------------------------
# Static tags

TOP = 0


def tag_name(tag: int) -> str:
    """Display alias of a static tag: ``⊤`` for the root, then ``a``, ``b``, ..."""
    if tag == TOP:
        return "⊤"
    letters = "abcdefghijklmnopqrstuvwxyz"
    name = ""
    n = tag
    while n > 0:
        n, r = divmod(n - 1, 26)
        name = letters[r] + name
    return name


# ---------------------------------------------------------------------------
# Source terms


@dataclass(frozen=True)
class Var:
    name: str
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    value: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def __eq__(self, other: object) -> bool:
        # keep True and 1 apart
        return (
            isinstance(other, Const)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self) -> int:
        return hash((type(self.value).__name__, self.value))

    @property
    def type(self) -> BaseT:
        return const_type(self.value)


def const_type(value: Any) -> BaseT:
    if isinstance(value, bool):
        return BOOL
    if isinstance(value, int):
        return INT
    if isinstance(value, str):
        return STRING
    if isinstance(value, dict) and not value:
        return UNIT
    raise TypeMismatch(f"not a base constant: {value!r}")


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class PrimApp:
    op: str
    args: tuple
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Table:
    name: str
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Any
    then: Any
    else_: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lam:
    param: str
    body: Any
    param_type: Any = None
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class App:
    fun: Any
    arg: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Record:
    fields: tuple[tuple[str, Any], ...]
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.fields)

    def get(self, label: str) -> Any:
        for name, term in self.fields:
            if name == label:
                return term
        raise KeyError(label)


@dataclass(frozen=True)
class Project:
    term: Any
    label: str
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Empty:
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Singleton:
    term: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Union:
    left: Any
    right: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class For:
    var: str
    source: Any
    body: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IsEmpty:
    term: Any
    pos: tuple[int, int] | None = field(default=None, compare=False, repr=False)


Term = TUnion[Var, Const, PrimApp, Table, If, Lam, App, Record, Project, Empty, Singleton, Union, For, IsEmpty]


def tuple_term(*elems: Any) -> Record:
    return Record(tuple((pos_label(i), t) for i, t in enumerate(elems, 1)))


def conj(a: Any, b: Any) -> Any:
    """Conjunction that drops a literal ``true`` on the left."""
    if a == TRUE:
        return b
    return PrimApp("&&", (a, b))


def conj_all(terms: Iterable[Any]) -> Any:
    result: Any = TRUE
    for t in terms:
        if t == TRUE:
            continue
        result = conj(result, t)
    return result


def conjuncts(term: Any) -> list:
    """Split a left-nested ``&&`` chain; literal ``true`` disappears."""
    if isinstance(term, PrimApp) and term.op == "&&":
        return conjuncts(term.args[0]) + conjuncts(term.args[1])
    if term == TRUE:
        return []
    return [term]


# ---------------------------------------------------------------------------
# Normal forms


@dataclass(frozen=True)
class Generator:
    var: str
    table: str


@dataclass(frozen=True)
class Comprehension:
    """``for (gens where guard) return^tag body``."""

    gens: tuple[Generator, ...]
    guard: Any
    body: Any
    tag: int | None = None

    @cached_property
    def plan(self) -> "LoopPlan":
        return LoopPlan.build(self.gens, self.guard)


@dataclass(frozen=True)
class Query:
    """A union of comprehensions."""

    comps: tuple[Comprehension, ...]


# ---------------------------------------------------------------------------
# Shredded terms

UP = "up"
DOWN_DYN = "down"


@dataclass(frozen=True)
class IndexRef:
    """``a⟨↑⟩`` or ``a⟨↓⟩``."""

    tag: int
    dyn: str


@dataclass(frozen=True)
class SReturn:
    """``return^tag ⟨outer, inner⟩``."""

    outer: IndexRef
    inner: Any
    tag: int


@dataclass(frozen=True)
class SFor:
    gens: tuple[Generator, ...]
    guard: Any
    body: Any  # SFor | SReturn

    @cached_property
    def plan(self) -> "LoopPlan":
        return LoopPlan.build(self.gens, self.guard)


@dataclass(frozen=True)
class SQuery:
    comps: tuple[SFor, ...]


def sfor_levels(comp: SFor) -> tuple[list[SFor], SReturn]:
    """The chain of ``for`` levels of a shredded comprehension and its return."""
    levels = []
    node: Any = comp
    while isinstance(node, SFor):
        levels.append(node)
        node = node.body
    return levels, node


# ---------------------------------------------------------------------------
# Let-inserted terms


@dataclass(frozen=True)
class IndexPrim:
    """The ``index`` primitive: position of the current binding."""


@dataclass(frozen=True)
class LetGenerator:
    """Generator ranging over the rows of the enclosing let-bound query."""

    var: str


@dataclass(frozen=True)
class LSub:
    gens: tuple  # of Generator | LetGenerator
    guard: Any
    body: Any

    @cached_property
    def plan(self) -> "LoopPlan":
        return LoopPlan.build(self.gens, self.guard)


@dataclass(frozen=True)
class LComp:
    """``let q = outer in inner``; ``outer`` is ``None`` when the let is elided."""

    outer: LSub | None
    inner: LSub


@dataclass(frozen=True)
class LQuery:
    comps: tuple[LComp, ...]


LET_VAR = "z"

# ---------------------------------------------------------------------------
# Variables and substitution


def free_vars(node: Any) -> frozenset[str]:
    """Free variables of any term, normal form, shredded or let-inserted node."""
    if node is None:
        return frozenset()
    # nodes are immutable, so the result is memoised on the instance
    d = node.__dict__
    fv = d.get("_fv")
    if fv is None:
        fv = _free_vars(node)
        d["_fv"] = fv
    return fv


def _free_vars(node: Any) -> frozenset[str]:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, (Const, Table, Empty, IndexRef, IndexPrim)) or node is None:
        return frozenset()
    if isinstance(node, PrimApp):
        return frozenset().union(*(free_vars(a) for a in node.args))
    if isinstance(node, If):
        return free_vars(node.cond) | free_vars(node.then) | free_vars(node.else_)
    if isinstance(node, Lam):
        return free_vars(node.body) - {node.param}
    if isinstance(node, App):
        return free_vars(node.fun) | free_vars(node.arg)
    if isinstance(node, Record):
        return frozenset().union(*(free_vars(t) for _, t in node.fields))
    if isinstance(node, (Project, Singleton, IsEmpty)):
        return free_vars(node.term)
    if isinstance(node, Union):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, For):
        return free_vars(node.source) | (free_vars(node.body) - {node.var})
    if isinstance(node, (Query, SQuery, LQuery)):
        return frozenset().union(*(free_vars(c) for c in node.comps))
    if isinstance(node, (Comprehension, SFor, LSub)):
        bound = {g.var for g in node.gens}
        return (free_vars(node.guard) | free_vars(node.body)) - bound
    if isinstance(node, SReturn):
        return free_vars(node.inner)
    if isinstance(node, LComp):
        inner = free_vars(node.inner)
        return inner | (free_vars(node.outer) if node.outer is not None else frozenset())
    raise TypeError(f"free_vars: unexpected node {node!r}")


def bound_vars(node: Any) -> set[str]:
    """Every variable bound anywhere inside ``node``."""
    out: set[str] = set()

    def walk(n: Any) -> None:
        if isinstance(n, Lam):
            out.add(n.param)
        elif isinstance(n, For):
            out.add(n.var)
        elif isinstance(n, (Comprehension, SFor, LSub)):
            out.update(g.var for g in n.gens)
        for child in children(n):
            walk(child)

    walk(node)
    return out


def children(node: Any) -> list:
    if isinstance(node, PrimApp):
        return list(node.args)
    if isinstance(node, If):
        return [node.cond, node.then, node.else_]
    if isinstance(node, Lam):
        return [node.body]
    if isinstance(node, App):
        return [node.fun, node.arg]
    if isinstance(node, Record):
        return [t for _, t in node.fields]
    if isinstance(node, (Project, Singleton, IsEmpty)):
        return [node.term]
    if isinstance(node, Union):
        return [node.left, node.right]
    if isinstance(node, For):
        return [node.source, node.body]
    if isinstance(node, (Query, SQuery, LQuery)):
        return list(node.comps)
    if isinstance(node, (Comprehension, SFor, LSub)):
        return [node.guard, node.body]
    if isinstance(node, SReturn):
        return [node.inner]
    if isinstance(node, LComp):
        return [c for c in (node.outer, node.inner) if c is not None]
    return []


def all_names(node: Any) -> set[str]:
    """Free and bound variable names of ``node``."""
    return set(free_vars(node)) | bound_vars(node)


class NameSupply:
    """Deterministic supply of fresh variable names."""

    def __init__(self, used: Iterable[str] = ()):
        self.used = set(used)

    def fresh(self, base: str) -> str:
        base = base.split("_")[0] if "_" in base and base.rsplit("_", 1)[1].isdigit() else base
        if base not in self.used:
            self.used.add(base)
            return base
        for i in itertools.count(1):
            name = f"{base}_{i}"
            if name not in self.used:
                self.used.add(name)
                return name
        raise AssertionError("unreachable")


def substitute(term: Any, name: str, value: Any, supply: NameSupply | None = None) -> Any:
    """Capture-avoiding substitution ``term[name := value]`` on source terms."""
    if name not in free_vars(term):
        return term
    if supply is None:
        supply = NameSupply(all_names(term) | all_names(value))
    return _subst(term, name, value, free_vars(value), supply)


def _subst(t: Any, name: str, value: Any, fv_value: frozenset[str], supply: NameSupply) -> Any:
    if name not in free_vars(t):
        return t
    if isinstance(t, Var):
        return value
    if isinstance(t, PrimApp):
        return PrimApp(t.op, tuple(_subst(a, name, value, fv_value, supply) for a in t.args), t.pos)
    if isinstance(t, If):
        return If(
            _subst(t.cond, name, value, fv_value, supply),
            _subst(t.then, name, value, fv_value, supply),
            _subst(t.else_, name, value, fv_value, supply),
            t.pos,
        )
    if isinstance(t, App):
        return App(_subst(t.fun, name, value, fv_value, supply), _subst(t.arg, name, value, fv_value, supply), t.pos)
    if isinstance(t, Record):
        return Record(tuple((label, _subst(f, name, value, fv_value, supply)) for label, f in t.fields), t.pos)
    if isinstance(t, Project):
        return Project(_subst(t.term, name, value, fv_value, supply), t.label, t.pos)
    if isinstance(t, Singleton):
        return Singleton(_subst(t.term, name, value, fv_value, supply), t.pos)
    if isinstance(t, IsEmpty):
        return IsEmpty(_subst(t.term, name, value, fv_value, supply), t.pos)
    if isinstance(t, Union):
        return Union(_subst(t.left, name, value, fv_value, supply), _subst(t.right, name, value, fv_value, supply), t.pos)
    if isinstance(t, Lam):
        param, body = _avoid(t.param, t.body, fv_value, supply)
        return Lam(param, _subst(body, name, value, fv_value, supply), t.param_type, t.pos)
    if isinstance(t, For):
        source = _subst(t.source, name, value, fv_value, supply)
        if t.var == name:
            # free in the source only; the generator shadows it in the body
            return For(t.var, source, t.body, t.pos)
        var, body = _avoid(t.var, t.body, fv_value, supply)
        return For(var, source, _subst(body, name, value, fv_value, supply), t.pos)
    raise TypeError(f"substitute: unexpected node {t!r}")


def _avoid(binder: str, body: Any, fv_value: frozenset[str], supply: NameSupply) -> tuple[str, Any]:
    if binder not in fv_value:
        return binder, body
    new = supply.fresh(binder)
    return new, _subst(body, binder, Var(new), frozenset((new,)), supply)


def term_size(node: Any) -> int:
    return 1 + sum(term_size(c) for c in children(node))


# ---------------------------------------------------------------------------
# Paths

DOWN = "↓"
Path = tuple  # of DOWN or labels; the trailing ε is implicit


def path_str(path: Path) -> str:
    return ".".join(list(path) + ["ε"])


def parse_path(text: str) -> Path:
    parts = [p for p in text.strip().split(".") if p]
    if not parts or parts[-1] != "ε":
        raise InvalidPath(f"path must end with ε: {text!r}")
    return tuple(parts[:-1])


def paths_of(t: Type) -> list[Path]:
    """Positions of bag constructors in ``t``, outermost first."""
    if isinstance(t, (BaseT, IndexT, AnyT)):
        return []
    if isinstance(t, RecordT):
        return [(label,) + p for label, ft in t.fields for p in paths_of(ft)]
    if isinstance(t, BagT):
        return [()] + [(DOWN,) + p for p in paths_of(t.elem)]
    if isinstance(t, FunT):
        raise TypeHasFunctions("function types have no paths")
    raise TypeError(f"paths_of: not a type {t!r}")


def nesting_degree(t: Type) -> int:
    """Number of bag constructors in ``t``."""
    return len(paths_of(t))


def type_at(t: Type, path: Path) -> Type:
    """The bag type found at ``path`` inside ``t``."""
    for step in path:
        if step == DOWN and isinstance(t, BagT):
            t = t.elem
        elif isinstance(t, RecordT) and step in t.labels:
            t = t.field_type(step)
        else:
            raise InvalidPath(f"{path_str(path)} is not a path of the type")
    if not isinstance(t, BagT):
        raise InvalidPath(f"{path_str(path)} does not lead to a bag")
    return t


# ---------------------------------------------------------------------------
# Values


@dataclass(frozen=True)
class Index:
    """A runtime index: a static tag paired with a scheme-specific dynamic part."""

    tag: int
    dynamic: Any

    def __str__(self) -> str:
        if isinstance(self.dynamic, int):
            # flat indexes print as the pair they stand for
            return f"⟨{tag_name(self.tag)},{self.dynamic}⟩"
        return f"{tag_name(self.tag)}⟨{_show_dyn(self.dynamic)}⟩"


def _show_dyn(d: Any) -> str:
    if isinstance(d, tuple) and all(isinstance(x, int) and not isinstance(x, bool) for x in d):
        return ".".join(str(x) for x in d)
    return str(d)


class Rec(dict):
    """An immutable record value. Equality ignores field order."""

    __slots__ = ()

    def __hash__(self) -> int:  # type: ignore[override]
        return hash(canonical_key(self))

    def _readonly(self, *args: Any, **kwargs: Any) -> None:
        raise TypeError("record values are immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly  # type: ignore[assignment]

    def __repr__(self) -> str:
        return "Rec(" + ", ".join(f"{k}={v!r}" for k, v in self.items()) + ")"


UNIT_VALUE = Rec()


class Bag:
    """A bag value: an ordered list of elements with optional index annotations.

    Equality is multiset equality after erasing annotations.
    """

    __slots__ = ("items", "annotations", "_ckey")

    def __init__(self, items: Iterable[Any] = (), annotations: Iterable[Any] | None = None):
        self.items = tuple(items)
        self.annotations = tuple(annotations) if annotations is not None else None
        if self.annotations is not None and len(self.annotations) != len(self.items):
            raise ValueError("one annotation per element required")
        self._ckey = None

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Any]:
        return iter(self.items)

    def __getitem__(self, i: int) -> Any:
        return self.items[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Bag):
            return NotImplemented
        return canonical_key(self) == canonical_key(other)

    def __hash__(self) -> int:
        return hash(canonical_key(self))

    def annotated(self) -> list[tuple[Any, Any]]:
        anns = self.annotations if self.annotations is not None else (None,) * len(self.items)
        return list(zip(self.items, anns))

    def __repr__(self) -> str:
        return f"Bag({list(self.items)!r})"


def erase(value: Any) -> Any:
    """Drop every index annotation from a value."""
    if isinstance(value, Bag):
        return Bag(erase(v) for v in value.items)
    if isinstance(value, Rec):
        return Rec((k, erase(v)) for k, v in value.items())
    return value


def canonical_key(v: Any) -> tuple:
    """Sort key realising the total order Bool < Int < String < Unit < Record < Bag < Index."""
    if isinstance(v, bool):
        return (0, v)
    if isinstance(v, int):
        return (1, v)
    if isinstance(v, str):
        return (2, v)
    if isinstance(v, Rec):
        if not v:
            return (3,)
        return (4, tuple(sorted((k, canonical_key(x)) for k, x in v.items())))
    if isinstance(v, Bag):
        if v._ckey is None:
            v._ckey = (5, tuple(sorted(canonical_key(x) for x in v.items)))
        return v._ckey
    if isinstance(v, Index):
        return (6, v.tag, canonical_key(v.dynamic))
    if isinstance(v, tuple):
        return (7, tuple(canonical_key(x) for x in v))
    raise TypeMismatch(f"not a value: {v!r}")


def _kind(v: Any) -> str:
    if isinstance(v, bool):
        return "Bool"
    if isinstance(v, int):
        return "Int"
    if isinstance(v, str):
        return "String"
    if isinstance(v, Rec):
        return "Record"
    if isinstance(v, Bag):
        return "Bag"
    if isinstance(v, Index):
        return "Index"
    raise TypeMismatch(f"not a value: {v!r}")


def _check_same_shape(a: Any, b: Any) -> None:
    ka, kb = _kind(a), _kind(b)
    if ka != kb:
        raise TypeMismatch(f"cannot compare {ka} with {kb}")
    if ka == "Record":
        if set(a) != set(b):
            raise TypeMismatch(f"record labels differ: {sorted(a)} vs {sorted(b)}")
        for label in a:
            _check_same_shape(a[label], b[label])
    elif ka == "Bag" and len(a) and len(b):
        _check_same_shape(a.items[0], b.items[0])


def multiset_equal(a: Any, b: Any) -> bool:
    """Equality of values where bags are compared as multisets."""
    _check_same_shape(a, b)
    return canonical_key(a) == canonical_key(b)


# ---------------------------------------------------------------------------
# Schema and database


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[tuple[str, BaseT], ...]
    key: tuple[str, ...] | None = None

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.columns)

    @property
    def row_type(self) -> RecordT:
        return RecordT(self.columns)


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableSchema, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate table name")

    def __contains__(self, name: object) -> bool:
        return any(t.name == name for t in self.tables)

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name == name:
                return t
        raise MissingTable(f"no table named {name!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)


class Database:
    """Table contents in canonical order: rows sorted by their column values
    taken in schema-declared column order."""

    def __init__(self, schema: Schema, tables: Mapping[str, Iterable[Mapping[str, Any]]]):
        self.schema = schema
        self._rows: dict[str, list[Rec]] = {}
        self._lookup: dict[tuple[str, str], dict[Any, list[Rec]]] = {}
        for ts in schema.tables:
            raw = tables.get(ts.name)
            if raw is None:
                raise MissingTable(f"no data for table {ts.name!r}")
            rows = [self._check_row(ts, r) for r in raw]
            rows.sort(key=lambda r: tuple(canonical_key(r[c]) for c in ts.column_names))
            self._rows[ts.name] = rows
        extra = set(tables) - set(schema.names)
        if extra:
            raise SchemaError(f"data for undeclared tables: {sorted(extra)}")

    @staticmethod
    def _check_row(ts: TableSchema, row: Mapping[str, Any]) -> Rec:
        if set(row) != set(ts.column_names):
            raise SchemaError(f"row of {ts.name} has columns {sorted(row)}, expected {sorted(ts.column_names)}")
        for col, t in ts.columns:
            v = row[col]
            if _kind(v) != t.name:
                raise SchemaError(f"{ts.name}.{col}: expected {t.name}, got {v!r}")
        return Rec((c, row[c]) for c in ts.column_names)

    def rows(self, table: str) -> list[Rec]:
        try:
            return self._rows[table]
        except KeyError:
            raise MissingTable(f"no table named {table!r}") from None

    def lookup(self, table: str, column: str, value: Any) -> list[Rec]:
        """Rows of ``table`` whose ``column`` equals ``value``, in canonical order."""
        key = (table, column)
        idx = self._lookup.get(key)
        if idx is None:
            idx = {}
            for r in self.rows(table):
                idx.setdefault((type(r[column]), r[column]), []).append(r)
            self._lookup[key] = idx
        return idx.get((type(value), value), [])

    def check_keys(self, table: str) -> tuple[str, ...]:
        ts = self.schema.table(table)
        if not ts.key:
            raise NoKeyDeclared(f"table {table!r} declares no key")
        seen = set()
        for r in self.rows(table):
            k = tuple(r[c] for c in ts.key)
            if k in seen:
                raise KeyNotUnique(f"duplicate key {k} in table {table!r}")
            seen.add(k)
        return ts.key

    def to_json(self) -> dict[str, list[dict[str, Any]]]:
        return {name: [dict(r) for r in rows] for name, rows in self._rows.items()}


# ---------------------------------------------------------------------------
# Shredded results and packages


class ShreddedRow(NamedTuple):
    outer: Index
    payload: Any
    inner: Index | None = None


@dataclass(frozen=True)
class PBase:
    type: Any


@dataclass(frozen=True)
class PRecord:
    fields: tuple[tuple[str, Any], ...]


@dataclass(frozen=True)
class PBag:
    elem: Any
    annotation: Any


def make_package(f: Callable[[Path], Any], t: Type, path: Path = ()) -> Any:
    """Annotate each bag constructor of ``t`` with ``f(path)``."""
    if isinstance(t, (BaseT, IndexT, AnyT)):
        return PBase(t)
    if isinstance(t, RecordT):
        return PRecord(tuple((label, make_package(f, ft, path + (label,))) for label, ft in t.fields))
    if isinstance(t, BagT):
        return PBag(make_package(f, t.elem, path + (DOWN,)), f(path))
    raise TypeHasFunctions(f"no package for {t}")


def erase_package(p: Any) -> Type:
    if isinstance(p, PBase):
        return p.type
    if isinstance(p, PRecord):
        return RecordT(tuple((label, erase_package(q)) for label, q in p.fields))
    if isinstance(p, PBag):
        return BagT(erase_package(p.elem))
    raise TypeError(f"not a package: {p!r}")


def pmap(f: Callable[[Any], Any], p: Any) -> Any:
    if isinstance(p, PBase):
        return p
    if isinstance(p, PRecord):
        return PRecord(tuple((label, pmap(f, q)) for label, q in p.fields))
    if isinstance(p, PBag):
        return PBag(pmap(f, p.elem), f(p.annotation))
    raise TypeError(f"not a package: {p!r}")


def package_annotations(p: Any, path: Path = ()) -> list[tuple[Path, Any]]:
    """``(path, annotation)`` pairs, outermost first."""
    if isinstance(p, PBase):
        return []
    if isinstance(p, PRecord):
        return [pa for label, q in p.fields for pa in package_annotations(q, path + (label,))]
    if isinstance(p, PBag):
        return [(path, p.annotation)] + package_annotations(p.elem, path + (DOWN,))
    raise TypeError(f"not a package: {p!r}")


# ---------------------------------------------------------------------------
# Loop plans


@dataclass
class LoopPlan:
    """Guard conjuncts grouped by the first generator at which they can be tested.

    ``checks[0]`` holds conjuncts that mention no generator of this level;
    ``checks[i]`` those whose last generator is the ``i``-th.  ``probes[i]``
    optionally names an equality ``x_i.col = e`` that can be answered by an
    index lookup on the table of generator ``i``.
    """

    vars: tuple[str, ...]
    checks: list[list[Any]]
    probes: list[tuple[str, Any] | None]

    @classmethod
    def build(cls, gens: tuple, guard: Any) -> "LoopPlan":
        names = tuple(g.var for g in gens)
        position = {v: i + 1 for i, v in enumerate(names)}
        checks: list[list[Any]] = [[] for _ in range(len(names) + 1)]
        probes: list[tuple[str, Any] | None] = [None] * (len(names) + 1)
        for c in conjuncts(guard):
            level = max((position[v] for v in free_vars(c) if v in position), default=0)
            if level and probes[level] is None and isinstance(gens[level - 1], Generator):
                probe = _equality_probe(c, names[level - 1], position, level)
                if probe is not None:
                    probes[level] = probe
                    continue
            checks[level].append(c)
        return cls(names, checks, probes)


def _equality_probe(c: Any, var: str, position: dict[str, int], level: int) -> tuple[str, Any] | None:
    if not (isinstance(c, PrimApp) and c.op == "=" and len(c.args) == 2):
        return None
    for mine, other in (c.args, c.args[::-1]):
        if isinstance(mine, Project) and isinstance(mine.term, Var) and mine.term.name == var:
            fv = free_vars(other)
            if var not in fv and all(position.get(v, 0) < level for v in fv):
                return mine.label, other
    return None
