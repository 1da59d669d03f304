"""Pretty printers for types, terms, normal forms, shredded and let-inserted
queries, and values.

Source terms print in the concrete syntax accepted by
:func:`qshred.frontend.parse_term`, so ``parse_term(show_term(t)) == t``.
"""

from __future__ import annotations

import json
from typing import Any

from .ast import (
    UP,
    AnyT,
    App,
    Bag,
    BagT,
    BaseT,
    Comprehension,
    Const,
    Empty,
    For,
    FunT,
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
    PrimApp,
    Project,
    Query,
    Rec,
    Record,
    RecordT,
    SFor,
    Singleton,
    SQuery,
    SReturn,
    Table,
    Union,
    Var,
    canonical_key,
    is_pos_label,
    path_str,
    pos_label,
    tag_name,
)

# ---------------------------------------------------------------------------
# Types


def show_type(t: Any) -> str:
    if isinstance(t, BaseT):
        return t.name
    if isinstance(t, IndexT):
        return "Index"
    if isinstance(t, AnyT):
        return "?"
    if isinstance(t, RecordT):
        if _is_tuple_labels([label for label, _ in t.fields]):
            return "⟨" + ", ".join(show_type(ft) for _, ft in t.fields) + "⟩"
        return "⟨" + ", ".join(f"{label}:{show_type(ft)}" for label, ft in t.fields) + "⟩"
    if isinstance(t, BagT):
        inner = show_type(t.elem)
        if isinstance(t.elem, (BagT, FunT)):
            inner = f"({inner})"
        return f"Bag {inner}"
    if isinstance(t, FunT):
        arg = show_type(t.arg)
        if isinstance(t.arg, FunT):
            arg = f"({arg})"
        return f"{arg} → {show_type(t.res)}"
    raise TypeError(f"not a type: {t!r}")


def show_surface_type(t: Any) -> str:
    """Type in the ASCII syntax accepted for lambda annotations."""
    if isinstance(t, BaseT):
        return t.name
    if isinstance(t, RecordT):
        return "{" + ", ".join(f"{_label(label)}: {show_surface_type(ft)}" for label, ft in t.fields) + "}"
    if isinstance(t, BagT):
        return "[" + show_surface_type(t.elem) + "]"
    if isinstance(t, FunT):
        arg = show_surface_type(t.arg)
        if isinstance(t.arg, FunT):
            arg = f"({arg})"
        return f"{arg} -> {show_surface_type(t.res)}"
    raise TypeError(f"type has no surface syntax: {t!r}")


def _is_tuple_labels(labels: list[str]) -> bool:
    return len(labels) >= 2 and labels == [pos_label(i) for i in range(1, len(labels) + 1)]


def _label(label: str) -> str:
    return label[1:] if is_pos_label(label) else label


# ---------------------------------------------------------------------------
# Source terms

LOW, UNION, OR, AND, NOT, CMP, ADD, MUL, POST, ATOM = range(10)

INFIX = {
    "||": OR,
    "&&": AND,
    "=": CMP,
    "<>": CMP,
    "<": CMP,
    ">": CMP,
    "<=": CMP,
    ">=": CMP,
    "+": ADD,
    "-": ADD,
    "*": MUL,
}


def show_term(t: Any) -> str:
    """Single-line concrete syntax of a source term."""
    return _show(t, LOW)


def _paren(text: str, level: int, ctx: int) -> str:
    return f"({text})" if level < ctx else text


def _show(t: Any, ctx: int) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        v = t.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, int):
            return f"({v})" if v < 0 else str(v)
        return json.dumps(v, ensure_ascii=False)
    if isinstance(t, Table):
        return _paren(f"table {t.name}", POST, ctx)
    if isinstance(t, Empty):
        return "[]"
    if isinstance(t, PrimApp):
        if t.op == "not" and len(t.args) == 1:
            return _paren("not " + _show(t.args[0], NOT), NOT, ctx)
        if t.op in INFIX and len(t.args) == 2:
            level = INFIX[t.op]
            left_ctx = level if level != CMP else level + 1
            text = f"{_show(t.args[0], left_ctx)} {t.op} {_show(t.args[1], level + 1)}"
            return _paren(text, level, ctx)
        return f"{t.op}(" + ", ".join(_show(a, LOW) for a in t.args) + ")"
    if isinstance(t, If):
        text = f"if {_show(t.cond, LOW)} then {_show(t.then, LOW)} else {_show(t.else_, LOW)}"
        return _paren(text, LOW, ctx)
    if isinstance(t, Lam):
        param = t.param if t.param_type is None else f"{t.param}: {show_surface_type(t.param_type)}"
        return _paren(f"fun({param}) -> {_show(t.body, LOW)}", LOW, ctx)
    if isinstance(t, App):
        return _paren(f"{_show(t.fun, POST)}({_show(t.arg, LOW)})", POST, ctx)
    if isinstance(t, Record):
        labels = [label for label, _ in t.fields]
        if _is_tuple_labels(labels):
            return "(" + ", ".join(_show(f, LOW) for _, f in t.fields) + ")"
        return "{" + ", ".join(f"{_label(label)} = {_show(f, LOW)}" for label, f in t.fields) + "}"
    if isinstance(t, Project):
        return _paren(f"{_show(t.term, POST)}.{_label(t.label)}", POST, ctx)
    if isinstance(t, Singleton):
        return _paren(f"return {_show(t.term, OR)}", POST, ctx)
    if isinstance(t, Union):
        return _paren(f"{_show(t.left, UNION)} ++ {_show(t.right, UNION + 1)}", UNION, ctx)
    if isinstance(t, For):
        gens = [f"{t.var} <- {_show(t.source, LOW)}"]
        body = t.body
        while isinstance(body, For):
            gens.append(f"{body.var} <- {_show(body.source, LOW)}")
            body = body.body
        text = "for (" + ", ".join(gens) + ") "
        then_text = _show(body.then, LOW) if isinstance(body, If) and isinstance(body.else_, Empty) else ""
        if then_text and not then_text.startswith("("):
            # a parenthesised body after ``where (...)`` would parse as an application
            text += f"where ({_show(body.cond, LOW)}) {then_text}"
        else:
            text += _show(body, LOW)
        return _paren(text, LOW, ctx)
    if isinstance(t, IsEmpty):
        return f"empty({_show_query_inline(t.term)})"
    if isinstance(t, IndexRef):
        return f"{tag_name(t.tag)}⟨{'↑' if t.dyn == UP else '↓'}⟩"
    if isinstance(t, IndexPrim):
        return "index"
    raise TypeError(f"show_term: unexpected node {t!r}")


def _show_query_inline(q: Any) -> str:
    if isinstance(q, (Query, SQuery, LQuery)):
        if not q.comps:
            return "[]"
        return " ++ ".join(_paren(_show_comp_inline(c), UNION + 1, UNION + 1 if len(q.comps) > 1 else LOW) for c in q.comps)
    return _show(q, LOW)


def _gens(gens: tuple) -> str:
    parts = []
    for g in gens:
        if isinstance(g, LetGenerator):
            parts.append(f"{g.var} <- q")
        else:
            parts.append(f"{g.var} <- {g.table}")
    return ", ".join(parts)


def _trivial_level(gens: tuple, guard: Any) -> bool:
    # ``for () return M`` is just ``return M``
    return not gens and guard == Const(True)


def _for_head(gens: tuple, guard: Any) -> str:
    head = f"for ({_gens(gens)})"
    if guard != Const(True):
        head += f" where ({_show(guard, LOW)})"
    return head


def _return(tag: int | None) -> str:
    return "return" if tag is None else f"return^{tag_name(tag)}"


def _show_comp_inline(c: Any) -> str:
    if isinstance(c, Comprehension):
        ret = f"{_return(c.tag)} {_show_nterm_inline(c.body)}"
        return ret if _trivial_level(c.gens, c.guard) else f"{_for_head(c.gens, c.guard)} {ret}"
    if isinstance(c, SFor):
        if _trivial_level(c.gens, c.guard):
            return _show_comp_inline(c.body)
        return f"{_for_head(c.gens, c.guard)} {_show_comp_inline(c.body)}"
    if isinstance(c, SReturn):
        return f"{_return(c.tag)} ⟨{_show(c.outer, LOW)}, {_show_nterm_inline(c.inner)}⟩"
    if isinstance(c, LComp):
        inner = f"{_for_head(c.inner.gens, c.inner.guard)} return {_show_nterm_inline(c.inner.body)}"
        if c.outer is None:
            return inner
        outer = f"{_for_head(c.outer.gens, c.outer.guard)} return {_show_nterm_inline(c.outer.body)}"
        return f"let q = {outer} in {inner}"
    raise TypeError(f"not a comprehension: {c!r}")


def _show_nterm_inline(t: Any) -> str:
    if isinstance(t, (Query, SQuery, LQuery)):
        return _show_query_inline(t)
    if isinstance(t, Record):
        labels = [label for label, _ in t.fields]
        if _is_tuple_labels(labels):
            return "⟨" + ", ".join(_show_nterm_inline(f) for _, f in t.fields) + "⟩"
        return "{" + ", ".join(f"{_label(label)} = {_show_nterm_inline(f)}" for label, f in t.fields) + "}"
    return _show(t, LOW)


# ---------------------------------------------------------------------------
# Normal forms, shredded and let-inserted queries (multi-line)


def show_nf(q: Any, indent: int = 0) -> str:
    """Multi-line rendering of a normal form; tags appear as ``return^a``."""
    pad = " " * indent
    if isinstance(q, Query):
        if not q.comps:
            return pad + "[]"
        return f"\n{pad}++\n".join(show_nf(c, indent) for c in q.comps)
    if isinstance(q, Comprehension):
        if _trivial_level(q.gens, q.guard):
            return pad + f"{_return(q.tag)} " + _show_nterm_block(q.body, indent + len(_return(q.tag)) + 1)
        head = pad + _for_head(q.gens, q.guard)
        return f"{head}\n{pad}  {_return(q.tag)} " + _show_nterm_block(q.body, indent + 2 + len(_return(q.tag)) + 1)
    return pad + _show_nterm_inline(q)


def _show_nterm_block(t: Any, col: int) -> str:
    """Render a normalised term starting at column ``col``."""
    if isinstance(t, Query):
        if not _has_nested_query(t) and len(_show_query_inline(t)) < 60:
            return _show_query_inline(t)
        return "(\n" + show_nf(t, col + 2) + "\n" + " " * col + ")"
    if isinstance(t, Record) and _has_nested_query(t):
        labels = [label for label, _ in t.fields]
        tup = _is_tuple_labels(labels)
        open_, close = ("⟨", "⟩") if tup else ("{", "}")
        lines = []
        for i, (label, f) in enumerate(t.fields):
            prefix = "" if tup else f"{_label(label)} = "
            lead = open_ if i == 0 else " "
            lines.append(lead + prefix + _show_nterm_block(f, col + 1 + len(prefix)))
        return (",\n" + " " * col).join(lines) + close
    return _show_nterm_inline(t)


def _has_nested_query(t: Any) -> bool:
    if isinstance(t, (Query, SQuery, LQuery)):
        return True
    if isinstance(t, Record):
        return any(_has_nested_query(f) for _, f in t.fields)
    return False


def show_shredded(q: SQuery) -> str:
    if not q.comps:
        return "[]"
    blocks = []
    for comp in q.comps:
        lines = []
        depth = 0
        node: Any = comp
        while isinstance(node, SFor):
            if not _trivial_level(node.gens, node.guard):
                lines.append("  " * depth + _for_head(node.gens, node.guard))
                depth += 1
            node = node.body
        lines.append("  " * depth + f"{_return(node.tag)} ⟨{_show(node.outer, LOW)}, {_show_nterm_inline(node.inner)}⟩")
        blocks.append("\n".join(lines))
    return "\n++\n".join(blocks)


def show_letinserted(q: LQuery) -> str:
    if not q.comps:
        return "[]"
    blocks = []
    for c in q.comps:
        inner = f"{_for_head(c.inner.gens, c.inner.guard)}\n  return {_show_nterm_inline(c.inner.body)}"
        if c.outer is None:
            blocks.append(inner)
        else:
            outer = f"{_for_head(c.outer.gens, c.outer.guard)}\n      return {_show_nterm_inline(c.outer.body)}"
            blocks.append(f"let q = {outer}\nin {inner}")
    return "\n++\n".join(blocks)


def show_package(p: Any, show: Any = str) -> str:
    """One line per bag position: ``path: annotation``."""
    from .ast import package_annotations

    return "\n".join(f"{path_str(path)}: {show(ann)}" for path, ann in package_annotations(p))


# ---------------------------------------------------------------------------
# Values


def show_value(v: Any, annotations: bool = False) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, str)):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, Index):
        return str(v)
    if isinstance(v, Rec):
        labels = list(v)
        if _is_tuple_labels(labels):
            return "⟨" + ", ".join(show_value(v[label], annotations) for label in labels) + "⟩"
        return "{" + ", ".join(f"{_label(label)} = {show_value(x, annotations)}" for label, x in v.items()) + "}"
    if isinstance(v, Bag):
        parts = []
        for item, ann in v.annotated():
            text = show_value(item, annotations)
            if annotations and ann is not None:
                text += f" @{ann}"
            parts.append(text)
        return "[" + ", ".join(parts) + "]"
    if isinstance(v, tuple):
        return "(" + ", ".join(show_value(x, annotations) for x in v) + ")"
    return repr(v)


def value_to_json(v: Any) -> Any:
    """JSON-compatible rendering; bags become lists sorted in the value order, indexes strings."""
    if isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, Index):
        return str(v)
    if isinstance(v, Rec):
        return {_label(label): value_to_json(x) for label, x in v.items()}
    if isinstance(v, Bag):
        return [value_to_json(x) for x in sorted(v.items, key=canonical_key)]
    raise TypeError(f"not a value: {v!r}")


__all__ = [
    "show_type",
    "show_surface_type",
    "show_term",
    "show_nf",
    "show_shredded",
    "show_letinserted",
    "show_package",
    "show_value",
    "value_to_json",
]
