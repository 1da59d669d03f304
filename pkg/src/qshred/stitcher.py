"""Reassembling shredded results into a nested value.

Each result is grouped once by outer index; building the value then follows
the package, looking up the rows that belong under every inner index it
meets.  Indexes are only hashed and compared, never inspected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .ast import Bag, PBag, PBase, PRecord, Rec, ShreddedRow, pmap


@dataclass
class StitchStats:
    """Counters showing that every result row is touched a bounded number of times."""

    grouped: int = 0
    visited: int = 0
    lookups: int = 0


@dataclass
class _Grouped:
    groups: dict[Any, list[ShreddedRow]] = field(default_factory=dict)


def _group(rows: list[ShreddedRow], stats: StitchStats) -> _Grouped:
    g = _Grouped()
    for r in rows:
        stats.grouped += 1
        g.groups.setdefault(r.outer, []).append(r)
    return g


def stitch(package: Any, root: Any, stats: StitchStats | None = None) -> Bag:
    """Nested value described by a package whose annotations are result lists.

    ``root`` is the concrete index of the top-level context under the scheme
    that produced the results.  Elements keep their own indexes as bag
    annotations when the rows carry them.
    """
    stats = stats if stats is not None else StitchStats()
    grouped = pmap(lambda rows: _group(list(rows), stats), package)
    if not isinstance(grouped, PBag):
        raise TypeError("a package for a query result must be a bag")
    return _build(root, grouped, stats)


def _build(w: Any, p: Any, stats: StitchStats) -> Any:
    if isinstance(p, PBase):
        return w
    if isinstance(p, PRecord):
        return Rec((label, _build(w[label], q, stats)) for label, q in p.fields)
    if isinstance(p, PBag):
        stats.lookups += 1
        rows = p.annotation.groups.get(w, ())
        items = []
        anns = []
        for r in rows:
            stats.visited += 1
            items.append(_build(r.payload, p.elem, stats))
            anns.append(r.inner)
        if any(a is None for a in anns):
            return Bag(items)
        return Bag(items, anns)
    raise TypeError(f"not a package: {p!r}")
