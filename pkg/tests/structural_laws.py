"""Structural laws checked on 1000 random cases each.

The acceptance suite calls these directly; hypothesis runs each one to
its configured number of examples.
"""

from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from qshred.ast import (
    Bag,
    BagT,
    IndexT,
    Rec,
    RecordT,
    erase_package,
    nesting_degree,
    package_annotations,
    paths_of,
)
from qshred.backend import flatten_type, flatten_value, let_type, unflatten_values
from qshred.evaluator import SCHEMES, eval_annotated, is_well_indexed, make_index_fn
from qshred.normalizer import annotate, is_normal, normalize, tags_of
from qshred.shredder import shred_package, shred_type_package
from qshred_strategies import SCHEMA, databases, nested_types, record_flat_types, typed_queries, values_of

CASES = 1000


def _flat(t) -> bool:
    if isinstance(t, BagT):
        return False
    if isinstance(t, RecordT):
        return all(_flat(ft) for _, ft in t.fields)
    return True


@settings(max_examples=CASES)
@given(nested_types(max_leaves=10).map(lambda t: t if isinstance(t, BagT) else BagT(t)))
def law_erase_after_shred_is_identity(a):
    pkg = shred_type_package(a)
    assert erase_package(pkg) == a
    for _path, st_ in package_annotations(pkg):
        # each shredded type is a bag of (index, flat payload) pairs
        assert isinstance(st_, BagT) and isinstance(st_.elem.field_type("#1"), IndexT)
        assert _flat(st_.elem.field_type("#2"))


@settings(max_examples=CASES)
@given(st.data())
def law_flatten_unflatten_round_trip(data):
    t = data.draw(st.one_of(record_flat_types(), nested_types(max_leaves=6).map(_shredded_row_type)))
    v = data.draw(values_of(t))
    row = flatten_value(v, t)
    assert list(row) == [c for c, _ in flatten_type(t)]
    assert unflatten_values([row], t) == [v]


def _shredded_row_type(a):
    """Let-inserted element type of the outermost shredded query of ``a``."""
    a = a if isinstance(a, BagT) else BagT(a)
    return let_type(shred_type_package(a).annotation).elem


@settings(max_examples=CASES)
@given(typed_queries())
def law_normal_forms_are_valid(q):
    term, a = q
    nf = normalize(term, a, SCHEMA)
    assert is_normal(nf, SCHEMA)


@settings(max_examples=CASES)
@given(typed_queries(), databases())
def law_annotations_are_well_indexed(q, db):
    term, a = q
    l = annotate(normalize(term, a, SCHEMA))
    tags = tags_of(l)
    assert len(set(tags)) == len(tags)
    for scheme in SCHEMES:
        v = eval_annotated(l, db, make_index_fn(scheme, l, db))
        assert _fully_annotated(v)
        assert is_well_indexed(v, paths_of(a))


def _fully_annotated(v) -> bool:
    if isinstance(v, Bag):
        return v.annotations is not None and all(_fully_annotated(x) for x in v.items)
    if isinstance(v, Rec):
        return all(_fully_annotated(x) for x in v.values())
    return True


@settings(max_examples=CASES)
@given(typed_queries())
def law_one_shredded_query_per_bag(q):
    term, a = q
    l = annotate(normalize(term, a, SCHEMA))
    assert len(package_annotations(shred_package(l, a))) == nesting_degree(a)


LAWS = {
    "erase after shred is the identity on types": law_erase_after_shred_is_identity,
    "flatten then unflatten is the identity": law_flatten_unflatten_round_trip,
    "normaliser output passes the grammar validator": law_normal_forms_are_valid,
    "indexes along every path are pairwise distinct": law_annotations_are_well_indexed,
    "shredded query count equals nesting degree": law_one_shredded_query_per_bag,
}
