from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshred.ast import (
    DOWN,
    INT,
    Bag,
    Database,
    Empty,
    Index,
    LComp,
    LQuery,
    Schema,
    TableSchema,
    Union,
    Var,
    erase,
    multiset_equal,
    package_annotations,
    paths_of,
)
from qshred.backend import let_insert
from qshred.corpus import QUERIES
from qshred.datagen import generate_org_data, org_schema
from qshred.errors import IndexUndefined, KeyNotUnique, NoKeyDeclared, UnboundQueryName, UnboundVariable
from qshred.evaluator import (
    SCHEMES,
    canonical_indexes,
    eval_annotated,
    eval_letinserted,
    eval_nested,
    eval_shredded,
    flat_index_fn,
    indexes_along,
    is_well_indexed,
    letinserted_rows_to_shredded,
    make_index_fn,
    natural_index_fn,
)
from qshred.frontend import load_query, parse_term
from qshred.normalizer import annotate, normalize
from qshred.shredder import shred_term

import running_example as ex
from qshred_strategies import SCHEMA, databases, typed_queries

PEOPLE = (DOWN, "people")
TASKS = (DOWN, "people", DOWN, "tasks")


def same_rows(a, b) -> bool:
    return Counter(map(repr, a)) == Counter(map(repr, b))


def annotated(text: str, schema=SCHEMA):
    term, a = load_query(text, schema)
    return annotate(normalize(term, a, schema))


def three_departments() -> Database:
    rows = [{"name": n, "id": i} for i, n in enumerate("PQR", 1)]
    return Database(SCHEMA, {"departments": rows, "employees": [], "tasks": [], "contacts": []})


def empty_db() -> Database:
    return Database(SCHEMA, {t.name: [] for t in SCHEMA.tables})


def test_q_comp_evaluates_to_the_nested_result(qcomp, sample_db):
    assert multiset_equal(eval_nested(qcomp.normal_form, sample_db), ex.RESULT_VALUE)


def test_empty_and_union():
    db = empty_db()
    assert eval_nested(Empty(), db) == Bag()
    m, n = parse_term("return 1 ++ return 2"), parse_term("return 3")
    assert eval_nested(Union(m, n), db).items == eval_nested(m, db).items + eval_nested(n, db).items


def test_unbound_variables_are_reported():
    with pytest.raises(UnboundVariable):
        eval_nested(Var("nope"), empty_db())


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_annotated_semantics_erases_to_nested(corpus_compiled, sample_db, name):
    c = corpus_compiled[name]
    for scheme in SCHEMES:
        v = eval_annotated(c.annotated, sample_db, make_index_fn(scheme, c.annotated, sample_db))
        assert multiset_equal(erase(v), eval_nested(c.normal_form, sample_db))
        assert is_well_indexed(v, paths_of(c.type))


def test_running_example_is_well_indexed(qcomp, sample_db):
    v = eval_annotated(qcomp.annotated, sample_db)
    for path in paths_of(ex.RESULT_TYPE):
        found = indexes_along(path, v)
        assert len(found) == len(set(found))
    assert len(indexes_along(PEOPLE, v)) == 5


def test_annotated_evaluation_of_an_empty_database(qcomp):
    assert eval_annotated(qcomp.annotated, empty_db()) == Bag()


def test_shredded_rows_of_the_running_example(qcomp, sample_db):
    ix = flat_index_fn(qcomp.annotated, sample_db)
    q2 = eval_shredded(shred_term(qcomp.annotated, PEOPLE), sample_db, ix)
    q3 = eval_shredded(shred_term(qcomp.annotated, TASKS), sample_db, ix)
    assert same_rows([(r.outer, r.payload) for r in q2], ex.R2_FLAT)
    assert same_rows([(r.outer, r.payload) for r in q3], ex.R3_FLAT)
    assert (q3[-1].outer, q3[-1].payload) == (Index(ex.D, 2), "buy")


def test_shredded_evaluation_on_an_empty_database(qcomp):
    db = empty_db()
    assert eval_shredded(shred_term(qcomp.annotated, ()), db, flat_index_fn(qcomp.annotated, db)) == []


def test_canonical_indexes_of_a_single_comprehension():
    l = annotated("for (x <- departments) return x.name")
    assert canonical_indexes(l, three_departments()) == [Index(1, (1, 1)), Index(1, (1, 2)), Index(1, (1, 3))]
    assert canonical_indexes(annotated("for (x <- departments) where (false) return x.name"), three_departments()) == []


def test_q_comp_has_one_outer_index_per_department(qcomp, sample_db):
    tags = Counter(i.tag for i in canonical_indexes(qcomp.annotated, sample_db))
    assert tags[ex.A] == 4


def test_natural_indexes_use_key_values():
    l = annotated("for (x <- departments) return x.name")
    ix = natural_index_fn(l, three_departments())
    for j in (1, 2, 3):
        assert ix(Index(1, (1, j))) == Index(1, ((("departments", (j,)),),))
    assert ix.root == Index(0, ())


def test_natural_indexes_on_empty_tables():
    ix = natural_index_fn(annotated("for (x <- departments) return x.name"), empty_db())
    assert [k for k in ix.mapping if k.tag != 0] == []


def test_natural_indexes_need_keys():
    schema = Schema((TableSchema("t", (("a", INT),)),))
    db = Database(schema, {"t": [{"a": 1}, {"a": 1}]})
    with pytest.raises(NoKeyDeclared):
        natural_index_fn(annotated("for (x <- t) return x.a", schema), db)


def test_natural_indexes_need_unique_keys():
    schema = Schema((TableSchema("t", (("a", INT),), ("a",)),))
    db = Database(schema, {"t": [{"a": 1}, {"a": 1}]})
    with pytest.raises(KeyNotUnique):
        natural_index_fn(annotated("for (x <- t) return x.a", schema), db)


def test_flat_indexes_number_each_tag_from_one(qcomp, sample_db):
    ix = flat_index_fn(qcomp.annotated, sample_db)
    by_tag: dict[int, list[int]] = {}
    for canonical in canonical_indexes(qcomp.annotated, sample_db):
        flat = ix(canonical)
        by_tag.setdefault(flat.tag, []).append(flat.dynamic)
    assert by_tag[ex.A] == [1, 2, 3, 4]
    assert by_tag[ex.B] == [1, 2, 3]
    assert flat_index_fn(annotated("return 1"), empty_db())(Index(1, (1, 1))) == Index(1, 1)


def test_index_functions_are_partial():
    ix = flat_index_fn(annotated("for (x <- departments) return x.name"), three_departments())
    with pytest.raises(IndexUndefined):
        ix(Index(9, (1,)))


def test_let_inserted_semantics_of_q2(qcomp, sample_db, schema):
    m = shred_term(qcomp.annotated, PEOPLE)
    t = dict(package_annotations(qcomp.shredded_types))[PEOPLE]
    rows = letinserted_rows_to_shredded(eval_letinserted(let_insert(m, schema), sample_db), t)
    assert same_rows([(r.outer, r.payload) for r in rows], ex.R2_FLAT)


def test_let_inserted_false_guard_gives_no_rows():
    l = annotated("for (x <- departments) for (y <- employees) where (false) return y.name")
    assert eval_letinserted(let_insert(shred_term(l, ()), SCHEMA), three_departments()) == []


def test_let_bound_names_must_be_in_scope(qcomp, schema, sample_db):
    lq = let_insert(shred_term(qcomp.annotated, PEOPLE), schema)
    detached = LQuery(tuple(LComp(None, c.inner) for c in lq.comps))
    with pytest.raises(UnboundQueryName):
        eval_letinserted(detached, sample_db)


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_let_insertion_agrees_with_flat_shredding(corpus_compiled, schema, name):
    c = corpus_compiled[name]
    types = dict(package_annotations(c.shredded_types))
    for seed in range(1, 6):
        db = generate_org_data(3, seed, schema=schema)
        ix = flat_index_fn(c.annotated, db)
        for path, m in package_annotations(c.shredded):
            expected = [(r.outer, r.payload) for r in eval_shredded(m, db, ix)]
            rows = letinserted_rows_to_shredded(eval_letinserted(let_insert(m, schema), db), types[path])
            assert [(r.outer, r.payload) for r in rows] == expected


@settings(max_examples=150)
@given(typed_queries(), databases())
def test_every_scheme_is_well_indexed(q, db):
    term, a = q
    l = annotate(normalize(term, a, SCHEMA))
    reference = eval_nested(term, db)
    for scheme in SCHEMES:
        v = eval_annotated(l, db, make_index_fn(scheme, l, db))
        assert multiset_equal(erase(v), reference)
        assert is_well_indexed(v, paths_of(a))


@given(st.lists(st.integers(), max_size=6))
def test_enumeration_is_position_faithful(xs):
    schema = org_schema()
    rows = [{"name": f"d{i}", "id": x} for i, x in enumerate(xs)]
    db = Database(schema, {"departments": rows, "employees": [], "tasks": [], "contacts": []})
    l = annotated("for (x <- departments) return x.id", schema)
    found = canonical_indexes(l, db)
    assert [i.dynamic for i in found] == [(1, k) for k in range(1, len(xs) + 1)]
    v = eval_annotated(l, db)
    assert list(v.items) == [r["id"] for r in db.rows("departments")]
