from __future__ import annotations

import json

import pytest
from hypothesis import given, settings

from qshred.ast import BOOL, INT, STRING, BagT, Empty, For, If, Project, Record, RecordT, Singleton, Table, Var
from qshred.corpus import QUERIES, query_text, schema_text
from qshred.errors import NotFlatNested, QuerySyntaxError, QueryTypeError, SchemaError
from qshred.frontend import (
    elaborate,
    load_query,
    parse_data,
    parse_query,
    parse_schema,
    parse_term,
    parse_type,
    schema_to_json,
    type_of,
    typecheck,
)
from qshred.pretty import show_surface_type, show_term

import running_example as ex
from qshred_strategies import typed_queries


def test_comprehension_parses_to_for_and_singleton():
    term = parse_term("for (x <- departments) return {name = x.name}")
    assert term == For("x", Var("departments"), Singleton(Record((("name", Project(Var("x"), "name")),))))


def test_missing_generator_source_is_a_syntax_error():
    with pytest.raises(QuerySyntaxError) as err:
        parse_term("for (x <- )")
    assert (err.value.line, err.value.col) == (1, 11)


def test_syntax_error_reports_line_and_column():
    with pytest.raises(QuerySyntaxError) as err:
        parse_query("-- comment\nfor (x <- departments\n")
    assert err.value.line == 3
    assert "expected ')'" in str(err.value)


def test_unterminated_string_is_rejected():
    with pytest.raises(QuerySyntaxError):
        parse_term('"abc')


def test_tuples_are_positional_records():
    assert parse_term("(1, true)") == parse_term("{1 = 1, 2 = true}")


def test_type_syntax():
    want = BagT(RecordT((("name", STRING), ("tasks", BagT(STRING)))))
    assert parse_type("Bag {name: String, tasks: Bag String}") == want
    assert parse_type("[{name: String, tasks: [String]}]") == want
    assert show_surface_type(want) == "[{name: String, tasks: [String]}]"


def test_organisation_schema_has_four_keyed_tables(schema):
    assert sorted(t.name for t in schema.tables) == ["contacts", "departments", "employees", "tasks"]
    assert all(t.key == ("id",) for t in schema.tables)
    assert parse_schema(schema_to_json(schema)) == schema


def test_empty_table_map_gives_empty_schema():
    assert parse_schema('{"tables": {}}').tables == ()


@pytest.mark.parametrize(
    "tables",
    [
        {"t": {"columns": [["a", "Int"]], "key": ["b"]}},
        {"t": {"columns": [["a", "Bag Int"]]}},
        {"t": {"columns": [["a#b", "Int"]]}},
        {"t": {"columns": [["a", "Int"], ["a", "Bool"]]}},
        {"t": {}},
    ],
)
def test_bad_schemas_are_rejected(tables):
    with pytest.raises(SchemaError):
        parse_schema(json.dumps({"tables": tables}))


def test_data_must_match_the_schema(schema):
    with pytest.raises(SchemaError):
        parse_data({"departments": [{"name": "Sales", "id": "one"}]}, schema)


def test_employees_of_dept_has_the_nested_type(schema):
    term = elaborate(
        parse_query(
            "fun tasksOfEmp(e) = for (t <- tasks) where (t.employee = e.name) return t.task\n"
            "fun employeesOfDept(d) = for (e <- employees) where (d.name = e.dept)"
            " return {name = e.name, salary = e.salary, tasks = tasksOfEmp(e)}\n"
            "fun(d: {name: String}) -> employeesOfDept(d)"
        ),
        schema,
    )
    t = type_of(term, schema)
    assert t.arg == RecordT((("name", STRING),))
    assert t.res == BagT(RecordT((("name", STRING), ("salary", INT), ("tasks", BagT(STRING)))))


def test_outliers_query_has_the_result_type(schema):
    _, t = load_query(query_text("Q6"), schema)
    assert t == ex.RESULT_TYPE


@pytest.mark.parametrize("name", sorted(QUERIES))
def test_corpus_queries_typecheck_to_flat_nested_bags(schema, name):
    _, t = load_query(query_text(name), schema, name)
    assert isinstance(t, BagT)


@pytest.mark.parametrize(
    "text, message",
    [
        ("if 3 then [] else []", "expected Bool"),
        ("for (x <- departments) return x.nme", "field 'nme'"),
        ("for (x <- departments) return x.name + 1", "expected Int"),
        ("return 1 ++ return \"a\"", "expected Int"),
        ("for (x <- nosuch) return x", "unbound variable"),
    ],
)
def test_type_errors_carry_location_and_expectation(schema, text, message):
    with pytest.raises(QueryTypeError) as err:
        load_query(text, schema)
    assert message in str(err.value)
    assert str(err.value).startswith("1:")


def test_function_results_are_not_flat_nested(schema):
    with pytest.raises(NotFlatNested):
        load_query("return (fun(x) -> x)", schema)


def test_empty_bag_defaults_to_unit_records(schema):
    assert typecheck(parse_term("[]"), schema) == BagT(RecordT(()))


def test_bindings_are_inlined_and_binders_renamed_apart(schema):
    term = elaborate(parse_query("fun f(x) = x + 1\nfor (x <- departments) return f(x.id)"), schema)
    assert show_term(term) == "for (x <- table departments) return (fun(x_1) -> x_1 + 1)(x.id)"
    assert isinstance(term.source, Table)


def test_where_desugars_to_a_conditional(schema):
    term = elaborate(parse_query("for (x <- departments) where (x.id = 1) return x.name"), schema)
    assert isinstance(term.body, If) and term.body.else_ == Empty()
    # the printer puts the sugar back
    assert show_term(term) == "for (x <- table departments) where (x.id = 1) return x.name"


def test_schema_text_round_trips_through_json():
    assert parse_schema(json.loads(schema_text())) == parse_schema(schema_text())


@settings(max_examples=300)
@given(typed_queries())
def test_parse_inverts_pretty_printing(q):
    term, _ = q
    assert parse_term(show_term(term)) == term


def test_comparison_operators_are_boolean(schema):
    for op in ("=", "<>", "<", ">", "<=", ">="):
        assert type_of(parse_term(f"1 {op} 2"), schema) == BOOL
