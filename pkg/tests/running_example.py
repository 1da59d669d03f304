"""Hand-written expected values for the organisation running example.

Everything here is typed in from the worked example, independently of the
code under test, and serves as the oracle for the golden and acceptance
tests.  Tags: a=1, b=2, c=3, d=4, e=5, top=0.
"""

from __future__ import annotations

from qshred.ast import INDEX, STRING, Bag, BagT, Index, Rec, RecordT, tuple_type

A, B, C, D, E, TOP = 1, 2, 3, 4, 5, 0

RESULT_TYPE = BagT(
    RecordT(
        (
            ("department", STRING),
            ("people", BagT(RecordT((("name", STRING), ("tasks", BagT(STRING)))))),
        )
    )
)

A1 = BagT(tuple_type(INDEX, RecordT((("department", STRING), ("people", INDEX)))))
A2 = BagT(tuple_type(INDEX, RecordT((("name", STRING), ("tasks", INDEX)))))
A3 = BagT(tuple_type(INDEX, STRING))

A1_TEXT = "Bag ⟨Index, ⟨department:String, people:Index⟩⟩"
A2_TEXT = "Bag ⟨Index, ⟨name:String, tasks:Index⟩⟩"
A3_TEXT = "Bag ⟨Index, String⟩"


def _person(name: str, *tasks: str) -> Rec:
    return Rec(name=name, tasks=Bag(tasks))


RESULT_VALUE = Bag(
    [
        Rec(department="Product", people=Bag([_person("Bert", "build"), _person("Pat", "buy")])),
        Rec(department="Research", people=Bag()),
        Rec(department="Quality", people=Bag()),
        Rec(
            department="Sales",
            people=Bag([_person("Erik", "call", "enthuse"), _person("Fred", "call"), _person("Sue", "buy")]),
        ),
    ]
)

ROOT_FLAT = Index(TOP, 1)

# (outer index, payload) rows under the flat scheme
R1 = [
    (ROOT_FLAT, Rec(department="Product", people=Index(A, 1))),
    (ROOT_FLAT, Rec(department="Quality", people=Index(A, 2))),
    (ROOT_FLAT, Rec(department="Research", people=Index(A, 3))),
    (ROOT_FLAT, Rec(department="Sales", people=Index(A, 4))),
]

R2_FLAT = [
    (Index(A, 1), Rec(name="Bert", tasks=Index(B, 1))),
    (Index(A, 4), Rec(name="Erik", tasks=Index(B, 2))),
    (Index(A, 4), Rec(name="Fred", tasks=Index(B, 3))),
    (Index(A, 1), Rec(name="Pat", tasks=Index(D, 1))),
    (Index(A, 4), Rec(name="Sue", tasks=Index(D, 2))),
]

R3_FLAT = [
    (Index(B, 1), "build"),
    (Index(B, 2), "call"),
    (Index(B, 2), "enthuse"),
    (Index(B, 3), "call"),
    (Index(D, 1), "buy"),
    (Index(D, 2), "buy"),
]

# natural-scheme rows, with each dynamic index written as its key values
R2_KEYS = [
    ((A, (1,)), ("Bert", (B, (1, 2)))),
    ((A, (4,)), ("Erik", (B, (4, 5)))),
    ((A, (4,)), ("Fred", (B, (4, 6)))),
    ((A, (1,)), ("Pat", (D, (1, 2)))),
    ((A, (4,)), ("Sue", (D, (4, 7)))),
]

R3_KEYS = [
    ((B, (1, 2)), "build"),
    ((B, (4, 5)), "call"),
    ((B, (4, 5)), "enthuse"),
    ((B, (4, 6)), "call"),
    ((D, (1, 2)), "buy"),
    ((D, (4, 7)), "buy"),
]


def key_values(idx: Index) -> tuple[int, tuple]:
    """A natural index as (tag, concatenated key values)."""
    flat = tuple(v for level in idx.dynamic for _table, keys in level for v in keys)
    return idx.tag, flat
