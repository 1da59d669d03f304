"""Random instances of the organisation schema for benchmarks and tests."""

from __future__ import annotations

import random

from .ast import Database, Schema
from .corpus import schema_text
from .frontend import parse_schema

TASKS = ("abstract", "build", "buy", "call", "design", "enthuse", "test")


def org_schema() -> Schema:
    return parse_schema(schema_text())


def generate_org_data(
    departments: int,
    seed: int,
    mean_employees: int = 10,
    mean_contacts: int = 3,
    schema: Schema | None = None,
) -> Database:
    """A reproducible organisation database.

    Employees per department are uniform on ``0 .. 2*mean_employees``, each
    employee has 0, 1 or 2 distinct tasks with equal probability, and
    salaries include a share of very low and very high earners so that the
    outlier queries select something.  Employee names are globally unique,
    because tasks refer to employees by name.
    """
    if departments < 1:
        raise ValueError("departments must be at least 1")
    rng = random.Random(seed)
    depts, emps, tasks, contacts = [], [], [], []
    for d in range(1, departments + 1):
        dname = f"dept{d}"
        depts.append({"name": dname, "id": d})
        for _ in range(rng.randint(0, 2 * mean_employees)):
            eid = len(emps) + 1
            ename = f"emp{eid}"
            emps.append({"dept": dname, "name": ename, "salary": _salary(rng), "id": eid})
            for task in rng.sample(TASKS, rng.randint(0, 2)):
                tasks.append({"employee": ename, "task": task, "id": len(tasks) + 1})
        for _ in range(rng.randint(0, 2 * mean_contacts)):
            cid = len(contacts) + 1
            contacts.append({"dept": dname, "name": f"contact{cid}", "client": rng.random() < 0.5, "id": cid})
    tables = {"departments": depts, "employees": emps, "tasks": tasks, "contacts": contacts}
    return Database(schema or org_schema(), tables)


def _salary(rng: random.Random) -> int:
    u = rng.random()
    if u < 0.1:
        return rng.randint(1, 9) * 100
    if u < 0.2:
        return rng.randint(2, 5) * 1_000_000
    # coarse grid so that equal salaries occur
    return rng.randint(1, 100) * 1000
