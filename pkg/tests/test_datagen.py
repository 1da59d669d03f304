from __future__ import annotations

from statistics import mean

import pytest

from qshred.datagen import TASKS, generate_org_data, org_schema


def test_department_count_and_determinism():
    a = generate_org_data(4, seed=1)
    b = generate_org_data(4, seed=1)
    assert len(a.rows("departments")) == 4
    assert a.to_json() == b.to_json()
    assert generate_org_data(4, seed=2).to_json() != a.to_json()


def test_mean_employees_is_close_to_the_configured_mean():
    for configured in (10, 100):
        per_dept = []
        for seed in range(1, 101):
            db = generate_org_data(4, seed, mean_employees=configured)
            for d in db.rows("departments"):
                per_dept.append(sum(1 for e in db.rows("employees") if e["dept"] == d["name"]))
        assert abs(mean(per_dept) - configured) <= 0.2 * configured


def test_tasks_per_employee_are_zero_to_two_distinct_tasks():
    db = generate_org_data(8, seed=3)
    counts = {e["name"]: 0 for e in db.rows("employees")}
    seen: dict[str, set[str]] = {}
    for t in db.rows("tasks"):
        counts[t["employee"]] += 1
        seen.setdefault(t["employee"], set()).add(t["task"])
        assert t["task"] in TASKS
    assert set(counts.values()) <= {0, 1, 2}
    assert all(len(s) == counts[name] for name, s in seen.items())


def test_every_table_is_keyed_by_unique_ids():
    db = generate_org_data(16, seed=5)
    for t in org_schema().tables:
        assert t.key == ("id",)
        assert db.check_keys(t.name) == ("id",)


def test_employee_names_are_globally_unique():
    db = generate_org_data(16, seed=9)
    names = [e["name"] for e in db.rows("employees")]
    assert len(names) == len(set(names))


def test_salaries_include_outliers():
    salaries = [e["salary"] for seed in range(1, 6) for e in generate_org_data(8, seed).rows("employees")]
    assert any(s < 1000 for s in salaries) and any(s > 1_000_000 for s in salaries)


def test_contacts_have_client_flags():
    contacts = generate_org_data(8, seed=4).rows("contacts")
    assert {c["client"] for c in contacts} == {True, False}


def test_at_least_one_department_is_required():
    with pytest.raises(ValueError):
        generate_org_data(0, seed=1)
