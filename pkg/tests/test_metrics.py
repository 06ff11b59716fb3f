import json
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hwime_bench.metrics import (
    AccuracyReport,
    EmptyRows,
    MergeableCounter,
    Outcome,
    ReplicaRow,
    accumulate,
    aggregate_replicas,
    count,
    percent,
    render_table,
)

TABLES = json.loads((Path(__file__).parent / "fixtures" / "published_tables.json").read_text(encoding="utf-8"))
outcomes = st.lists(st.sampled_from(list(Outcome)), max_size=60)


def half_up_cents(q: Fraction) -> Decimal:
    """Oracle: round a non-negative rational to hundredths, ties away from zero."""
    scaled = q * 100
    whole = scaled.numerator // scaled.denominator
    if scaled - whole >= Fraction(1, 2):
        whole += 1
    return Decimal(whole).scaleb(-2)


def test_accumulate_examples():
    c = count([Outcome.CORRECT, Outcome.CORRECT, Outcome.INCORRECT, Outcome.NO_RESULT])
    assert c == MergeableCounter(2, 1, 1)
    assert c.accuracy_percent() == Decimal("50.00")
    assert accumulate(MergeableCounter(), "no_result") == MergeableCounter(0, 0, 1)


def test_percent_examples():
    assert percent(0, 0) is None
    assert percent(3, 4) == Decimal("75.00")
    assert percent(1, 3) == Decimal("33.33")
    assert percent(2, 3) == Decimal("66.67")
    assert percent(1, 8) == Decimal("12.50")
    assert percent(1, 80000) == Decimal("0.00")
    assert percent(1, 40000) == Decimal("0.00")  # 0.0025 rounds down
    assert percent(3, 40000) == Decimal("0.01")  # 0.0075 rounds up


@given(st.integers(0, 10**6), st.integers(1, 10**6))
def test_percent_against_fraction(c, extra):
    total = c + extra
    assert percent(c, total) == half_up_cents(Fraction(100 * c, total))


@given(outcomes, outcomes)
def test_merge_is_homomorphic(a, b):
    assert count(a).merge(count(b)) == count(a + b)
    assert count(a).merge(count(b)) == count(b).merge(count(a))
    assert count(a).total == len(a)


def test_aggregate_examples():
    assert aggregate_replicas([Decimal("50"), Decimal("70")]) == Decimal("60.00")
    assert aggregate_replicas(["66.91", "68.46", "67.92", "66.43", "67.48"]) == Decimal("67.44")
    assert aggregate_replicas([1.005]) == Decimal("1.01")
    with pytest.raises(EmptyRows):
        aggregate_replicas([])


@pytest.mark.parametrize("set_name", sorted(TABLES))
def test_published_tables_regression(set_name):
    table = TABLES[set_name]
    checked = 0
    for system in table["systems"]:
        col = table["columns"][system]
        if col["average"] is None:
            assert all(v is None for v in col["rows"])
            continue
        assert aggregate_replicas(col["rows"]) == Decimal(col["average"])
        oracle = half_up_cents(sum((Fraction(v) for v in col["rows"]), Fraction(0)) / len(col["rows"]))
        assert oracle == Decimal(col["average"])
        checked += 1
    assert checked >= 5


def report(system, pcts, set_name="S"):
    rows = [ReplicaRow(i, accuracy_percent=None if p is None else Decimal(p)) for i, p in enumerate(pcts, 1)]
    return AccuracyReport(set_name, system, rows)


def test_render_two_replicas():
    text = render_table([report("A", ["50.00", "70.00"])])
    assert text.splitlines() == [
        "             A",
        "S_1      50.00",
        "S_2      70.00",
        "Average  60.00",
    ]


def test_render_na_column():
    text = render_table([report("A", ["10.00"]), report("HWW", [None])])
    lines = text.splitlines()
    assert lines[1].split() == ["S_1", "10.00", "N/A"]
    assert lines[2].split() == ["Average", "10.00", "N/A"]
    assert report("HWW", [None]).average_percent is None


def test_render_missing_row_is_na():
    text = render_table([report("A", ["10.00", "30.00"]), report("B", ["20.00"])])
    assert text.splitlines()[2].split() == ["S_2", "30.00", "N/A"]
    assert text.splitlines()[3].split() == ["Average", "20.00", "20.00"]


def test_column_merge_equals_single_rendering():
    a, b = report("A", ["91.15", "91.22"]), report("B", ["66.91", "68.46"])
    both = render_table([a, b])
    assert render_table({"A": a, "B": b}) == both
    assert [line.split()[1] for line in both.splitlines()[1:]] == [line.split()[-1] for line in render_table([a]).splitlines()[1:]]


def test_render_is_deterministic():
    reps = [report("A", ["1.00", "2.00"]), report("B", ["3.00", None])]
    assert render_table(reps) == render_table(reps)
