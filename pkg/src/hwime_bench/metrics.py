"""Accuracy statistics in the layout of per-replica result tables.

Percentages are computed from integer counts and rounded half up to two
decimals. The "Average" row is the mean of the rounded replica percentages, not
the pooled accuracy; for equal-size replicas the two agree up to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

CENT = Decimal("0.01")
NA = "N/A"


class Outcome(str, enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    NO_RESULT = "no_result"


class EmptyRows(ValueError):
    pass


@dataclass(frozen=True)
class MergeableCounter:
    correct: int = 0
    incorrect: int = 0
    no_result: int = 0

    @property
    def total(self) -> int:
        return self.correct + self.incorrect + self.no_result

    def merge(self, other: "MergeableCounter") -> "MergeableCounter":
        return MergeableCounter(
            self.correct + other.correct,
            self.incorrect + other.incorrect,
            self.no_result + other.no_result,
        )

    def accuracy_percent(self) -> Decimal | None:
        return percent(self.correct, self.total)


def accumulate(counter: MergeableCounter, record) -> MergeableCounter:
    """Count one record. Accepts an Outcome or anything with an ``outcome`` attribute."""
    outcome = Outcome(getattr(record, "outcome", record))
    if outcome is Outcome.CORRECT:
        return MergeableCounter(counter.correct + 1, counter.incorrect, counter.no_result)
    if outcome is Outcome.INCORRECT:
        return MergeableCounter(counter.correct, counter.incorrect + 1, counter.no_result)
    return MergeableCounter(counter.correct, counter.incorrect, counter.no_result + 1)


def count(records: Iterable) -> MergeableCounter:
    c = MergeableCounter()
    for r in records:
        c = accumulate(c, r)
    return c


def round_cents(value: Decimal) -> Decimal:
    return value.quantize(CENT, rounding=ROUND_HALF_UP)


def percent(correct: int, total: int) -> Decimal | None:
    """100 * correct / total rounded half up to 2 decimals; None when total is 0."""
    if total == 0:
        return None
    # exact integer rounding: floor((10000*c/total) + 1/2) hundredths
    hundredths = (20000 * correct + total) // (2 * total)
    return Decimal(hundredths).scaleb(-2)


def _dec(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(str(value))


def aggregate_replicas(rows: Sequence) -> Decimal:
    """Mean of replica percentages, rounded half up to 2 decimals."""
    if not rows:
        raise EmptyRows("cannot average zero replica rows")
    vals = [_dec(r) for r in rows]
    return round_cents(sum(vals, Decimal(0)) / len(vals))


@dataclass(frozen=True)
class ReplicaRow:
    replica_index: int
    correct: int = 0
    incorrect: int = 0
    no_result: int = 0
    accuracy_percent: Decimal | None = None

    @classmethod
    def from_counter(cls, replica_index: int, c: MergeableCounter) -> "ReplicaRow":
        return cls(replica_index, c.correct, c.incorrect, c.no_result, c.accuracy_percent())


@dataclass
class AccuracyReport:
    set_name: str
    system: str = "system"
    rows: list[ReplicaRow] = field(default_factory=list)

    @property
    def average_percent(self) -> Decimal | None:
        vals = [r.accuracy_percent for r in self.rows if r.accuracy_percent is not None]
        return aggregate_replicas(vals) if vals else None

    def row(self, replica_index: int) -> ReplicaRow | None:
        for r in self.rows:
            if r.replica_index == replica_index:
                return r
        return None


def _cell(value: Decimal | None) -> str:
    return NA if value is None else f"{value:.2f}"


def render_table(reports: Sequence[AccuracyReport] | Mapping[str, AccuracyReport], set_name: str | None = None) -> str:
    """Fixed-width table: one row per replica plus Average, one column per system.

    A system without a value for some replica shows N/A there and averages over
    the replicas it has; a system with no values at all shows N/A throughout.
    """
    if isinstance(reports, Mapping):
        reports = list(reports.values())
    if set_name is None:
        names = sorted({r.set_name for r in reports})
        set_name = names[0] if len(names) == 1 else "+".join(names)
    indices = sorted({row.replica_index for r in reports for row in r.rows})
    header = [""] + [r.system for r in reports]
    body = []
    for i in indices:
        cells = [f"{set_name}_{i}"]
        for r in reports:
            row = r.row(i)
            cells.append(_cell(row.accuracy_percent if row else None))
        body.append(cells)
    body.append(["Average"] + [_cell(r.average_percent) for r in reports])

    widths = [max(len(line[c]) for line in [header] + body) for c in range(len(header))]
    out = []
    for line in [header] + body:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])]
        out.append("  ".join([first] + rest).rstrip())
    return "\n".join(out) + "\n"
