"""Recognizers the simulated device can run.

The nearest-neighbour recognizer is a reference implementation so the harness
can be checked end to end without a commercial IME: samples are normalized,
their strokes concatenated into one sequence, and compared to stored templates
with dynamic time warping. Points that start a new stroke carry a pen-up flag;
aligning a flagged point with an unflagged one costs an extra ``gap_penalty``,
so stroke count influences the distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .dataset import SamplePool
from .trajectory import Sample, Stroke, normalize_size


class EmptyStore(ValueError):
    pass


class Recognizer(Protocol):
    def recognize(self, strokes: Sequence[Stroke], sample_index: int) -> str:
        """Return committed text for one written character; "" means no commit."""
        ...


def _local_cost(a: np.ndarray, b: np.ndarray, gap_penalty: float) -> np.ndarray:
    # a: (n, k), b: (..., m, k) -> (..., n, m)
    dx = a[:, None, 0] - b[..., None, :, 0]
    dy = a[:, None, 1] - b[..., None, :, 1]
    cost = np.sqrt(dx * dx + dy * dy)
    if gap_penalty and a.shape[-1] > 2 and b.shape[-1] > 2:
        cost = cost + gap_penalty * np.abs(a[:, None, 2] - b[..., None, :, 2])
    return cost


def dtw_distance(a, b, gap_penalty: float = 0.0) -> float:
    """Classic DTW with Euclidean step cost and moves (i+1,j), (i,j+1), (i+1,j+1).

    ``a`` and ``b`` are sequences of ``(x, y)`` or ``(x, y, pen_up_flag)``; the
    flag column only matters when ``gap_penalty`` is non-zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dtw_distance needs non-empty sequences")
    cost = _local_cost(a, b, gap_penalty).tolist()
    n, m = len(a), len(b)
    inf = float("inf")
    prev = [0.0] + [inf] * m
    for i in range(n):
        row = [inf] * (m + 1)
        ci = cost[i]
        for j in range(m):
            row[j + 1] = ci[j] + min(prev[j + 1], row[j], prev[j])
        prev = row
    return prev[m]


def dtw_to_many(query: np.ndarray, templates: Sequence[np.ndarray], gap_penalty: float = 0.0) -> np.ndarray:
    """DTW distance from ``query`` to each template, vectorised over anti-diagonals.

    Agrees exactly with dtw_distance: the same step costs are combined in the
    same order.
    """
    query = np.asarray(query, dtype=float)
    lengths = np.array([len(t) for t in templates])
    n, big_m, k = len(query), int(lengths.max()), query.shape[1]
    padded = np.zeros((len(templates), big_m, k))
    for row, t in zip(padded, templates):
        row[: len(t)] = t
    cost = _local_cost(query, padded, gap_penalty)
    acc = np.full((len(templates), n + 1, big_m + 1), np.inf)
    acc[:, 0, 0] = 0.0
    for d in range(n + big_m - 1):
        i = np.arange(max(0, d - big_m + 1), min(n - 1, d) + 1)
        j = d - i
        best = np.minimum(np.minimum(acc[:, i, j + 1], acc[:, i + 1, j]), acc[:, i, j])
        acc[:, i + 1, j + 1] = cost[:, i, j] + best
    return acc[np.arange(len(templates)), n, lengths]


def pen_sequence(sample: Sample) -> np.ndarray:
    """Concatenate strokes into an (N, 3) array of x, y, pen-up flag."""
    rows = []
    for si, stroke in enumerate(sample.strokes):
        for pi, p in enumerate(stroke.points):
            rows.append((p.x, p.y, 1.0 if si > 0 and pi == 0 else 0.0))
    return np.array(rows, dtype=float)


@dataclass
class TemplateStore:
    target: int
    templates: dict[str, list[Sample]] = field(default_factory=dict)
    _flat: tuple[list[str], list[np.ndarray]] | None = field(default=None, repr=False, compare=False)

    def add(self, label: str, sample: Sample) -> None:
        if not label:
            raise ValueError("template label must be non-empty")
        self.templates.setdefault(label, []).append(sample)
        self._flat = None

    def __len__(self) -> int:
        return sum(len(v) for v in self.templates.values())

    def flat(self) -> tuple[list[str], list[np.ndarray]]:
        if self._flat is None:
            labels, seqs = [], []
            for label in sorted(self.templates):
                for s in self.templates[label]:
                    labels.append(label)
                    seqs.append(pen_sequence(s))
            self._flat = (labels, seqs)
        return self._flat


def train_templates(pool: SamplePool, target: int, per_label: int) -> TemplateStore:
    """Keep the first ``per_label`` samples of every label, normalized."""
    if not pool.samples:
        raise ValueError("cannot train on an empty pool")
    store = TemplateStore(target)
    for s in pool.samples:
        if len(store.templates.get(s.label, ())) < per_label:
            store.add(s.label, normalize_size(s, target))
    return store


def default_gap_penalty(target: int) -> float:
    return target / 4


def nn_classify(
    sample: Sample, store: TemplateStore, target: int, gap_penalty: float | None = None
) -> str:
    if len(store) == 0:
        raise EmptyStore("template store is empty")
    if gap_penalty is None:
        gap_penalty = default_gap_penalty(target)
    query = pen_sequence(normalize_size(sample, target))
    labels, seqs = store.flat()
    dists = dtw_to_many(query, seqs, gap_penalty)
    best = min(zip(dists.tolist(), labels))
    return best[1]


class NearestNeighbourRecognizer:
    def __init__(self, store: TemplateStore, gap_penalty: float | None = None):
        self.store = store
        self.gap_penalty = gap_penalty

    def recognize(self, strokes: Sequence[Stroke], sample_index: int) -> str:
        sample = Sample(sample_index, "?", tuple(strokes))
        return nn_classify(sample, self.store, self.store.target, self.gap_penalty)


class OracleRecognizer:
    """Answers from a sample_index -> label map loaded out of band; unknown index gives ""."""

    def __init__(self, labels: Mapping[int, str]):
        self.labels = dict(labels)

    def recognize(self, strokes: Sequence[Stroke], sample_index: int) -> str:
        return self.labels.get(sample_index, "")


class ConstantRecognizer:
    def __init__(self, text: str):
        self.text = text

    def recognize(self, strokes: Sequence[Stroke], sample_index: int) -> str:
        return self.text


def parse_oracle_labels(text: str) -> dict[int, str]:
    labels = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        idx, sep, label = line.partition("\t")
        if not sep:
            raise ValueError(f"line {lineno}: expected index<TAB>label")
        labels[int(idx)] = label
    return labels


def format_oracle_labels(labels: Mapping[int, str]) -> str:
    return "".join(f"{i}\t{labels[i]}\n" for i in sorted(labels))
