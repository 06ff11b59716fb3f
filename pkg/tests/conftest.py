from __future__ import annotations

import contextlib
import threading

import pytest
from hypothesis import strategies as st

from hwime_bench.agent import DeviceAgent
from hwime_bench.trajectory import Point, ResampleConfig, Sample, Stroke

coord = st.integers(min_value=-2000, max_value=2000)
xy = st.tuples(coord, coord)
strokes_st = st.lists(st.lists(xy, min_size=1, max_size=12), min_size=1, max_size=5)
label_st = st.text(min_size=1, max_size=4).filter(lambda s: s.strip() == s and s.strip())


def make_sample(geometry, label="x", sid=0) -> Sample:
    return Sample(sid, label, tuple(Stroke(tuple(Point(x, y) for x, y in s)) for s in geometry))


@st.composite
def samples(draw, label=label_st):
    return make_sample(draw(strokes_st), draw(label), draw(st.integers(0, 2**32 - 1)))


class RecordingRecognizer:
    """Wraps a recognizer and keeps what it was given, keyed by sample index."""

    def __init__(self, inner=None):
        self.inner = inner
        self.seen: dict[int, list[Stroke]] = {}
        self._lock = threading.Lock()

    def recognize(self, strokes, sample_index):
        with self._lock:
            self.seen[sample_index] = list(strokes)
        return self.inner.recognize(strokes, sample_index) if self.inner else ""


@pytest.fixture
def agent_factory():
    """Start in-process agents on ephemeral ports; all are closed at teardown."""
    agents = []

    def start(recognizer, resample: ResampleConfig | None = None, **kw) -> DeviceAgent:
        ag = DeviceAgent(recognizer, resample, port=0, **kw).start()
        agents.append(ag)
        return ag

    yield start
    for ag in agents:
        with contextlib.suppress(Exception):
            ag.close()
