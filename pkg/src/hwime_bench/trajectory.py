"""Trajectory data model and the transformations applied before and after replay.

Samples are stored as integer-grid strokes with no timing information. At replay
time they are size-normalized, turned into a Down/Move/Up touch-event stream on a
uniform ``t1`` clock, and on the device side thinned by the touch-screen
resampling model before reaching the recognizer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

I16_MIN = -(1 << 15)
I16_MAX = (1 << 15) - 1
U32_MAX = (1 << 32) - 1

Anchor = Literal["kept", "raw"]


class TrajectoryError(ValueError):
    pass


class MalformedStream(TrajectoryError):
    """Touch-event stream does not decompose into Down, Move*, Up runs."""


@dataclass(frozen=True, slots=True)
class Point:
    x: int
    y: int
    t: int = 0

    def __post_init__(self) -> None:
        if not (I16_MIN <= self.x <= I16_MAX and I16_MIN <= self.y <= I16_MAX):
            raise TrajectoryError(f"coordinate out of i16 range: ({self.x}, {self.y})")
        if self.t < 0:
            raise TrajectoryError(f"negative timestamp {self.t}")

    @property
    def xy(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True, slots=True)
class Stroke:
    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.points, tuple):
            object.__setattr__(self, "points", tuple(self.points))
        if not self.points:
            raise TrajectoryError("stroke needs at least one point")
        for a, b in zip(self.points, self.points[1:]):
            if b.t < a.t:
                raise TrajectoryError("stroke timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @classmethod
    def from_xy(cls, coords: Iterable[tuple[int, int]]) -> "Stroke":
        return cls(tuple(Point(x, y) for x, y in coords))

    def xy(self) -> list[tuple[int, int]]:
        return [p.xy for p in self.points]


@dataclass(frozen=True, slots=True)
class Sample:
    id: int
    label: str
    strokes: tuple[Stroke, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.strokes, tuple):
            object.__setattr__(self, "strokes", tuple(self.strokes))
        if not 0 <= self.id <= U32_MAX:
            raise TrajectoryError(f"sample id {self.id} out of u32 range")
        if not self.label:
            raise TrajectoryError("sample label must be non-empty")
        if not self.strokes:
            raise TrajectoryError("sample needs at least one stroke")

    def points(self) -> list[Point]:
        return [p for s in self.strokes for p in s.points]

    def geometry(self) -> list[list[tuple[int, int]]]:
        """Per-stroke coordinate lists, timestamps dropped."""
        return [s.xy() for s in self.strokes]


class EventKind(enum.IntEnum):
    DOWN = 0
    MOVE = 1
    UP = 2


@dataclass(frozen=True, slots=True)
class TouchEvent:
    kind: EventKind
    x: int
    y: int
    t: int


@dataclass(frozen=True)
class ResampleConfig:
    """Touch-screen point-dropping model. A threshold of 0 disables that filter."""

    time_threshold_ms: int = 0
    distance_threshold: float = 0.0
    anchor: Anchor = "kept"

    def __post_init__(self) -> None:
        if self.time_threshold_ms < 0 or self.distance_threshold < 0:
            raise TrajectoryError("resample thresholds must be >= 0")
        if self.anchor not in ("kept", "raw"):
            raise TrajectoryError(f"unknown anchor {self.anchor!r}")

    @property
    def disabled(self) -> bool:
        return self.time_threshold_ms == 0 and self.distance_threshold == 0


def bounding_box(sample: Sample) -> tuple[int, int, int, int]:
    pts = sample.points()
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def _scale_round(offset: int, target: int, extent: int) -> int:
    # round(offset * target / extent), half away from zero; offset >= 0 here
    num = offset * target
    return (2 * num + extent) // (2 * extent)


def normalize_size(sample: Sample, target: int) -> Sample:
    """Translate the bounding box to the origin and scale its larger side to ``target``.

    Aspect ratio is preserved and coordinates are rounded half away from zero using
    exact integer arithmetic. A sample whose points all coincide is only translated.
    """
    if target < 1:
        raise TrajectoryError("normalization target must be >= 1")
    min_x, min_y, max_x, max_y = bounding_box(sample)
    extent = max(max_x - min_x, max_y - min_y)

    def move(p: Point) -> Point:
        if extent == 0:
            return Point(p.x - min_x, p.y - min_y, p.t)
        return Point(
            _scale_round(p.x - min_x, target, extent),
            _scale_round(p.y - min_y, target, extent),
            p.t,
        )

    strokes = tuple(Stroke(tuple(move(p) for p in s.points)) for s in sample.strokes)
    return Sample(sample.id, sample.label, strokes)


def to_touch_events(sample: Sample, t1_ms: int) -> list[TouchEvent]:
    """Encode a sample as Down/Move/Up runs on a uniform ``t1_ms`` cadence.

    The clock runs across stroke boundaries. A one-point stroke becomes a Down
    and an Up at the same coordinates one tick apart.
    """
    if t1_ms < 1:
        raise TrajectoryError("t1_ms must be >= 1")
    events: list[TouchEvent] = []
    tick = 0
    for stroke in sample.strokes:
        pts = stroke.points
        if len(pts) == 1:
            p = pts[0]
            events.append(TouchEvent(EventKind.DOWN, p.x, p.y, tick * t1_ms))
            events.append(TouchEvent(EventKind.UP, p.x, p.y, (tick + 1) * t1_ms))
            tick += 2
            continue
        last = len(pts) - 1
        for i, p in enumerate(pts):
            kind = EventKind.DOWN if i == 0 else EventKind.UP if i == last else EventKind.MOVE
            events.append(TouchEvent(kind, p.x, p.y, tick * t1_ms))
            tick += 1
    return events


def from_touch_events(events: Iterable[TouchEvent]) -> list[Stroke]:
    strokes: list[Stroke] = []
    current: list[TouchEvent] | None = None
    last_t = 0
    for i, ev in enumerate(events):
        if ev.t < last_t:
            raise MalformedStream(f"event {i}: timestamp {ev.t} goes backwards")
        last_t = ev.t
        if ev.kind == EventKind.DOWN:
            if current is not None:
                raise MalformedStream(f"event {i}: Down inside an open stroke")
            current = [ev]
        elif current is None:
            raise MalformedStream(f"event {i}: {ev.kind.name} before Down")
        elif ev.kind == EventKind.MOVE:
            current.append(ev)
        else:
            current.append(ev)
            strokes.append(_run_to_stroke(current))
            current = None
    if current is not None:
        raise MalformedStream("stream ends inside an open stroke")
    return strokes


def _run_to_stroke(run: list[TouchEvent]) -> Stroke:
    if len(run) == 2 and (run[0].x, run[0].y) == (run[1].x, run[1].y):
        run = run[:1]
    return Stroke(tuple(Point(e.x, e.y, e.t) for e in run))


def _thin(points: Sequence[Point], keep, anchor: Anchor) -> list[Point]:
    if len(points) <= 2:
        return list(points)
    out = [points[0]]
    prev = points[0]
    for p in points[1:-1]:
        ref = out[-1] if anchor == "kept" else prev
        if keep(ref, p):
            out.append(p)
        prev = p
    out.append(points[-1])
    return out


def resample_time(
    points: Sequence[Point], time_threshold_ms: int, anchor: Anchor = "kept"
) -> list[Point]:
    """Drop points closer in time than the threshold to the reference point.

    First and last points are always kept.
    """
    if time_threshold_ms <= 0:
        return list(points)
    return _thin(points, lambda ref, p: p.t - ref.t >= time_threshold_ms, anchor)


def resample_distance(
    points: Sequence[Point], distance_threshold: float, anchor: Anchor = "kept"
) -> list[Point]:
    if distance_threshold <= 0:
        return list(points)
    return _thin(
        points,
        lambda ref, p: math.hypot(p.x - ref.x, p.y - ref.y) >= distance_threshold,
        anchor,
    )


def resample_stroke(stroke: Stroke, cfg: ResampleConfig) -> Stroke:
    """Time filter first, then distance filter."""
    pts = resample_time(stroke.points, cfg.time_threshold_ms, cfg.anchor)
    pts = resample_distance(pts, cfg.distance_threshold, cfg.anchor)
    return Stroke(tuple(pts))


__all__ = [
    "Anchor",
    "EventKind",
    "MalformedStream",
    "Point",
    "ResampleConfig",
    "Sample",
    "Stroke",
    "TouchEvent",
    "TrajectoryError",
    "bounding_box",
    "from_touch_events",
    "normalize_size",
    "resample_distance",
    "resample_stroke",
    "resample_time",
    "to_touch_events",
]
