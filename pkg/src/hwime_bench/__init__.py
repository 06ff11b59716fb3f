"""Replay harness for measuring handwriting input-method accuracy."""

from .trajectory import (
    EventKind,
    Point,
    ResampleConfig,
    Sample,
    Stroke,
    TouchEvent,
    normalize_size,
    to_touch_events,
)

__version__ = "0.1.0"
