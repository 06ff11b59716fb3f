"""Synthetic handwritten digits for demos and reference-recognizer checks.

Each digit is a fixed polyline skeleton on a 100x100 box. Writers are simulated
by a random affine distortion, vertex jitter, resampling along the path at a
random pen speed, and per-point jitter.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import SamplePool
from .trajectory import Point, Sample, Stroke

DIGITS: dict[str, list[list[tuple[float, float]]]] = {
    "0": [[(50, 0), (15, 20), (10, 50), (15, 80), (50, 100), (85, 80), (90, 50), (85, 20), (50, 0)]],
    "1": [[(35, 20), (55, 0), (55, 100)]],
    "2": [[(15, 20), (40, 0), (75, 5), (85, 30), (15, 100), (90, 100)]],
    "3": [[(15, 10), (70, 0), (80, 25), (45, 50), (85, 70), (75, 95), (15, 95)]],
    "4": [[(55, 0), (10, 70), (90, 70)], [(65, 30), (65, 100)]],
    "5": [[(25, 0), (20, 45), (70, 45), (85, 75), (65, 100), (15, 95)], [(25, 0), (80, 0)]],
    "6": [[(75, 5), (35, 20), (15, 60), (30, 100), (70, 95), (80, 70), (55, 50), (20, 65)]],
    "7": [[(10, 0), (90, 0), (40, 100)]],
    "8": [[(50, 50), (20, 25), (50, 0), (80, 25), (50, 50), (20, 75), (50, 100), (80, 75), (50, 50)]],
    "9": [[(80, 30), (50, 0), (20, 25), (45, 50), (80, 30), (75, 100)]],
}


def _walk(vertices: np.ndarray, step: float, phase: float) -> np.ndarray:
    seg = np.diff(vertices, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if total == 0:
        return vertices[:1]
    marks = np.arange(phase * step, total, step)
    marks = np.concatenate([[0.0], marks[marks > 0], [total]])
    x = np.interp(marks, cum, vertices[:, 0])
    y = np.interp(marks, cum, vertices[:, 1])
    return np.stack([x, y], axis=1)


def write_glyph(
    skeleton: list[list[tuple[float, float]]],
    rng: np.random.Generator,
    jitter: float = 4.0,
    point_jitter: float = 1.0,
    step: float = 9.0,
) -> list[list[tuple[int, int]]]:
    angle = rng.normal(0, 0.08)
    shear = rng.normal(0, 0.12)
    sx, sy = rng.uniform(0.8, 1.2, size=2)
    c, s = math.cos(angle), math.sin(angle)
    affine = np.array([[c, -s], [s, c]]) @ np.array([[sx, shear], [0, sy]])
    size = rng.uniform(0.6, 2.0)
    offset = rng.uniform(0, 200, size=2)
    pace = step * rng.uniform(0.75, 1.3)
    strokes = []
    for poly in skeleton:
        v = np.asarray(poly, dtype=float)
        v = v + rng.normal(0, jitter, size=v.shape)
        v = (v - 50) @ affine.T + 50
        pts = _walk(v, pace, rng.uniform())
        pts = pts + rng.normal(0, point_jitter, size=pts.shape)
        pts = pts * size + offset
        strokes.append([(int(round(x)), int(round(y))) for x, y in pts])
    return strokes


def digit_pool(
    per_class: int,
    seed: int,
    source_name: str = "digits",
    first_id: int = 0,
    **noise,
) -> SamplePool:
    """``per_class`` noisy copies of each digit, interleaved by class."""
    rng = np.random.default_rng(seed)
    samples = []
    sid = first_id
    for _ in range(per_class):
        for label, skeleton in DIGITS.items():
            strokes = write_glyph(skeleton, rng, **noise)
            samples.append(Sample(sid, label, tuple(Stroke(tuple(Point(x, y) for x, y in s)) for s in strokes)))
            sid += 1
    return SamplePool(source_name, samples)
