"""Sample files, character sets and seeded test-set replicas.

HWS1 layout (big-endian)::

    "HWS1" | u32 sample_count | per sample:
        u16 label_len | label (UTF-8) | u16 stroke_count (>=1) |
        per stroke: u16 point_count (>=1) | per point: i16 x, i16 y

Replica files are UTF-8 text: a header ``HWRL1 <set_name> <replica_index> <seed>``
followed by one ``source_name<TAB>sample_id`` line per entry.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .trajectory import Point, Sample, Stroke

MAGIC = b"HWS1"
REPLICA_MAGIC = "HWRL1"
U16_MAX = 0xFFFF
MASK64 = (1 << 64) - 1

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_XY = struct.Struct(">hh")


class DatasetError(ValueError):
    pass


class HwsFormatError(DatasetError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class BadMagic(HwsFormatError):
    pass


class TruncatedFile(HwsFormatError):
    pass


class InvalidUtf8Label(HwsFormatError):
    pass


class ZeroStrokes(HwsFormatError):
    pass


class ZeroPoints(HwsFormatError):
    pass


class LabelTooLong(DatasetError):
    pass


class TooManyStrokes(DatasetError):
    pass


class TooManyPoints(DatasetError):
    pass


class DuplicateEntry(DatasetError):
    pass


class EmptyCharset(DatasetError):
    pass


class PoolTooSmall(DatasetError):
    pass


@dataclass
class SamplePool:
    source_name: str
    samples: list[Sample] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.samples = list(self.samples)
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"pool {self.source_name!r} has duplicate sample ids")

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> dict[int, Sample]:
        return {s.id: s for s in self.samples}


@dataclass(frozen=True)
class Charset:
    name: str
    members: frozenset[str]

    def __contains__(self, label: str) -> bool:
        return label in self.members

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class TestReplica:
    set_name: str
    replica_index: int
    seed: int
    entries: tuple[tuple[str, int], ...]

    __test__ = False  # not a pytest class

    def __len__(self) -> int:
        return len(self.entries)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedFile(f"truncated while reading {what}", self.pos)
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def parse_hws(data: bytes, source_name: str = "pool") -> SamplePool:
    r = _Reader(bytes(data))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}", 0)
    count = r.u32("sample count")
    samples = []
    for sid in range(count):
        label_at = r.pos
        raw = r.take(r.u16("label length"), "label")
        try:
            label = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise InvalidUtf8Label("label is not valid UTF-8", label_at + 2) from None
        if not label:
            raise HwsFormatError("empty label", label_at)
        strokes_at = r.pos
        n_strokes = r.u16("stroke count")
        if n_strokes == 0:
            raise ZeroStrokes("sample has zero strokes", strokes_at)
        strokes = []
        for _ in range(n_strokes):
            points_at = r.pos
            n_points = r.u16("point count")
            if n_points == 0:
                raise ZeroPoints("stroke has zero points", points_at)
            body = r.take(4 * n_points, "points")
            strokes.append(Stroke(tuple(Point(x, y) for x, y in _XY.iter_unpack(body))))
        samples.append(Sample(sid, label, tuple(strokes)))
    if r.pos != len(data):
        raise HwsFormatError(f"{len(data) - r.pos} trailing bytes", r.pos)
    return SamplePool(source_name, samples)


def write_hws(pool: SamplePool) -> bytes:
    out = bytearray(MAGIC)
    out += _U32.pack(len(pool.samples))
    for s in pool.samples:
        label = s.label.encode("utf-8")
        if len(label) > U16_MAX:
            raise LabelTooLong(f"sample {s.id}: label is {len(label)} bytes")
        if len(s.strokes) > U16_MAX:
            raise TooManyStrokes(f"sample {s.id}: {len(s.strokes)} strokes")
        out += _U16.pack(len(label)) + label + _U16.pack(len(s.strokes))
        for stroke in s.strokes:
            if len(stroke.points) > U16_MAX:
                raise TooManyPoints(f"sample {s.id}: stroke has {len(stroke.points)} points")
            out += _U16.pack(len(stroke.points))
            for p in stroke.points:
                out += _XY.pack(p.x, p.y)
    return bytes(out)


def load_pool(path: str | Path) -> SamplePool:
    """Read an HWS1 file; the pool is named after the file stem."""
    path = Path(path)
    return parse_hws(path.read_bytes(), source_name=path.stem)


def load_charset(text: str, name: str = "charset") -> Charset:
    members: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        label = line.strip()
        if not label or label.startswith("#"):
            continue
        if label in members:
            raise DuplicateEntry(f"line {lineno}: duplicate label {label!r}")
        members.add(label)
    if not members:
        raise EmptyCharset(f"charset {name!r} has no members")
    return Charset(name, frozenset(members))


def filter_by_charset(pool: SamplePool, cs: Charset) -> SamplePool:
    return SamplePool(pool.source_name, [s for s in pool.samples if s.label in cs])


# -- seeded sampling ---------------------------------------------------------

GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output function."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 generator.

    Replica ``i`` of a build seeded with ``seed`` starts from state
    ``seed XOR mix64(i)``. Bounded draws use rejection sampling so that every
    implementation consumes the same number of outputs.
    """

    def __init__(self, state: int):
        self.state = state & MASK64

    @classmethod
    def for_replica(cls, seed: int, replica_index: int) -> "SplitMix64":
        return cls(seed ^ mix64(replica_index & MASK64))

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def _draw_without_repetition(rng: SplitMix64, population: int, size: int) -> list[int]:
    # partial Fisher-Yates over range(population); the dict holds only swapped slots
    swapped: dict[int, int] = {}
    picks = []
    for k in range(size):
        j = k + rng.below(population - k)
        picks.append(swapped.get(j, j))
        swapped[j] = swapped.get(k, k)
    return picks


def build_replicas(
    pools: Sequence[SamplePool],
    size: int,
    replica_count: int,
    seed: int,
    set_name: str = "set",
) -> list[TestReplica]:
    """Draw ``replica_count`` independent test sets of ``size`` samples each.

    The pools are concatenated in order. Repetition is impossible within a
    replica, while different replicas may share samples.
    """
    if size < 1 or replica_count < 1:
        raise ValueError("size and replica_count must be positive")
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    flat = [(p.source_name, s.id) for p in pools for s in p.samples]
    if len(flat) < size:
        raise PoolTooSmall(f"need {size} samples, pools hold {len(flat)}")
    replicas = []
    for i in range(1, replica_count + 1):
        rng = SplitMix64.for_replica(seed, i)
        picks = _draw_without_repetition(rng, len(flat), size)
        replicas.append(TestReplica(set_name, i, seed, tuple(flat[k] for k in picks)))
    return replicas


def format_replica(replica: TestReplica) -> str:
    if not replica.set_name or any(c.isspace() for c in replica.set_name):
        raise DatasetError(f"set name {replica.set_name!r} must be one non-empty word")
    lines = [f"{REPLICA_MAGIC} {replica.set_name} {replica.replica_index} {replica.seed}"]
    lines += [f"{src}\t{sid}" for src, sid in replica.entries]
    return "\n".join(lines) + "\n"


def parse_replica(text: str) -> TestReplica:
    lines = text.splitlines()
    if not lines:
        raise DatasetError("empty replica file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != REPLICA_MAGIC:
        raise DatasetError(f"bad replica header {lines[0]!r}")
    entries = []
    seen = set()
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        try:
            src, sid = line.split("\t")
            entry = (src, int(sid))
        except ValueError:
            raise DatasetError(f"line {lineno}: expected source<TAB>id, got {line!r}") from None
        if entry in seen:
            raise DuplicateEntry(f"line {lineno}: repeated entry {entry}")
        seen.add(entry)
        entries.append(entry)
    return TestReplica(head[1], int(head[2]), int(head[3]), tuple(entries))


def resolve(replica: TestReplica, pools: Iterable[SamplePool]) -> list[Sample]:
    """Look up every replica entry in the pools, in replica order."""
    index = {p.source_name: p.by_id() for p in pools}
    out = []
    for src, sid in replica.entries:
        try:
            out.append(index[src][sid])
        except KeyError:
            raise DatasetError(f"replica entry ({src}, {sid}) not found in pools") from None
    return out
