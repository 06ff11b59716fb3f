import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample, samples
from hwime_bench.dataset import (
    BadMagic,
    DuplicateEntry,
    EmptyCharset,
    InvalidUtf8Label,
    LabelTooLong,
    PoolTooSmall,
    SamplePool,
    SplitMix64,
    TestReplica,
    TruncatedFile,
    ZeroPoints,
    ZeroStrokes,
    build_replicas,
    filter_by_charset,
    format_replica,
    load_charset,
    parse_hws,
    parse_replica,
    resolve,
    write_hws,
)

MASK = (1 << 64) - 1


def oracle_replica(flat, size, seed, index):
    """Straight-line SplitMix64 + full-array Fisher-Yates, written independently."""
    z = index
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    state = (seed ^ z ^ (z >> 31)) & MASK
    arr = list(flat)
    for k in range(size):
        n = len(arr) - k
        limit = 2**64 - 2**64 % n
        while True:
            state = (state + 0x9E3779B97F4A7C15) & MASK
            r = state
            r = ((r ^ (r >> 30)) * 0xBF58476D1CE4E5B9) & MASK
            r = ((r ^ (r >> 27)) * 0x94D049BB133111EB) & MASK
            r ^= r >> 31
            if r < limit:
                break
        j = k + r % n
        arr[k], arr[j] = arr[j], arr[k]
    return arr[:size]


def pool_of(name, labels):
    return SamplePool(name, [make_sample([[(i, 0), (i + 1, 2)]], label=lab, sid=i) for i, lab in enumerate(labels)])


# -- HWS1 ----------------------------------------------------------------------

MINIMAL = (
    b"HWS1" + b"\x00\x00\x00\x01"
    + b"\x00\x03" + "永".encode("utf-8")
    + b"\x00\x01" + b"\x00\x02"
    + b"\x00\x01\xff\xfe" + b"\x00\x03\x00\x04"
)


def test_minimal_file():
    pool = parse_hws(MINIMAL)
    assert len(pool) == 1
    s = pool.samples[0]
    assert (s.id, s.label, s.geometry()) == (0, "永", [[(1, -2), (3, 4)]])
    assert write_hws(pool) == MINIMAL


def test_empty_pool_is_eight_bytes():
    assert write_hws(SamplePool("p", [])) == b"HWS1\x00\x00\x00\x00"


def test_bad_magic():
    with pytest.raises(BadMagic) as exc:
        parse_hws(b"XXXX" + MINIMAL[4:])
    assert exc.value.offset == 0


def test_invalid_utf8_label():
    bad = MINIMAL[:10] + b"\xff\xfe\xfd" + MINIMAL[13:]
    with pytest.raises(InvalidUtf8Label) as exc:
        parse_hws(bad)
    assert exc.value.offset == 10


def test_zero_strokes_and_points():
    head = b"HWS1\x00\x00\x00\x01\x00\x01a"
    with pytest.raises(ZeroStrokes) as exc:
        parse_hws(head + b"\x00\x00")
    assert exc.value.offset == 11
    with pytest.raises(ZeroPoints) as exc:
        parse_hws(head + b"\x00\x01\x00\x00")
    assert exc.value.offset == 13


def test_every_truncation_rejected():
    for cut in range(len(MINIMAL)):
        with pytest.raises(TruncatedFile):
            parse_hws(MINIMAL[:cut])


def test_write_limits():
    with pytest.raises(LabelTooLong):
        write_hws(SamplePool("p", [make_sample([[(0, 0)]], label="x" * 70000)]))


@settings(max_examples=60)
@given(st.lists(samples(), max_size=6))
def test_round_trip_bytes(sample_list):
    coords = [s.geometry() for s in sample_list]
    labels = [s.label for s in sample_list]
    pool = SamplePool("p", [make_sample(g, label=lab, sid=i) for i, (g, lab) in enumerate(zip(coords, labels))])
    data = write_hws(pool)
    again = parse_hws(data, "p")
    assert again.samples == pool.samples
    assert write_hws(again) == data
    for cut in random.Random(len(data)).sample(range(len(data)), min(8, len(data))):
        with pytest.raises(TruncatedFile):
            parse_hws(data[:cut])


# -- charsets ----------------------------------------------------------------------

def test_charset_basic():
    assert load_charset("a\nb\nc").members == {"a", "b", "c"}


def test_charset_comments_and_blanks():
    assert load_charset("# symbols\n\na\n  \nb\n").members == {"a", "b"}


def test_charset_duplicate():
    with pytest.raises(DuplicateEntry):
        load_charset("a\na")


def test_charset_empty():
    with pytest.raises(EmptyCharset):
        load_charset("# nothing\n\n")


def test_charset_symbols():
    text = "\n".join(["π", "√", "∫", "φ", "ψ", "%", "x", "X", "0", "O"])
    assert len(load_charset(text)) == 10


def test_filter_basic():
    out = filter_by_charset(pool_of("p", ["a", "b", "c"]), load_charset("b"))
    assert [s.label for s in out.samples] == ["b"]


def test_filter_superset_is_identity():
    pool = pool_of("p", ["a", "b", "c", "a"])
    assert filter_by_charset(pool, load_charset("a\nb\nc\nd")).samples == pool.samples


def test_filter_against_scan():
    rng = random.Random(7)
    labels = [rng.choice("abcdefghij") for _ in range(100)]
    pool = pool_of("p", labels)
    members = {"a", "c", "f"}
    expected = []
    for s in pool.samples:
        if s.label in members:
            expected.append(s.id)
    out = filter_by_charset(pool, load_charset("\n".join(sorted(members))))
    assert [s.id for s in out.samples] == expected
    assert len(expected) == labels.count("a") + labels.count("c") + labels.count("f")


def test_whole_label_membership():
    pool = pool_of("p", ["ab", "a", "b"])
    assert [s.label for s in filter_by_charset(pool, load_charset("ab")).samples] == ["ab"]


# -- replicas ----------------------------------------------------------------------

def test_splitmix_reference_outputs():
    rng = SplitMix64(0)
    assert [rng.next_u64() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_three_of_five_frozen():
    pools = [pool_of("a", "xy"), pool_of("b", "xyz")]
    reps = build_replicas(pools, 3, 2, seed=42)
    assert list(reps[0].entries) == [("b", 0), ("a", 0), ("a", 1)]
    assert list(reps[1].entries) == [("a", 0), ("a", 1), ("b", 2)]
    flat = [("a", 0), ("a", 1), ("b", 0), ("b", 1), ("b", 2)]
    assert list(reps[0].entries) == oracle_replica(flat, 3, 42, 1)


@given(st.integers(1, 40), st.integers(1, 4), st.integers(0, 2**64 - 1), st.data())
def test_matches_oracle(n, k, seed, data):
    size = data.draw(st.integers(1, n))
    pools = [pool_of("p", ["l"] * n)]
    flat = [("p", i) for i in range(n)]
    for r in build_replicas(pools, size, k, seed):
        assert list(r.entries) == oracle_replica(flat, size, seed, r.replica_index)
        assert len(set(r.entries)) == size


def test_exhaustive_draw_is_permutation():
    pools = [pool_of("a", "xyz"), pool_of("b", "xy")]
    for r in build_replicas(pools, 5, 3, seed=9):
        assert sorted(r.entries) == [("a", 0), ("a", 1), ("a", 2), ("b", 0), ("b", 1)]


def test_deterministic_files():
    pools = [pool_of("a", "xyzw" * 5)]
    one = [format_replica(r) for r in build_replicas(pools, 7, 5, seed=123, set_name="S")]
    two = [format_replica(r) for r in build_replicas(pools, 7, 5, seed=123, set_name="S")]
    assert one == two
    assert one[0].startswith("HWRL1 S 1 123\n")


def test_pool_too_small():
    with pytest.raises(PoolTooSmall):
        build_replicas([pool_of("a", "xy")], 3, 1, seed=0)


def test_replica_file_round_trip():
    r = TestReplica("SymbolChar", 2, 77, (("db2", 5), ("db2", 9), ("casia", 0)))
    text = format_replica(r)
    assert text == "HWRL1 SymbolChar 2 77\ndb2\t5\ndb2\t9\ncasia\t0\n"
    assert parse_replica(text) == r


def test_replica_rejects_duplicates():
    with pytest.raises(DuplicateEntry):
        parse_replica("HWRL1 S 1 0\na\t1\na\t1\n")


def test_resolve_entries():
    pools = [pool_of("a", "xyz"), pool_of("b", "uv")]
    r = TestReplica("S", 1, 0, (("b", 1), ("a", 0)))
    assert [s.label for s in resolve(r, pools)] == ["v", "x"]
