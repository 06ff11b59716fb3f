"""Replay driver: sends each replica sample to the agents and scores the answers.

For every sample: normalize, encode as touch events on the ``t1`` clock, send
SampleBegin / Touch* / SampleEnd with real-time pacing, then wait up to ``t2``
for a Result. Samples are dealt round-robin to the agents, one driver thread per
agent, and the records are merged back into replica order.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
import unicodedata
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence

from . import protocol as wire
from .metrics import AccuracyReport, Outcome, ReplicaRow, count, render_table, round_cents
from .trajectory import Sample, normalize_size, to_touch_events

log = logging.getLogger(__name__)

MIN_T2_MS = 300


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    agents: tuple[tuple[str, int], ...]
    t1_ms: int = 6
    t2_ms: int = 500
    normalization_target: int = 180
    time_scale: float = 1.0
    # real-time floor for the t2 wait, so scaled runs do not time out on transport jitter
    min_wait_ms: float = 50.0
    connect_timeout_s: float = 5.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(tuple(a) for a in self.agents))
        if not self.agents:
            raise ConfigError("at least one agent address is required")
        if self.t1_ms < 1:
            raise ConfigError("t1_ms must be >= 1")
        if self.t2_ms <= MIN_T2_MS:
            raise ConfigError(f"t2_ms must exceed {MIN_T2_MS} ms")
        if self.normalization_target < 1:
            raise ConfigError("normalization_target must be >= 1")
        if self.time_scale <= 0:
            raise ConfigError("time_scale must be positive")

    @property
    def touch_interval_s(self) -> float:
        return self.t1_ms * self.time_scale / 1000

    @property
    def result_wait_s(self) -> float:
        return max(self.t2_ms * self.time_scale, self.min_wait_ms) / 1000


@dataclass(frozen=True)
class RecognitionRecord:
    sample_index: int
    ground_truth: str
    outcome: Outcome
    recognized_text: str | None = None
    latency_ms: int | None = None
    reason: str | None = None

    def to_json(self) -> dict:
        d = {
            "sample_index": self.sample_index,
            "ground_truth": self.ground_truth,
            "outcome": self.outcome.value,
            "recognized_text": self.recognized_text,
            "latency_ms": self.latency_ms,
        }
        if self.reason is not None:
            d["reason"] = self.reason
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RecognitionRecord":
        return cls(d["sample_index"], d["ground_truth"], Outcome(d["outcome"]),
                   d.get("recognized_text"), d.get("latency_ms"), d.get("reason"))


def classify_result(ground_truth: str, observed: str | None) -> Outcome:
    """``observed`` is None when no Result arrived before the deadline."""
    if observed is None:
        return Outcome.NO_RESULT
    if unicodedata.normalize("NFC", observed) == unicodedata.normalize("NFC", ground_truth):
        return Outcome.CORRECT
    return Outcome.INCORRECT


class _Pacer:
    """Holds consecutive sends at least ``interval`` seconds apart."""

    def __init__(self, interval: float):
        self.interval = interval
        self.last = None
        self.sent_at: list[float] | None = None  # filled only when tracing

    def wait(self) -> None:
        if self.last is not None and self.interval > 0:
            due = self.last + self.interval
            while True:
                remaining = due - time.perf_counter()
                if remaining <= 0:
                    break
                # coarse sleep, then spin for the final stretch
                time.sleep(remaining - 0.001 if remaining > 0.002 else 0)
        self.last = time.perf_counter()
        if self.sent_at is not None:
            self.sent_at.append(self.last)


def _no_result(pos: int, sample: Sample, reason: str) -> RecognitionRecord:
    return RecognitionRecord(pos, sample.label, Outcome.NO_RESULT, reason=reason)


class AgentDriver:
    """Runs one agent's share of a replica over a single connection."""

    def __init__(self, cfg: SessionConfig, address: tuple[str, int], trace_pacing: bool = False):
        self.cfg = cfg
        self.address = address
        self.pacer = _Pacer(cfg.touch_interval_s)
        if trace_pacing:
            self.pacer.sent_at = []

    def run(self, work: Sequence[tuple[int, Sample]]) -> list[RecognitionRecord]:
        records: list[RecognitionRecord] = []
        try:
            sock = socket.create_connection(self.address, timeout=self.cfg.connect_timeout_s)
        except OSError as exc:
            log.warning("cannot reach agent %s:%d: %s", *self.address, exc)
            return [_no_result(pos, s, "connect-failed") for pos, s in work]
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        fs = wire.FrameSocket(sock)
        tracker = wire.SessionTracker()
        try:
            self._handshake(fs, tracker)
            for pos, sample in work:
                records.append(self._one(fs, tracker, pos, sample))
            self._send(fs, tracker, wire.Bye())
        except wire.ProtocolViolation as exc:
            log.warning("agent %s:%d broke protocol: %s", *self.address, exc)
            reason = "protocol-violation"
        except (ConnectionError, OSError, wire.FrameError) as exc:
            log.warning("lost agent %s:%d: %s", *self.address, exc)
            reason = "agent-disconnected"
        else:
            reason = None
        finally:
            fs.close()
        if reason is not None:
            records += [_no_result(pos, s, reason) for pos, s in work[len(records):]]
        return records

    def _send(self, fs: wire.FrameSocket, tracker: wire.SessionTracker, msg: wire.Message) -> None:
        tracker.advance(msg)
        fs.send(msg)

    def _handshake(self, fs: wire.FrameSocket, tracker: wire.SessionTracker) -> None:
        self._send(fs, tracker, wire.Hello(wire.PROTOCOL_VERSION))
        reply = fs.recv(timeout=self.cfg.connect_timeout_s)
        tracker.advance(reply)
        if not isinstance(reply, wire.HelloAck):
            raise wire.ProtocolViolation(f"handshake refused: {reply}")

    def _one(self, fs: wire.FrameSocket, tracker: wire.SessionTracker, pos: int, sample: Sample) -> RecognitionRecord:
        cfg = self.cfg
        events = to_touch_events(normalize_size(sample, cfg.normalization_target), cfg.t1_ms)
        self._send(fs, tracker, wire.SampleBegin(pos))
        self.pacer.last = None
        for ev in events:
            self.pacer.wait()
            self._send(fs, tracker, wire.Touch(int(ev.kind), ev.x, ev.y, ev.t))
        self._send(fs, tracker, wire.SampleEnd())

        try:
            reply = fs.recv(timeout=cfg.result_wait_s)
        except TimeoutError:
            return _no_result(pos, sample, "timeout")
        tracker.advance(reply)
        if isinstance(reply, wire.AgentError):
            return _no_result(pos, sample, f"agent-error:{reply.code}")
        outcome = classify_result(sample.label, reply.text)
        return RecognitionRecord(pos, sample.label, outcome, reply.text, reply.latency_ms)


def partition(n: int, agents: int) -> list[list[int]]:
    """Round-robin positions 0..n-1 over ``agents`` buckets."""
    return [list(range(a, n, agents)) for a in range(agents)]


def merge_records(parts: Iterable[Iterable[RecognitionRecord]]) -> list[RecognitionRecord]:
    """Combine per-agent records into replica order, whatever order they completed in."""
    by_pos: dict[int, RecognitionRecord] = {}
    for part in parts:
        for r in part:
            if r.sample_index in by_pos:
                raise ValueError(f"sample {r.sample_index} recorded twice")
            by_pos[r.sample_index] = r
    return [by_pos[k] for k in sorted(by_pos)]


def run_session(cfg: SessionConfig, samples: Sequence[Sample]) -> list[RecognitionRecord]:
    """Replay ``samples`` (already resolved, in replica order) against the agents."""
    buckets = partition(len(samples), len(cfg.agents))
    results: list[list[RecognitionRecord]] = [[] for _ in buckets]

    def drive(k: int) -> None:
        work = [(pos, samples[pos]) for pos in buckets[k]]
        results[k] = AgentDriver(cfg, cfg.agents[k]).run(work)

    threads = [threading.Thread(target=drive, args=(k,), name=f"agent-driver-{k}") for k in range(len(buckets))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return merge_records(results)


# -- reports -------------------------------------------------------------------

@dataclass(frozen=True)
class ReportMeta:
    set_name: str = "set"
    replica_index: int = 1
    system: str = "system"

    @property
    def stem(self) -> str:
        return f"{self.system}.{self.set_name}_{self.replica_index}"


def summary_of(records: Sequence[RecognitionRecord], meta: ReportMeta) -> dict:
    c = count(records)
    acc = c.accuracy_percent()
    return {
        "set_name": meta.set_name,
        "replica_index": meta.replica_index,
        "system": meta.system,
        "correct": c.correct,
        "incorrect": c.incorrect,
        "no_result": c.no_result,
        "accuracy_percent": None if acc is None else float(acc),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def write_report(records: Sequence[RecognitionRecord], meta: ReportMeta, out_dir: str | Path) -> dict[str, Path]:
    """Write ``<stem>.records.jsonl``, ``<stem>.summary.json`` and ``<stem>.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summary_of(records, meta)
    paths = {
        "records": out / f"{meta.stem}.records.jsonl",
        "summary": out / f"{meta.stem}.summary.json",
        "table": out / f"{meta.stem}.txt",
    }
    paths["records"].write_text("".join(_dumps(r.to_json()) + "\n" for r in records), encoding="utf-8")
    paths["summary"].write_text(_dumps(summary) + "\n", encoding="utf-8")
    report = reports_from_summaries([summary])[0]
    c = count(records)
    table = render_table([report]) + f"\ncorrect {c.correct}  incorrect {c.incorrect}  no_result {c.no_result}\n"
    paths["table"].write_text(table, encoding="utf-8")
    return paths


def read_records(path: str | Path) -> list[RecognitionRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [RecognitionRecord.from_json(json.loads(x)) for x in lines if x.strip()]


def reports_from_summaries(summaries: Iterable[dict]) -> list[AccuracyReport]:
    """Group summary objects into one AccuracyReport per (set, system), first-seen order."""
    reports: dict[tuple[str, str], AccuracyReport] = {}
    for s in summaries:
        key = (s["set_name"], s.get("system", "system"))
        rep = reports.setdefault(key, AccuracyReport(key[0], key[1]))
        if rep.row(s["replica_index"]) is not None:
            raise ValueError(f"duplicate summary for {key} replica {s['replica_index']}")
        acc = s.get("accuracy_percent")
        rep.rows.append(ReplicaRow(
            s["replica_index"], s["correct"], s["incorrect"], s["no_result"],
            None if acc is None else round_cents(Decimal(repr(float(acc)))),
        ))
    for rep in reports.values():
        rep.rows.sort(key=lambda r: r.replica_index)
    return list(reports.values())


def merge_reports(paths: Iterable[str | Path]) -> str:
    """Render one table per set from any number of summary files."""
    summaries = [json.loads(Path(p).read_text(encoding="utf-8")) for p in paths]
    reports = reports_from_summaries(summaries)
    by_set: dict[str, list[AccuracyReport]] = {}
    for r in reports:
        by_set.setdefault(r.set_name, []).append(r)
    return "\n".join(render_table(by_set[name], name) for name in sorted(by_set))
