"""Simulated handwriting device.

The agent rebuilds strokes from Touch frames, thins them with the touch-screen
resampling model, runs a recognizer once per sample, and commits the output to
a text buffer. Like the monitoring module on a phone, it only reports a Result
when the buffer length changes, so a recognizer that commits nothing produces
silence and the orchestrator times out.
"""

from __future__ import annotations

import argparse
import json
import logging
import select
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

from . import protocol as wire
from .dataset import load_pool
from .recognizers import (
    ConstantRecognizer,
    NearestNeighbourRecognizer,
    OracleRecognizer,
    Recognizer,
    parse_oracle_labels,
    train_templates,
)
from .trajectory import (
    EventKind,
    MalformedStream,
    ResampleConfig,
    Stroke,
    TouchEvent,
    from_touch_events,
    resample_stroke,
)

log = logging.getLogger(__name__)


@dataclass
class TextBuffer:
    content: str = ""
    history: list[int] = field(default_factory=list)

    def clear(self) -> None:
        self.content = ""
        self.history = [0]

    def commit(self, text: str) -> bool:
        """Append ``text``; True when the visible length changed."""
        before = len(self.content)
        self.content += text
        self.history.append(len(self.content))
        return len(self.content) != before


def rebuild_strokes(events: Sequence[TouchEvent], rs: ResampleConfig) -> list[Stroke]:
    """Strokes as the recognizer sees them after device resampling."""
    strokes = from_touch_events(events)
    if not strokes:
        raise MalformedStream("sample carried no touch events")
    if rs.disabled:
        return strokes
    return [resample_stroke(s, rs) for s in strokes]


def handle_sample(
    events: Sequence[TouchEvent],
    rs: ResampleConfig,
    rec: Recognizer,
    sample_index: int = 0,
    buffer: TextBuffer | None = None,
    received_at: float | None = None,
) -> wire.Result | wire.AgentError | None:
    """Process one complete sample; None means the text box did not change."""
    start = time.monotonic() if received_at is None else received_at
    buffer = buffer if buffer is not None else TextBuffer()
    buffer.clear()
    try:
        strokes = rebuild_strokes(events, rs)
    except MalformedStream as exc:
        return wire.AgentError(wire.AgentErrorCode.MALFORMED_STREAM, str(exc))
    try:
        text = rec.recognize(strokes, sample_index)
    except Exception as exc:  # a broken recognizer must not take the session down
        log.exception("recognizer failed on sample %d", sample_index)
        return wire.AgentError(wire.AgentErrorCode.RECOGNIZER_FAILED, repr(exc))
    if not buffer.commit(text):
        return None
    latency = int(round((time.monotonic() - start) * 1000))
    return wire.Result(min(latency, wire.U32_MAX), buffer.content)


def _event(msg: wire.Touch) -> TouchEvent:
    return TouchEvent(EventKind(msg.kind), msg.x, msg.y, msg.t_ms)


class SessionLog:
    """Line-delimited JSON log: one line per finished sample."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, sample_index: int, events: Sequence[TouchEvent], reply) -> None:
        entry = {
            "sample_index": sample_index,
            "events": [[int(e.kind), e.x, e.y, e.t] for e in events],
            "reply": _reply_json(reply),
        }
        with self._lock:
            self._fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _reply_json(reply) -> dict | None:
    if isinstance(reply, wire.Result):
        return {"type": "result", "text": reply.text, "latency_ms": reply.latency_ms}
    if isinstance(reply, wire.AgentError):
        return {"type": "error", "code": reply.code, "detail": reply.detail}
    return None


def replay_log(
    lines: Sequence[str], rs: ResampleConfig, rec: Recognizer
) -> Iterator[tuple[int, wire.Result | wire.AgentError | None]]:
    """Re-run logged event streams through handle_sample."""
    for line in lines:
        if not line.strip():
            continue
        entry = json.loads(line)
        events = [TouchEvent(EventKind(k), x, y, t) for k, x, y, t in entry["events"]]
        yield entry["sample_index"], handle_sample(events, rs, rec, entry["sample_index"])


class DeviceAgent:
    """TCP server that serves one orchestrator session at a time."""

    def __init__(
        self,
        recognizer: Recognizer,
        resample: ResampleConfig | None = None,
        host: str = "127.0.0.1",
        port: int = wire.DEFAULT_PORT,
        session_log: SessionLog | None = None,
        on_sample_end: Callable[[int], None] | None = None,
    ):
        self.recognizer = recognizer
        self.resample = resample or ResampleConfig()
        self.session_log = session_log
        # test hook, called with the sample index right before recognition
        self.on_sample_end = on_sample_end
        self._server = socket.create_server((host, port))
        self._conn: socket.socket | None = None
        self._stopped = threading.Event()
        self._thread: threading.Thread | None = None
        self.samples_handled = 0

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.getsockname()[:2]
        return host, port

    def serve_forever(self) -> None:
        self._server.settimeout(0.1)
        while not self._stopped.is_set():
            try:
                conn, peer = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conn = conn
            log.info("session from %s:%d", *peer[:2])
            try:
                self._session(wire.FrameSocket(conn))
            except (ConnectionError, OSError, wire.FrameError) as exc:
                log.info("session ended: %s", exc)
            finally:
                self._conn = None
                conn.close()

    def start(self) -> "DeviceAgent":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True, name="device-agent")
        self._thread.start()
        return self

    def close(self) -> None:
        self.kill()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=5)

    def kill(self) -> None:
        """Drop the live connection and stop listening, as if the device died."""
        self._stopped.set()
        conn = self._conn
        if conn is not None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        try:
            self._server.close()
        except OSError:
            pass

    def __enter__(self) -> "DeviceAgent":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    def _session(self, fs: wire.FrameSocket) -> None:
        tracker = wire.SessionTracker()
        hello = fs.recv()
        tracker.advance(hello)
        if not isinstance(hello, wire.Hello) or hello.version != wire.PROTOCOL_VERSION:
            fs.send(wire.AgentError(wire.AgentErrorCode.VERSION_MISMATCH, f"agent speaks v{wire.PROTOCOL_VERSION}"))
            return
        ack = wire.HelloAck(wire.PROTOCOL_VERSION)
        tracker.advance(ack)
        fs.send(ack)

        buffer = TextBuffer()
        events: list[TouchEvent] = []
        index = 0
        while not self._stopped.is_set():
            msg = fs.recv()
            try:
                tracker.advance(msg)
            except wire.ProtocolViolation as exc:
                fs.send(wire.AgentError(wire.AgentErrorCode.PROTOCOL_VIOLATION, str(exc)))
                return
            if isinstance(msg, wire.SampleBegin):
                index = msg.sample_index
                events = []
                buffer.clear()
            elif isinstance(msg, wire.Touch):
                events.append(_event(msg))
            elif isinstance(msg, wire.SampleEnd):
                received = time.monotonic()
                if self.on_sample_end is not None:
                    self.on_sample_end(index)
                reply = handle_sample(events, self.resample, self.recognizer, index, buffer, received)
                self.samples_handled += 1
                if self.session_log is not None:
                    self.session_log.write(index, events, reply)
                if reply is None or self._orchestrator_moved_on(fs):
                    continue
                tracker.advance(reply)
                fs.send(reply)
            elif isinstance(msg, wire.Bye):
                return

    @staticmethod
    def _orchestrator_moved_on(fs: wire.FrameSocket) -> bool:
        # Results carry no sample index; once the orchestrator has sent the
        # next frame it has timed this sample out, so a late reply is dropped.
        if fs.pending():
            return True
        readable, _, _ = select.select([fs.sock], [], [], 0)
        return bool(readable)


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return default_host, int(text)
    return host or default_host, int(port)


def build_recognizer(spec: str, templates: str | None, oracle_labels: str | None,
                     normalize: int, gap_penalty: float | None) -> Recognizer:
    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        if not oracle_labels:
            raise SystemExit("--recognizer oracle needs --oracle-labels")
        return OracleRecognizer(parse_oracle_labels(Path(oracle_labels).read_text(encoding="utf-8")))
    if kind == "constant":
        return ConstantRecognizer(arg)
    if kind == "nn":
        if not templates:
            raise SystemExit("--recognizer nn needs --templates")
        store = train_templates(load_pool(templates), normalize, per_label=1 << 30)
        return NearestNeighbourRecognizer(store, gap_penalty)
    raise SystemExit(f"unknown recognizer {spec!r}")


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="hwime-agent", description="Simulated handwriting device agent.")
    ap.add_argument("--listen", default=f"127.0.0.1:{wire.DEFAULT_PORT}", help="addr:port to listen on")
    ap.add_argument("--resample-time-ms", type=int, default=0)
    ap.add_argument("--resample-distance", type=float, default=0.0)
    ap.add_argument("--anchor", choices=("kept", "raw"), default="kept")
    ap.add_argument("--recognizer", default="nn", help="oracle | constant:<text> | nn")
    ap.add_argument("--templates", help="HWS1 file of template samples (nn)")
    ap.add_argument("--oracle-labels", help="index<TAB>label file (oracle)")
    ap.add_argument("--normalize", type=int, default=180, help="template normalization size (nn)")
    ap.add_argument("--gap-penalty", type=float, default=None, help="pen-up DTW penalty (nn), default normalize/4")
    ap.add_argument("--time-scale", type=float, default=1.0,
                    help="accepted for symmetry with the orchestrator; the agent only uses nominal timestamps")
    ap.add_argument("--log", help="append per-sample events and replies to this file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    rec = build_recognizer(args.recognizer, args.templates, args.oracle_labels, args.normalize, args.gap_penalty)
    rs = ResampleConfig(args.resample_time_ms, args.resample_distance, args.anchor)
    host, port = parse_address(args.listen)
    session_log = SessionLog(args.log) if args.log else None
    agent = DeviceAgent(rec, rs, host, port, session_log)
    print(f"listening on {agent.address[0]}:{agent.address[1]}", flush=True)
    try:
        agent.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        agent.close()
        if session_log is not None:
            session_log.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
