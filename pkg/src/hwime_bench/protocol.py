"""Framed binary protocol between the orchestrator and a device agent.

Every frame is ``u32 BE payload length | u8 tag | body``; the length counts the
tag and body but not itself. Strings travel as ``u16 BE length | UTF-8``. See
PROTOCOL.md for the byte layouts.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass
from typing import Iterable, Union

PROTOCOL_VERSION = 1
DEFAULT_PORT = 7431
MAX_PAYLOAD = 1 << 20
HEADER = struct.Struct(">IB")
MIN_FRAME = 5
U32_MAX = 0xFFFFFFFF


class Tag(enum.IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    SAMPLE_BEGIN = 3
    TOUCH = 4
    SAMPLE_END = 5
    RESULT = 6
    AGENT_ERROR = 7
    BYE = 8


class AgentErrorCode(enum.IntEnum):
    VERSION_MISMATCH = 1
    MALFORMED_STREAM = 2
    PROTOCOL_VIOLATION = 3
    RECOGNIZER_FAILED = 4


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class HelloAck:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class SampleBegin:
    sample_index: int


@dataclass(frozen=True)
class Touch:
    kind: int
    x: int
    y: int
    t_ms: int


@dataclass(frozen=True)
class SampleEnd:
    pass


@dataclass(frozen=True)
class Result:
    latency_ms: int
    text: str


@dataclass(frozen=True)
class AgentError:
    code: int
    detail: str


@dataclass(frozen=True)
class Bye:
    pass


Message = Union[Hello, HelloAck, SampleBegin, Touch, SampleEnd, Result, AgentError, Bye]


class FrameError(ValueError):
    pass


class TextTooLong(FrameError):
    pass


class UnknownTag(FrameError):
    pass


class BodyLengthMismatch(FrameError):
    pass


class InvalidUtf8(FrameError):
    pass


class InvalidField(FrameError):
    """A body decoded to the right size but holds an out-of-range value."""


class FrameTooLarge(FrameError):
    pass


class NeedMoreBytes(Exception):
    """Input holds only part of a frame; ``required`` is the total byte count needed."""

    def __init__(self, required: int):
        super().__init__(f"need at least {required} bytes")
        self.required = required


class ProtocolViolation(Exception):
    pass


_FIXED = {
    Tag.HELLO: struct.Struct(">B"),
    Tag.HELLO_ACK: struct.Struct(">B"),
    Tag.SAMPLE_BEGIN: struct.Struct(">I"),
    Tag.TOUCH: struct.Struct(">BhhI"),
}
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise TextTooLong(f"string of {len(raw)} bytes exceeds 65535")
    return _U16.pack(len(raw)) + raw


def _body(msg: Message) -> tuple[Tag, bytes]:
    try:
        match msg:
            case Hello(version=v):
                return Tag.HELLO, _FIXED[Tag.HELLO].pack(v)
            case HelloAck(version=v):
                return Tag.HELLO_ACK, _FIXED[Tag.HELLO_ACK].pack(v)
            case SampleBegin(sample_index=i):
                return Tag.SAMPLE_BEGIN, _FIXED[Tag.SAMPLE_BEGIN].pack(i)
            case Touch(kind=k, x=x, y=y, t_ms=t):
                if k not in (0, 1, 2):
                    raise InvalidField(f"touch kind {k}")
                return Tag.TOUCH, _FIXED[Tag.TOUCH].pack(k, x, y, t)
            case SampleEnd():
                return Tag.SAMPLE_END, b""
            case Result(latency_ms=lat, text=text):
                return Tag.RESULT, _U32.pack(lat) + _string(text)
            case AgentError(code=code, detail=detail):
                return Tag.AGENT_ERROR, _U16.pack(code) + _string(detail)
            case Bye():
                return Tag.BYE, b""
    except struct.error as exc:
        raise InvalidField(f"{type(msg).__name__}: {exc}") from None
    raise TypeError(f"not a protocol message: {msg!r}")


def encode_frame(msg: Message) -> bytes:
    tag, body = _body(msg)
    return HEADER.pack(1 + len(body), tag) + body


def _take_string(body: bytes, at: int) -> tuple[str, int]:
    if len(body) < at + 2:
        raise BodyLengthMismatch("string length prefix runs past the body")
    (n,) = _U16.unpack_from(body, at)
    end = at + 2 + n
    if end > len(body):
        raise BodyLengthMismatch("string runs past the body")
    try:
        return body[at + 2:end].decode("utf-8"), end
    except UnicodeDecodeError:
        raise InvalidUtf8("string is not valid UTF-8") from None


def _decode_body(tag: Tag, body: bytes) -> Message:
    fixed = _FIXED.get(tag)
    if fixed is not None:
        if len(body) != fixed.size:
            raise BodyLengthMismatch(f"{tag.name} body is {len(body)} bytes, expected {fixed.size}")
        values = fixed.unpack(body)
        if tag == Tag.HELLO:
            return Hello(*values)
        if tag == Tag.HELLO_ACK:
            return HelloAck(*values)
        if tag == Tag.SAMPLE_BEGIN:
            return SampleBegin(*values)
        if values[0] > 2:
            raise InvalidField(f"touch kind {values[0]}")
        return Touch(*values)
    if tag in (Tag.SAMPLE_END, Tag.BYE):
        if body:
            raise BodyLengthMismatch(f"{tag.name} carries {len(body)} unexpected bytes")
        return SampleEnd() if tag == Tag.SAMPLE_END else Bye()
    if len(body) < (4 if tag == Tag.RESULT else 2):
        raise BodyLengthMismatch(f"{tag.name} body too short")
    if tag == Tag.RESULT:
        (latency,) = _U32.unpack_from(body)
        text, end = _take_string(body, 4)
        msg: Message = Result(latency, text)
    else:
        (code,) = _U16.unpack_from(body)
        detail, end = _take_string(body, 2)
        msg = AgentError(code, detail)
    if end != len(body):
        raise BodyLengthMismatch(f"{tag.name} has {len(body) - end} trailing bytes")
    return msg


def decode_frame(data: bytes | bytearray | memoryview) -> tuple[Message, int]:
    """Decode one frame from the front of ``data``.

    Returns the message and the number of bytes it occupied. Raises
    NeedMoreBytes when ``data`` is a strict prefix of a frame, or a FrameError
    subclass when the bytes can never form a valid frame.
    """
    n = len(data)
    if n < 4:
        raise NeedMoreBytes(MIN_FRAME)
    (length,) = _U32.unpack_from(data)
    if length > MAX_PAYLOAD:
        raise FrameTooLarge(f"payload of {length} bytes exceeds {MAX_PAYLOAD}")
    if length == 0:
        raise BodyLengthMismatch("zero-length payload has no tag")
    total = 4 + length
    if n == 4:
        raise NeedMoreBytes(total)
    try:
        tag = Tag(data[4])
    except ValueError:
        raise UnknownTag(f"unknown message tag 0x{data[4]:02X}") from None
    if n < total:
        raise NeedMoreBytes(total)
    return _decode_body(tag, bytes(data[5:total])), total


class FrameBuffer:
    """Accumulates stream chunks and yields whole messages as they complete."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[Message]:
        self._buf += chunk
        out = []
        while True:
            try:
                msg, used = decode_frame(self._buf)
            except NeedMoreBytes:
                return out
            del self._buf[:used]
            out.append(msg)

    def __len__(self) -> int:
        return len(self._buf)


class FrameSocket:
    """Blocking message I/O over a connected socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._frames = FrameBuffer()
        self._ready: list[Message] = []

    def send(self, msg: Message) -> None:
        self.sock.sendall(encode_frame(msg))

    def pending(self) -> bool:
        return bool(self._ready) or len(self._frames) > 0

    def recv(self, timeout: float | None = None) -> Message:
        """Next message; raises TimeoutError, or ConnectionError on EOF."""
        while not self._ready:
            self.sock.settimeout(timeout)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise TimeoutError("no frame before deadline") from None
            if not chunk:
                raise ConnectionError("peer closed the connection")
            self._ready.extend(self._frames.feed(chunk))
        return self._ready.pop(0)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


# -- session state machine ---------------------------------------------------

class _State(enum.Enum):
    START = "start"
    HELLO_SENT = "hello-sent"
    IDLE = "idle"
    IN_SAMPLE = "in-sample"
    AWAITING = "awaiting-result"
    CLOSED = "closed"


_TRANSITIONS: dict[tuple[_State, type], _State] = {
    (_State.START, Hello): _State.HELLO_SENT,
    (_State.HELLO_SENT, HelloAck): _State.IDLE,
    (_State.HELLO_SENT, AgentError): _State.CLOSED,
    (_State.IDLE, SampleBegin): _State.IN_SAMPLE,
    (_State.IDLE, Bye): _State.CLOSED,
    (_State.IN_SAMPLE, Touch): _State.IN_SAMPLE,
    (_State.IN_SAMPLE, SampleEnd): _State.AWAITING,
    (_State.AWAITING, Result): _State.IDLE,
    (_State.AWAITING, AgentError): _State.IDLE,
    # the orchestrator gave up waiting (t2 elapsed) and moves on
    (_State.AWAITING, SampleBegin): _State.IN_SAMPLE,
    (_State.AWAITING, Bye): _State.CLOSED,
}


class SessionTracker:
    """Incremental form of validate_sequence.

    Hello, HelloAck, then any number of SampleBegin, Touch*, SampleEnd, with at
    most one Result or AgentError per sample, then Bye.
    """

    def __init__(self) -> None:
        self.state = _State.START
        self.sample_index: int | None = None

    def advance(self, msg: Message) -> None:
        nxt = _TRANSITIONS.get((self.state, type(msg)))
        if nxt is None:
            where = self.state.value
            if self.sample_index is not None and self.state in (_State.IN_SAMPLE, _State.AWAITING):
                where += f" (sample {self.sample_index})"
            raise ProtocolViolation(f"{type(msg).__name__} not allowed in state {where}")
        if isinstance(msg, SampleBegin):
            self.sample_index = msg.sample_index
        self.state = nxt


def validate_sequence(history: Iterable[Message], next_msg: Message) -> None:
    """Raise ProtocolViolation unless ``next_msg`` may follow ``history``."""
    tracker = SessionTracker()
    for msg in history:
        tracker.advance(msg)
    tracker.advance(next_msg)
