"""Message framing and channels.

Frames are newline-delimited JSON objects::

    {"proto":"fedfeare/1","session":"...","seq":3,"kind":"ScanRequest","body":{...}}

Big integers never travel as JSON numbers: counts are decimal strings and
ciphertexts / key material are lowercase hex strings.  The same party code
runs over :func:`make_inproc_pair` (queues, one thread per party) or TCP
sockets; both carry the encoded bytes, so transcripts are comparable byte
for byte.
"""
from __future__ import annotations

import itertools
import json
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ClosedChannelError, FrameError, ProtocolError, TransportError, VersionError

PROTO = "fedfeare/1"

# kind -> required body keys
MESSAGE_FIELDS: dict[str, tuple[str, ...]] = {
    "SessionStart": ("role", "params"),
    "PublicKey": ("n",),
    "EncryptedLabels": ("ids", "labels"),
    "ScanRequest": ("tree", "depth"),
    "ScanReply": ("features",),
    "SplitChosen": ("feature_id", "j", "op"),
    "CoveredSet": ("feature_id", "split_index", "ids"),
    "CandidateValues": ("features",),
    "MaskedHistogram": ("feature", "edges", "bins", "missing"),
    "HistogramReturn": ("feature", "edges", "bins", "missing"),
    "ConditionBroadcast": ("tree", "depth", "condition", "end_tree"),
    "RuleSetBroadcast": ("ruleset",),
    "PredictRequest": ("ids", "conditions"),
    "PredictReply": ("results",),
    "Error": ("code", "message"),
    "SessionEnd": (),
}


@dataclass(frozen=True)
class Message:
    kind: str
    body: dict = field(default_factory=dict)
    session: str = ""
    seq: int = 0

    def __post_init__(self):
        if self.kind not in MESSAGE_FIELDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")


def encode_frame(msg: Message) -> bytes:
    obj = {"proto": PROTO, "session": msg.session, "seq": msg.seq, "kind": msg.kind, "body": msg.body}
    return json.dumps(obj, separators=(",", ":"), sort_keys=True, allow_nan=False).encode("utf-8") + b"\n"


def decode_frame(frame: bytes | str) -> Message:
    if isinstance(frame, bytes):
        try:
            frame = frame.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FrameError(f"frame is not UTF-8: {e}") from None
    if not frame.endswith("\n"):
        raise FrameError("truncated frame (missing newline)")
    try:
        obj = json.loads(frame)
    except json.JSONDecodeError as e:
        raise FrameError(f"malformed frame: {e}") from None
    if not isinstance(obj, dict):
        raise FrameError("frame is not an object")
    proto = obj.get("proto")
    if proto != PROTO:
        raise VersionError(f"unsupported protocol version {proto!r}")
    kind = obj.get("kind")
    if kind not in MESSAGE_FIELDS:
        raise FrameError(f"unknown message kind {kind!r}")
    body, session, seq = obj.get("body"), obj.get("session"), obj.get("seq")
    if not isinstance(body, dict) or not isinstance(session, str) or type(seq) is not int:
        raise FrameError("frame fields have wrong types")
    missing = [k for k in MESSAGE_FIELDS[kind] if k not in body]
    if missing:
        raise FrameError(f"{kind} body lacks {missing}")
    return Message(kind, body, session, seq)


class Transcript:
    """Thread-safe record of every frame sent, keyed by directed channel."""

    def __init__(self):
        self._lock = threading.Lock()
        self._frames: dict[tuple[str, str], list[bytes]] = {}

    def record(self, src: str, dst: str, frame: bytes) -> None:
        with self._lock:
            self._frames.setdefault((src, dst), []).append(frame)

    def channels(self) -> dict[tuple[str, str], list[bytes]]:
        with self._lock:
            return {k: list(v) for k, v in sorted(self._frames.items())}

    def frames(self, src: str | None = None, dst: str | None = None) -> list[bytes]:
        return [f for (s, d), fs in self.channels().items() for f in fs
                if (src is None or s == src) and (dst is None or d == dst)]

    def messages(self, src: str | None = None, dst: str | None = None) -> list[Message]:
        return [decode_frame(f) for f in self.frames(src, dst)]

    def __eq__(self, other) -> bool:
        return isinstance(other, Transcript) and self.channels() == other.channels()

    def dump(self, path) -> None:
        """Replay file: ``src->dst<TAB>frame`` per line, grouped by sorted channel.

        Per-channel order is send order; no clock values are written, so a
        seeded run dumps identical bytes every time.
        """
        with open(path, "wb") as fh:
            for (src, dst), frames in self.channels().items():
                for frame in frames:
                    fh.write(f"{src}->{dst}\t".encode() + frame)

    @staticmethod
    def load(path) -> "Transcript":
        t = Transcript()
        with open(path, "rb") as fh:
            for line in fh:
                head, _, frame = line.partition(b"\t")
                src, dst = head.decode().split("->")
                t.record(src, dst, frame)
        return t


class Channel:
    """One endpoint of a bidirectional FIFO link between two parties.

    Subclasses provide ``_send_bytes``/``_recv_bytes``/``_close``.  The
    channel numbers outgoing messages per session and records each frame in
    the optional transcript.
    """

    def __init__(self, local: str, peer: str, transcript: Transcript | None = None):
        self.local = local
        self.peer = peer
        self.transcript = transcript
        self._seq = itertools.count(1)
        self.closed = False

    def send(self, kind: str, body: dict | None = None, session: str = "") -> Message:
        if self.closed:
            raise ClosedChannelError(f"channel {self.local}->{self.peer} is closed")
        msg = Message(kind, body or {}, session, next(self._seq))
        frame = encode_frame(msg)
        if self.transcript is not None:
            self.transcript.record(self.local, self.peer, frame)
        self._send_bytes(frame)
        return msg

    def recv(self, timeout: float | None = None) -> Message:
        return decode_frame(self._recv_bytes(timeout))

    def expect(self, *kinds: str, timeout: float | None = None) -> Message:
        """Receive one message; peer ``Error`` frames and unexpected kinds raise."""
        msg = self.recv(timeout)
        if msg.kind == "Error" and "Error" not in kinds:
            raise error_from_message(msg)
        if msg.kind not in kinds:
            raise ProtocolError(f"{self.local} expected {kinds} from {self.peer}, got {msg.kind}")
        return msg

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.local}->{self.peer})"

    def _send_bytes(self, frame: bytes) -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def _recv_bytes(self, timeout: float | None) -> bytes:  # pragma: no cover - abstract
        raise NotImplementedError

    def _close(self) -> None:  # pragma: no cover - abstract
        raise NotImplementedError


_CLOSED = object()


class InprocChannel(Channel):
    def __init__(self, local, peer, inbox: queue.Queue, outbox: queue.Queue, transcript=None):
        super().__init__(local, peer, transcript)
        self._inbox = inbox
        self._outbox = outbox
        self._peer_closed = False

    def _send_bytes(self, frame):
        self._outbox.put(frame)

    def _recv_bytes(self, timeout):
        if self._peer_closed:
            raise ClosedChannelError(f"{self.peer} closed the channel")
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"timed out waiting for {self.peer}") from None
        if item is _CLOSED:
            self._peer_closed = True
            raise ClosedChannelError(f"{self.peer} closed the channel")
        return item

    def _close(self):
        self._outbox.put(_CLOSED)


def make_inproc_pair(a: str = "a", b: str = "b", transcript: Transcript | None = None) -> tuple[Channel, Channel]:
    """Two connected endpoints over unbounded FIFO queues."""
    q_ab: queue.Queue = queue.Queue()
    q_ba: queue.Queue = queue.Queue()
    return (InprocChannel(a, b, q_ba, q_ab, transcript),
            InprocChannel(b, a, q_ab, q_ba, transcript))


# ---------------------------------------------------------------------------
# sockets

def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise TransportError(f"address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket, local: str, peer: str, transcript=None):
        super().__init__(local, peer, transcript)
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._wlock = threading.Lock()

    def _send_bytes(self, frame):
        try:
            with self._wlock:
                self._sock.sendall(frame)
        except OSError as e:
            raise TransportError(f"send to {self.peer} failed: {e}") from e

    def _recv_bytes(self, timeout):
        self._sock.settimeout(timeout)
        try:
            line = self._rfile.readline()
        except socket.timeout:
            raise TransportError(f"timed out waiting for {self.peer}") from None
        except OSError as e:
            raise TransportError(f"receive from {self.peer} failed: {e}") from e
        if not line:
            raise ClosedChannelError(f"{self.peer} closed the connection")
        if not line.endswith(b"\n"):
            raise TransportError(f"{self.peer} closed the connection mid-frame")
        return line

    def _close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._rfile.close()
        self._sock.close()


def _hello(name: str) -> bytes:
    return json.dumps({"proto": PROTO, "hello": name}, separators=(",", ":")).encode() + b"\n"


class Listener:
    """Bound TCP listener; each :meth:`accept` yields one channel.

    Connecting peers announce their party name in a one-line handshake that
    is not part of the message transcript.
    """

    def __init__(self, address: str, local: str = "listener", transcript: Transcript | None = None):
        host, port = parse_address(address)
        self.local = local
        self.transcript = transcript
        self._sock = socket.create_server((host, port))
        self.address = "%s:%d" % self._sock.getsockname()[:2]

    @property
    def port(self) -> int:
        return parse_address(self.address)[1]

    def accept(self, timeout: float | None = None) -> SocketChannel:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout:
            raise TransportError("timed out waiting for a connection") from None
        conn.settimeout(timeout)
        # byte-wise so nothing past the hello line is swallowed by a buffer
        buf = bytearray()
        try:
            while not buf.endswith(b"\n") and len(buf) < 4096:
                b = conn.recv(1)
                if not b:
                    break
                buf += b
        except socket.timeout:
            conn.close()
            raise TransportError("timed out waiting for the handshake") from None
        line = bytes(buf)
        try:
            hello = json.loads(line)
            peer = hello["hello"]
            if hello.get("proto") != PROTO:
                raise VersionError(f"peer speaks {hello.get('proto')!r}")
        except (ValueError, KeyError, TypeError):
            conn.close()
            raise FrameError("bad handshake") from None
        conn.settimeout(None)
        return SocketChannel(conn, self.local, str(peer), self.transcript)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def socket_listen(address: str, local: str = "listener", transcript: Transcript | None = None,
                  timeout: float | None = None) -> SocketChannel:
    """Accept exactly one connection on ``address`` and return its channel."""
    with Listener(address, local, transcript) as lst:
        return lst.accept(timeout)


def socket_connect(address: str, local: str, peer: str | None = None,
                   transcript: Transcript | None = None, retry_for: float = 0.0) -> SocketChannel:
    """Connect to a :class:`Listener`; retries refused connections for ``retry_for`` seconds."""
    host, port = parse_address(address)
    deadline = time.monotonic() + retry_for
    while True:
        try:
            sock = socket.create_connection((host, port))
            break
        except OSError as e:
            if time.monotonic() >= deadline:
                raise TransportError(f"cannot connect to {address}: {e}") from e
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.sendall(_hello(local))
    return SocketChannel(sock, local, peer or f"{host}:{port}", transcript)


# ---------------------------------------------------------------------------
# errors on the wire

def error_from_message(msg: Message) -> Exception:
    from . import errors

    cls: Callable[..., Exception] = {
        "alignment": errors.AlignmentError,
        "stale_model": errors.StaleModelError,
        "integrity": errors.ProtocolIntegrityError,
    }.get(msg.body.get("code"), errors.ProtocolError)
    return cls(f"peer error: {msg.body.get('message')}")


def send_error(ch: Channel, session: str, exc: Exception) -> None:
    from . import errors

    code = "protocol"
    if isinstance(exc, errors.AlignmentError):
        code = "alignment"
    elif isinstance(exc, errors.StaleModelError):
        code = "stale_model"
    elif isinstance(exc, errors.ProtocolIntegrityError):
        code = "integrity"
    try:
        ch.send("Error", {"code": code, "message": str(exc)}, session)
    except TransportError:
        pass


def body_ints(values) -> list[str]:
    return [str(int(v)) for v in values]


def parse_ints(values: Any) -> list[int]:
    try:
        return [int(v) for v in values]
    except (TypeError, ValueError):
        raise ProtocolError("expected a list of decimal integers") from None
