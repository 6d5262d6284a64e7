"""Loopback transports between processes.

Ports follow a fixed law, ``20000 + 8 * domain + topic_slot``, so every process can
derive its peers from the topology file alone. Receivers drop frames stamped with a
foreign domain id after parsing; those never reach a subscriber and show up only in
:class:`DropCounters`.
"""

from __future__ import annotations

import enum
import errno
import logging
import selectors
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from .core import DomainId, Payload, TopicName, validate_topic_name
from .errors import (
    BindFailedError,
    ConnectionLostError,
    InvariantViolation,
    NGBError,
    PayloadTooLargeError,
    TruncatedStreamError,
)
from .wire import WireFrame, decode_payload, encode_payload, frame, parse_frame, tag_for

log = logging.getLogger(__name__)

HOST = "127.0.0.1"
PORT_BASE = 20000
SLOTS_PER_DOMAIN = 8
UDP_MAX_DATAGRAM = 65507
_LEN = struct.Struct("<I")
_RECV_CHUNK = 1 << 20


class TransportKind(str, enum.Enum):
    UDP_BEST_EFFORT = "udp"
    TCP_RELIABLE = "tcp"


def port_for(domain: Union[DomainId, int], slot: int) -> int:
    d = int(DomainId(int(domain)))
    if not 0 <= slot < SLOTS_PER_DOMAIN:
        raise InvariantViolation(f"topic slot {slot} outside [0, {SLOTS_PER_DOMAIN})")
    port = PORT_BASE + d * SLOTS_PER_DOMAIN + slot
    assert port < 65536
    return port


@dataclass
class DropCounters:
    wrong_domain: int = 0
    queue_full: int = 0
    malformed: int = 0
    truncated_stream: int = 0
    surfaced: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def incr(self, name: str, n: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + n)

    def as_dict(self) -> dict:
        with self._lock:
            return {
                "wrong_domain": self.wrong_domain,
                "queue_full": self.queue_full,
                "malformed": self.malformed,
                "truncated_stream": self.truncated_stream,
                "surfaced": self.surfaced,
            }


# --------------------------------------------------------------------------- stream records


def encode_record(frame_bytes: bytes) -> bytes:
    return _LEN.pack(len(frame_bytes)) + frame_bytes


class StreamReassembler:
    """Splits a byte stream into length-delimited records (u32 length + body)."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> List[bytes]:
        buf = self._buf
        buf += chunk
        out = []
        pos = 0
        with memoryview(buf) as mv:
            while len(buf) - pos >= 4:
                (n,) = _LEN.unpack_from(buf, pos)
                if len(buf) - pos - 4 < n:
                    break
                out.append(bytes(mv[pos + 4 : pos + 4 + n]))
                pos += 4 + n
        if pos:
            del buf[:pos]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)

    def close(self) -> None:
        """Signal end of stream; raises if a record was cut off mid-way."""
        if self._buf:
            n = len(self._buf)
            self._buf.clear()
            raise TruncatedStreamError(f"stream ended with {n} bytes of an incomplete record")


def chunked_send(sock: socket.socket, frame_bytes: bytes) -> None:
    """Write one record to a stream socket."""
    try:
        sock.sendall(_LEN.pack(len(frame_bytes)))
        sock.sendall(frame_bytes)
    except (OSError, socket.timeout) as exc:
        raise ConnectionLostError(str(exc)) from exc


def reassemble(sock: socket.socket) -> List[bytes]:
    """Read a stream socket to EOF and return every complete record in order."""
    r = StreamReassembler()
    records = []
    while True:
        chunk = sock.recv(_RECV_CHUNK)
        if not chunk:
            break
        records.extend(r.feed(chunk))
    r.close()
    return records


# --------------------------------------------------------------------------- senders


class Sender:
    """Publishes frames stamped with ``domain`` to one loopback port."""

    def __init__(self, domain, topic, kind: TransportKind, port: int, send_timeout: float = 10.0):
        self.domain = int(DomainId(int(domain)))
        self.topic = str(validate_topic_name(str(topic)))
        self.kind = TransportKind(kind)
        self.port = port
        self.send_timeout = send_timeout
        self.unmatched = 0
        self._sock: Optional[socket.socket] = None
        self._lock = threading.Lock()
        self._next_connect = 0.0

    @property
    def address(self) -> Tuple[str, int]:
        return (HOST, self.port)

    def send(self, seq: int, msg: Payload) -> None:
        self.send_frame(frame(self.domain, self.topic, seq, tag_for(msg), encode_payload(msg)))

    def send_frame(self, data: bytes) -> bool:
        """Send one already-framed message. Returns False if no peer was reachable."""
        if self.kind is TransportKind.UDP_BEST_EFFORT:
            if len(data) > UDP_MAX_DATAGRAM:
                raise PayloadTooLargeError(f"frame of {len(data)} bytes exceeds the {UDP_MAX_DATAGRAM}-byte datagram limit")
            with self._lock:
                if self._sock is None:
                    self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                try:
                    self._sock.sendto(data, self.address)
                except OSError:
                    self.unmatched += 1
                    return False
            return True

        with self._lock:
            if self._sock is None and not self._connect():
                self.unmatched += 1
                return False
            try:
                chunked_send(self._sock, data)
            except ConnectionLostError:
                self._drop_connection()
                raise
        return True

    def _connect(self) -> bool:
        now = time.monotonic()
        if now < self._next_connect:
            return False
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            sock.connect(self.address)
        except OSError:
            sock.close()
            self._next_connect = now + 0.05
            return False
        sock.settimeout(self.send_timeout)
        self._sock = sock
        return True

    def _drop_connection(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    @property
    def connected(self) -> bool:
        return self._sock is not None

    def close(self) -> None:
        with self._lock:
            self._drop_connection()


# --------------------------------------------------------------------------- endpoints


class Endpoint:
    """Receive side of one topic in one domain, bound to its derived loopback port.

    ``recv`` is meant to be driven by a single reader thread.
    """

    def __init__(self, domain, topic, kind: TransportKind, slot: Optional[int] = None, port: Optional[int] = None):
        self.domain = DomainId(int(domain))
        self.topic: TopicName = validate_topic_name(str(topic))
        self.kind = TransportKind(kind)
        if port is None:
            if slot is None:
                raise ValueError("Endpoint needs a topic slot or an explicit port")
            port = port_for(self.domain, slot)
        self.port = port
        self.counters = DropCounters()
        self._sock: Optional[socket.socket] = None
        self._sel: Optional[selectors.BaseSelector] = None
        self._streams: Dict[socket.socket, StreamReassembler] = {}
        self._pending: List[bytes] = []
        self._sender: Optional[Sender] = None

    @property
    def address(self) -> Tuple[str, int]:
        return (HOST, self.port)

    # ----------------------------------------------------------- receive side

    def open(self) -> "Endpoint":
        if self._sock is not None:
            return self
        if self.kind is TransportKind.UDP_BEST_EFFORT:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
        else:
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind(self.address)
        except OSError as exc:
            sock.close()
            raise BindFailedError(f"{self.topic} (domain {self.domain.id}) on port {self.port}: {exc}") from exc
        self._sel = selectors.DefaultSelector()
        if self.kind is TransportKind.TCP_RELIABLE:
            sock.listen(16)
        sock.setblocking(False)
        self._sel.register(sock, selectors.EVENT_READ)
        self._sock = sock
        return self

    def close(self) -> None:
        if self._sel is not None:
            for conn in list(self._streams):
                self._close_stream(conn, eof=False)
            self._sel.close()
            self._sel = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None
        if self._sender is not None:
            self._sender.close()

    def __enter__(self):
        return self.open()

    def __exit__(self, *exc):
        self.close()

    def _close_stream(self, conn: socket.socket, eof: bool) -> None:
        r = self._streams.pop(conn)
        self._sel.unregister(conn)
        conn.close()
        if eof:
            try:
                r.close()
            except TruncatedStreamError as exc:
                self.counters.incr("truncated_stream")
                log.warning("%s: %s", self.topic, exc)

    def _pump(self, timeout: Optional[float]) -> None:
        """Wait up to ``timeout`` for socket activity and move complete records to the pending list."""
        for key, _ in self._sel.select(timeout):
            sock = key.fileobj
            if sock is self._sock:
                if self.kind is TransportKind.UDP_BEST_EFFORT:
                    while True:
                        try:
                            self._pending.append(sock.recv(65536))
                        except (BlockingIOError, InterruptedError):
                            break
                else:
                    try:
                        conn, _ = sock.accept()
                    except (BlockingIOError, InterruptedError):
                        continue
                    conn.setblocking(False)
                    self._streams[conn] = StreamReassembler()
                    self._sel.register(conn, selectors.EVENT_READ)
                continue
            try:
                chunk = sock.recv(_RECV_CHUNK)
            except (BlockingIOError, InterruptedError):
                continue
            except OSError as exc:
                if exc.errno not in (errno.ECONNRESET, errno.EPIPE):
                    raise
                chunk = b""
            if not chunk:
                self._close_stream(sock, eof=True)
                continue
            self._pending.extend(self._streams[sock].feed(chunk))

    def _next_frame(self) -> Optional[WireFrame]:
        while self._pending:
            raw = self._pending.pop(0)
            try:
                fr = parse_frame(raw)
            except NGBError as exc:
                self.counters.incr("malformed")
                log.debug("%s: dropping malformed frame: %s", self.topic, exc)
                continue
            if fr.domain_id != self.domain.id:
                self.counters.incr("wrong_domain")
                continue
            if fr.topic != self.topic.value:
                self.counters.incr("malformed")
                continue
            return fr
        return None

    def recv(self, timeout: Optional[float] = 0.0) -> Optional[WireFrame]:
        """Next frame for this endpoint's domain and topic, or None if none arrived in time."""
        if self._sock is None:
            self.open()
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            fr = self._next_frame()
            if fr is not None:
                self.counters.incr("surfaced")
                return fr
            if deadline is None:
                self._pump(None)
                continue
            self._pump(max(0.0, deadline - time.monotonic()))
            if not self._pending and time.monotonic() >= deadline:
                return None

    def recv_message(self, timeout: Optional[float] = 0.0) -> Optional[Tuple[WireFrame, Payload]]:
        """Like :meth:`recv` but also decodes; frames that fail to decode are counted and skipped."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            fr = self.recv(remaining)
            if fr is None:
                return None
            try:
                return fr, decode_payload(fr.type_tag, fr.payload)
            except NGBError as exc:
                self.counters.incr("surfaced", -1)
                self.counters.incr("malformed")
                log.debug("%s: dropping undecodable payload: %s", self.topic, exc)

    # ----------------------------------------------------------- send side

    def send(self, seq: int, msg: Payload) -> None:
        if self._sender is None:
            self._sender = Sender(self.domain, self.topic, self.kind, self.port)
        self._sender.send(seq, msg)


def send(ep: Endpoint, seq: int, msg: Payload) -> None:
    ep.send(seq, msg)


def recv(ep: Endpoint, timeout: Optional[float] = 0.0) -> Optional[WireFrame]:
    return ep.recv(timeout)
