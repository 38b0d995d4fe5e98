"""In-process and TCP transports for the three pairwise channels.

Both transports move encoded frame bytes and hand the receiver a FIFO queue
per direction, so endpoint code is identical regardless of transport.
"""
from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from ..errors import QDSError
from ..protocol import PartyId
from .frames import Frame, MessageType, PREFIX, decode_frame, encode_frame

A, B, C = PartyId.ALICE, PartyId.BOB, PartyId.CHARLIE

# Frame types that may only travel on a confidential channel.
CONFIDENTIAL_TYPES = frozenset({MessageType.FORWARD_HALF})


class ChannelViolation(QDSError):
    pass


class ChannelClosed(QDSError):
    pass


@dataclass(frozen=True)
class ChannelSpec:
    endpoints: Tuple[PartyId, PartyId]
    authenticated: bool = True
    confidential: bool = False

    @property
    def name(self) -> str:
        return "-".join(p.value for p in self.endpoints)


CHANNELS = (
    ChannelSpec((A, B)),
    ChannelSpec((A, C)),
    ChannelSpec((B, C), confidential=True),
)


def channel_between(x: PartyId, y: PartyId) -> ChannelSpec:
    for spec in CHANNELS:
        if set(spec.endpoints) == {x, y}:
            return spec
    raise KeyError(f"no channel between {x} and {y}")


@dataclass
class SentRecord:
    channel: str
    sender: PartyId
    receiver: Optional[PartyId]
    frame: Frame
    raw: bytes
    t: float
    delivered: bool


DropRule = Callable[[PartyId, PartyId, Frame], bool]


class Transport:
    """Common bookkeeping: channel policy, per-sender sequence numbers, send log."""

    def __init__(self, drop: Optional[DropRule] = None):
        self._drop = drop
        self._lock = threading.Lock()
        self._seq: Dict[Tuple[PartyId, str], int] = {}
        self._start = time.monotonic()
        self.sent: List[SentRecord] = []
        self._inbox: Dict[Tuple[PartyId, PartyId], "queue.Queue[bytes]"] = {}
        for spec in CHANNELS:
            x, y = spec.endpoints
            self._inbox[(x, y)] = queue.Queue()
            self._inbox[(y, x)] = queue.Queue()

    def next_seq(self, sender: PartyId, channel: str) -> int:
        with self._lock:
            n = self._seq.get((sender, channel), 0)
            self._seq[(sender, channel)] = n + 1
            return n

    def send(self, sender: PartyId, receiver: PartyId, kind: MessageType, session: str, body: dict) -> Frame:
        spec = channel_between(sender, receiver)
        if kind in CONFIDENTIAL_TYPES and not spec.confidential:
            raise ChannelViolation(f"{kind.value} on non-confidential channel {spec.name}")
        frame = Frame(kind, session, self.next_seq(sender, spec.name), body)
        raw = encode_frame(frame)
        deliver = not (self._drop and self._drop(sender, receiver, frame))
        with self._lock:
            self.sent.append(
                SentRecord(spec.name, sender, receiver, frame, raw, time.monotonic() - self._start, deliver)
            )
        if deliver:
            self._transmit(sender, receiver, raw)
        return frame

    def log_local(self, party: PartyId, channel: str, frame: Frame) -> None:
        """Record a frame that is reported to the harness rather than sent to a peer."""
        raw = encode_frame(frame)
        with self._lock:
            self.sent.append(SentRecord(channel, party, None, frame, raw, time.monotonic() - self._start, True))

    def recv(self, receiver: PartyId, sender: PartyId, timeout: float, cancelled: threading.Event) -> Frame:
        inbox = self._inbox[(sender, receiver)]
        deadline = time.monotonic() + timeout
        while True:
            if cancelled.is_set():
                raise ChannelClosed("session cancelled")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(f"{receiver.value} timed out waiting for {sender.value}")
            try:
                item = inbox.get(timeout=min(remaining, 0.05))
            except queue.Empty:
                continue
            return decode_frame(item)

    def _transmit(self, sender: PartyId, receiver: PartyId, raw: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessTransport(Transport):
    def _transmit(self, sender, receiver, raw):
        self._inbox[(sender, receiver)].put(raw)


class SocketTransport(Transport):
    """One TCP connection per channel on ``host``.

    ``ports`` maps each channel name to the port its listening endpoint binds;
    0 (the default) picks an ephemeral port. A reader thread per socket drains
    incoming frames into the receiver's queue so writers never block on a
    reader that is busy elsewhere.
    """

    def __init__(self, host: str = "127.0.0.1", ports: Optional[Dict[str, int]] = None, drop=None):
        super().__init__(drop)
        ports = ports or {}
        self._socks: Dict[Tuple[PartyId, PartyId], socket.socket] = {}
        self._readers: List[threading.Thread] = []
        self._closing = threading.Event()
        for spec in CHANNELS:
            listener_party, connector_party = spec.endpoints
            with socket.create_server((host, ports.get(spec.name, 0))) as server:
                addr = server.getsockname()
                client = socket.create_connection(addr[:2])
                accepted, _ = server.accept()
            # listener side writes via `accepted`, connector side via `client`
            self._socks[(listener_party, connector_party)] = accepted
            self._socks[(connector_party, listener_party)] = client
            self._start_reader(accepted, src=connector_party, dst=listener_party)
            self._start_reader(client, src=listener_party, dst=connector_party)

    def _start_reader(self, sock: socket.socket, src: PartyId, dst: PartyId) -> None:
        inbox = self._inbox[(src, dst)]

        def read_exact(n: int) -> bytes:
            chunks = bytearray()
            while len(chunks) < n:
                chunk = sock.recv(n - len(chunks))
                if not chunk:
                    raise ChannelClosed("peer closed connection")
                chunks += chunk
            return bytes(chunks)

        def loop():
            while not self._closing.is_set():
                try:
                    header = read_exact(PREFIX.size)
                    (length,) = PREFIX.unpack(header)
                    inbox.put(header + read_exact(length))
                except (ChannelClosed, OSError):
                    return

        thread = threading.Thread(target=loop, daemon=True, name=f"reader-{src.value}-{dst.value}")
        thread.start()
        self._readers.append(thread)

    def _transmit(self, sender, receiver, raw):
        self._socks[(sender, receiver)].sendall(raw)

    def close(self) -> None:
        self._closing.set()
        for sock in self._socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        for thread in self._readers:
            thread.join(timeout=1.0)


def make_transport(kind: str, **kwargs) -> Transport:
    if kind in ("in_process", "inproc"):
        kwargs.pop("host", None)
        kwargs.pop("ports", None)
        return InProcessTransport(**kwargs)
    if kind == "socket":
        return SocketTransport(**kwargs)
    raise ValueError(f"unknown transport {kind!r}")


__all__ = [
    "CHANNELS",
    "ChannelClosed",
    "ChannelSpec",
    "ChannelViolation",
    "InProcessTransport",
    "SocketTransport",
    "Transport",
    "make_transport",
]
