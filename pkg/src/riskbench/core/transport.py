"""Rank-addressed message passing for the master/worker farm.

Rank 0 is the master. Two backends share one endpoint contract: an in-process
hub for tests and single-machine runs, and a TCP star where every worker holds
one connection to the master.

TCP wire framing (big-endian)::

    length u32 (bytes after this field) | tag u32 | source rank u32 | payload

Handshake: the worker sends ``"RBW1" | protocol version u32 | role u32``; the
master answers ``"RBW1" | protocol version u32 | rank u32 | size u32 | session u32``.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

from riskbench.constants import DEFAULT_MAX_PAYLOAD, HELLO_MAGIC, PROTOCOL_VERSION
from riskbench.core.exceptions import (
    HandshakeError,
    PayloadTooLargeError,
    PeerLostError,
    ProtocolError,
    TransportError,
    TransportTimeout,
    UnknownRankError,
)
from riskbench.core.settings import parse_addr

NAME = 1
BLOB = 2
RESULT = 3
TAGS = (NAME, BLOB, RESULT)
ANY = -1

MASTER_RANK = 0
WORKER_ROLE = 1

_HEADER = struct.Struct(">III")
_HELLO = struct.Struct(">4sII")
_WELCOME = struct.Struct(">4sIIII")
FRAME_OVERHEAD = _HEADER.size


@dataclass(frozen=True)
class Frame:
    tag: int
    source: int
    payload: bytes


class Mailbox:
    """Thread-safe receive queue with MPI-style (source, tag) matching.

    Frames stay FIFO per source. A request for any source rotates over the
    sources holding a matching frame, starting after the last source consumed.
    """

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._queues: dict[int, deque[Frame]] = {}
        self._last_source = -1
        self._lost: dict[int, TransportError] = {}
        self._reported: set[int] = set()
        self._closed = False

    def put(self, frame: Frame) -> None:
        with self._cond:
            self._queues.setdefault(frame.source, deque()).append(frame)
            self._cond.notify_all()

    def mark_lost(self, rank: int, error: TransportError | None = None) -> None:
        with self._cond:
            self._lost.setdefault(rank, error or PeerLostError(rank))
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @staticmethod
    def _match(queue: deque[Frame], tag: int) -> int | None:
        for index, frame in enumerate(queue):
            if tag == ANY or frame.tag == tag:
                return index
        return None

    def _find(self, source: int, tag: int) -> tuple[deque[Frame], int] | None:
        if source != ANY:
            ranks = [source] if source in self._queues else []
        else:
            ranks = sorted(self._queues, key=lambda rank: (rank <= self._last_source, rank))
        for rank in ranks:
            queue = self._queues[rank]
            index = self._match(queue, tag)
            if index is not None:
                return queue, index
        return None

    def _failure(self, source: int) -> TransportError | None:
        if self._closed:
            return TransportError("Endpoint is closed.")
        if source != ANY:
            return self._lost.get(source)
        for rank, error in self._lost.items():
            if rank not in self._reported:
                self._reported.add(rank)
                return error
        return None

    def wait(self, source: int, tag: int, *, consume: bool, timeout: float | None = None) -> Frame:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                found = self._find(source, tag)
                if found is not None:
                    queue, index = found
                    frame = queue[index]
                    if consume:
                        del queue[index]
                        self._last_source = frame.source
                    return frame
                failure = self._failure(source)
                if failure is not None:
                    raise failure
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TransportTimeout(f"No frame from source {source} with tag {tag} within {timeout}s.")
                self._cond.wait(remaining)


class Endpoint:
    backend = "abstract"

    def __init__(self, rank: int, size: int, *, max_payload: int = DEFAULT_MAX_PAYLOAD) -> None:
        self.rank = rank
        self.size = size
        self.max_payload = max_payload
        self.session = 0
        self.bytes_sent = 0
        self.frames_sent = 0
        self._mailbox = Mailbox()

    def _check(self, dest: int, tag: int, payload: bytes) -> None:
        if tag not in TAGS:
            raise ProtocolError(f"Unknown tag {tag}.")
        if not 0 <= dest < self.size:
            raise UnknownRankError(f"Rank {dest} is outside 0..{self.size - 1}.")
        if len(payload) > self.max_payload:
            raise PayloadTooLargeError(
                f"Payload of {len(payload)} bytes exceeds the {self.max_payload}-byte limit."
            )

    def send(self, dest: int, tag: int, payload: bytes) -> None:
        self._check(dest, tag, payload)
        if dest == self.rank:
            self._mailbox.put(Frame(tag, self.rank, bytes(payload)))
        else:
            self._deliver(dest, tag, bytes(payload))
        self.bytes_sent += FRAME_OVERHEAD + len(payload)
        self.frames_sent += 1

    def _deliver(self, dest: int, tag: int, payload: bytes) -> None:
        raise NotImplementedError

    def release(self, rank: int) -> None:
        """Mark ``rank`` as stopped; its disconnect is no longer a failure worth a warning."""

    def probe(self, source: int = ANY, tag: int = ANY, *, timeout: float | None = None) -> tuple[int, int, int]:
        frame = self._mailbox.wait(source, tag, consume=False, timeout=timeout)
        return frame.source, frame.tag, len(frame.payload)

    def recv(self, source: int = ANY, tag: int = ANY, *, timeout: float | None = None) -> Frame:
        return self._mailbox.wait(source, tag, consume=True, timeout=timeout)

    def close(self) -> None:
        self._mailbox.close()

    def __enter__(self) -> "Endpoint":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class LocalHub:
    def __init__(self, size: int, max_payload: int) -> None:
        self.endpoints = [LocalEndpoint(self, rank, size, max_payload=max_payload) for rank in range(size)]

    def deliver(self, dest: int, frame: Frame) -> None:
        target = self.endpoints[dest]
        if target.closed:
            raise PeerLostError(dest)
        target._mailbox.put(frame)

    def detach(self, rank: int) -> None:
        for endpoint in self.endpoints:
            if endpoint.rank != rank:
                endpoint._mailbox.mark_lost(rank)


class LocalEndpoint(Endpoint):
    backend = "inprocess"

    def __init__(self, hub: LocalHub, rank: int, size: int, *, max_payload: int) -> None:
        super().__init__(rank, size, max_payload=max_payload)
        self._hub = hub
        self.closed = False

    def _deliver(self, dest: int, tag: int, payload: bytes) -> None:
        self._hub.deliver(dest, Frame(tag, self.rank, payload))

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._hub.detach(self.rank)
        super().close()


def spawn_local(n: int, *, max_payload: int = DEFAULT_MAX_PAYLOAD) -> list[LocalEndpoint]:
    """Master endpoint followed by ``n`` worker endpoints sharing one hub."""
    if n < 1:
        raise ValueError("spawn_local needs at least one worker.")
    return LocalHub(n + 1, max_payload).endpoints


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buffer = bytearray(size)
    view = memoryview(buffer)
    received = 0
    while received < size:
        count = sock.recv_into(view[received:], size - received)
        if count == 0:
            raise EOFError("connection closed")
        received += count
    return bytes(buffer)


def _encode_frame(tag: int, source: int, payload: bytes) -> bytes:
    return _HEADER.pack(len(payload) + 8, tag, source) + payload


def _read_frames(
    sock: socket.socket,
    peer: int,
    mailbox: Mailbox,
    max_payload: int,
    quiet: threading.Event,
) -> None:
    """Reader loop for one connection; every exit path reports the peer.

    Once ``quiet`` is set a closed connection is an expected shutdown.
    """
    error: TransportError | None = None
    try:
        while True:
            head = _recv_exact(sock, 4)
            if head == HELLO_MAGIC:
                raise ProtocolError(f"Duplicate hello from rank {peer}.")
            length = struct.unpack(">I", head)[0]
            if length < 8 or length - 8 > max_payload:
                raise ProtocolError(f"Frame length {length} from rank {peer} is out of range.")
            tag, source = struct.unpack(">II", _recv_exact(sock, 8))
            if tag not in TAGS or source != peer:
                raise ProtocolError(f"Malformed frame header from rank {peer} (tag {tag}, source {source}).")
            mailbox.put(Frame(tag, source, _recv_exact(sock, length - 8)))
    except ProtocolError as exc:
        logging.error("%s", exc)
        error = exc
    except (EOFError, OSError):
        if quiet.is_set():
            logging.debug("Rank %s disconnected.", peer)
        else:
            logging.warning("Lost connection to rank %s.", peer)
    mailbox.mark_lost(peer, error)


class TcpMasterEndpoint(Endpoint):
    backend = "tcp"

    def __init__(self, server: socket.socket, size: int, *, max_payload: int) -> None:
        super().__init__(MASTER_RANK, size, max_payload=max_payload)
        self._server = server
        self._conns: dict[int, socket.socket] = {}
        self._locks: dict[int, threading.Lock] = {}
        self._released: dict[int, threading.Event] = {}

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def accept_workers(self, n_workers: int, *, session: int, timeout: float | None) -> None:
        self._server.settimeout(timeout)
        while len(self._conns) < n_workers:
            try:
                conn, peer_addr = self._server.accept()
            except socket.timeout as exc:
                raise TransportTimeout(
                    f"Only {len(self._conns)} of {n_workers} workers connected within {timeout}s."
                ) from exc
            conn.settimeout(timeout)
            try:
                magic, version, role = _HELLO.unpack(_recv_exact(conn, _HELLO.size))
            except (EOFError, OSError) as exc:
                conn.close()
                logging.warning("Dropped connection from %s during handshake: %s", peer_addr, exc)
                continue
            if magic != HELLO_MAGIC or version != PROTOCOL_VERSION or role != WORKER_ROLE:
                conn.close()
                raise HandshakeError(
                    f"Bad hello from {peer_addr}: magic {magic!r}, version {version}, role {role}."
                )
            rank = len(self._conns) + 1
            conn.sendall(_WELCOME.pack(HELLO_MAGIC, PROTOCOL_VERSION, rank, self.size, session))
            conn.settimeout(None)
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._conns[rank] = conn
            self._locks[rank] = threading.Lock()
            self._released[rank] = threading.Event()
            threading.Thread(
                target=_read_frames,
                args=(conn, rank, self._mailbox, self.max_payload, self._released[rank]),
                name=f"riskbench-reader-{rank}",
                daemon=True,
            ).start()
            logging.info("Worker %s connected from %s:%s.", rank, *peer_addr[:2])
        self.session = session

    def release(self, rank: int) -> None:
        if rank in self._released:
            self._released[rank].set()

    def _deliver(self, dest: int, tag: int, payload: bytes) -> None:
        try:
            with self._locks[dest]:
                self._conns[dest].sendall(_encode_frame(tag, self.rank, payload))
        except OSError as exc:
            raise PeerLostError(dest) from exc

    def close(self) -> None:
        for released in self._released.values():
            released.set()
        for conn in self._conns.values():
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        self._server.close()
        super().close()


def listen(
    addr: str,
    n_workers: int,
    *,
    session: int = 0,
    timeout: float | None = None,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
) -> TcpMasterEndpoint:
    """Bind ``addr``, wait for ``n_workers`` hellos and assign ranks in connection order."""
    endpoint = bind(addr, n_workers, max_payload=max_payload)
    try:
        endpoint.accept_workers(n_workers, session=session, timeout=timeout)
    except BaseException:
        endpoint.close()
        raise
    return endpoint


def bind(addr: str, n_workers: int, *, max_payload: int = DEFAULT_MAX_PAYLOAD) -> TcpMasterEndpoint:
    """Bind without accepting; pair with ``accept_workers`` when the port must be known first."""
    if n_workers < 1:
        raise ValueError("A master needs at least one worker.")
    host, port = parse_addr(addr)
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind((host, port))
        server.listen(n_workers)
    except OSError as exc:
        server.close()
        raise TransportError(f"Could not listen on {addr}: {exc}") from exc
    return TcpMasterEndpoint(server, n_workers + 1, max_payload=max_payload)


class TcpWorkerEndpoint(Endpoint):
    backend = "tcp"

    def __init__(self, sock: socket.socket, rank: int, size: int, session: int, *, max_payload: int) -> None:
        super().__init__(rank, size, max_payload=max_payload)
        self.session = session
        self._sock = sock
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        threading.Thread(
            target=_read_frames,
            args=(sock, MASTER_RANK, self._mailbox, max_payload, self._stopping),
            name=f"riskbench-reader-w{rank}",
            daemon=True,
        ).start()

    def _deliver(self, dest: int, tag: int, payload: bytes) -> None:
        if dest != MASTER_RANK:
            raise UnknownRankError(f"Rank {self.rank} can only reach the master and itself, not rank {dest}.")
        try:
            with self._lock:
                self._sock.sendall(_encode_frame(tag, self.rank, payload))
        except OSError as exc:
            raise PeerLostError(MASTER_RANK) from exc

    def close(self) -> None:
        self._stopping.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        super().close()


def connect(
    addr: str,
    *,
    timeout: float = 30.0,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
) -> TcpWorkerEndpoint:
    """Connect to a master, retrying until ``timeout`` so workers may start first."""
    host, port = parse_addr(addr)
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=max(deadline - time.monotonic(), 0.1))
            break
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise TransportTimeout(f"Could not reach master at {addr} within {timeout}s: {exc}") from exc
            time.sleep(0.1)
    try:
        sock.sendall(_HELLO.pack(HELLO_MAGIC, PROTOCOL_VERSION, WORKER_ROLE))
        magic, version, rank, size, session = _WELCOME.unpack(_recv_exact(sock, _WELCOME.size))
    except (EOFError, OSError) as exc:
        sock.close()
        raise HandshakeError(f"Master at {addr} closed the connection during the handshake.") from exc
    if magic != HELLO_MAGIC or version != PROTOCOL_VERSION:
        sock.close()
        raise HandshakeError(f"Unexpected welcome from {addr}: magic {magic!r}, version {version}.")
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    logging.info("Joined master %s as rank %s of %s.", addr, rank, size)
    return TcpWorkerEndpoint(sock, rank, size, session, max_payload=max_payload)
