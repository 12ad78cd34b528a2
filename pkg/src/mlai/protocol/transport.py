"""Reliable ordered byte streams and the message channel on top of them.

``loopback_pair`` gives two in-process endpoints for deterministic runs;
``SocketTransport`` wraps a connected TCP (or ``socketpair``) socket. Both
expose ``send_bytes`` / ``recv_bytes`` / ``close`` and are interchangeable
under :class:`Channel`.
"""
import array
import collections
import fcntl
import select
import socket
import termios
import threading
import time

import numpy as np

from ..errors import TransportClosed
from .messages import FrameReader, Message, MessageKind, frame_message


class LoopbackTransport:
    """One end of an in-memory stream.

    ``chunking`` (a seed) makes the peer see the byte stream re-cut into
    random pieces, so readers are exercised against fragmentation.
    """

    def __init__(self, chunking=None):
        self._inbox = collections.deque()
        self.peer = None
        self.closed = False
        self._rng = None if chunking is None else np.random.default_rng(chunking)
        self.bytes_sent = 0

    def send_bytes(self, data):
        if self.closed or self.peer is None or self.peer.closed:
            raise TransportClosed("loopback peer is closed")
        self.bytes_sent += len(data)
        if self._rng is None or len(data) < 2:
            self.peer._inbox.append(bytes(data))
            return
        pos = 0
        while pos < len(data):
            step = int(self._rng.integers(1, max(2, len(data) // 3) + 1))
            self.peer._inbox.append(bytes(data[pos : pos + step]))
            pos += step

    def recv_bytes(self):
        """Everything currently buffered (possibly b"")."""
        if not self._inbox:
            return b""
        data = b"".join(self._inbox)
        self._inbox.clear()
        return data

    def in_flight(self):
        return sum(len(c) for c in self._inbox)

    def close(self):
        self.closed = True


def loopback_pair(chunking=None):
    a = LoopbackTransport(chunking)
    b = LoopbackTransport(None if chunking is None else chunking + 1)
    a.peer, b.peer = b, a
    return a, b


class SocketTransport:
    """Blocking-send / polling-receive wrapper around a stream socket."""

    def __init__(self, sock):
        self.sock = sock
        self._send_lock = threading.Lock()
        self.closed = False

    def send_bytes(self, data):
        # whole-message atomicity when several threads share one connection
        with self._send_lock:
            try:
                self.sock.sendall(data)
            except OSError as exc:
                raise TransportClosed(str(exc)) from exc

    def recv_bytes(self, timeout=0.0):
        """Everything readable now, waiting up to ``timeout`` for the first byte."""
        chunks = []
        while True:
            ready, _, _ = select.select([self.sock], [], [], timeout if not chunks else 0.0)
            if not ready:
                return b"".join(chunks)
            try:
                data = self.sock.recv(65536)
            except OSError as exc:
                raise TransportClosed(str(exc)) from exc
            if not data:
                self.closed = True
                if chunks:
                    return b"".join(chunks)
                raise TransportClosed("peer closed the connection")
            chunks.append(data)

    def in_flight(self):
        """Bytes received by the kernel but not yet read."""
        if self.closed:
            return 0
        buf = array.array("i", [0])
        try:
            fcntl.ioctl(self.sock.fileno(), termios.FIONREAD, buf)
        except OSError:
            return 0
        return buf[0]

    def close(self):
        self.closed = True
        try:
            self.sock.close()
        except OSError:
            pass


def socket_pair():
    a, b = socket.socketpair()
    return SocketTransport(a), SocketTransport(b)


class Channel:
    """Typed message endpoint: numbers outgoing messages and reassembles incoming ones."""

    def __init__(self, transport, sender):
        self.transport = transport
        self.sender = sender
        self._seq = 0
        self._reader = FrameReader()

    def send(self, kind, payload=b""):
        msg = Message(MessageKind(kind), self._seq, self.sender, payload)
        self.transport.send_bytes(frame_message(msg))
        self._seq += 1
        return msg

    def poll(self, **kw):
        data = self.transport.recv_bytes(**kw)
        return self._reader.feed(data) if data else []

    def receive(self, timeout=5.0):
        """Block (sockets only) until at least one message arrives."""
        deadline = time.monotonic() + timeout
        while True:
            msgs = self.poll(timeout=max(0.0, min(0.05, deadline - time.monotonic())))
            if msgs or time.monotonic() >= deadline:
                return msgs

    @property
    def idle(self):
        return self.transport.in_flight() == 0 and self._reader.pending == 0
