"""Message channels: an in-process queue pair and a line-oriented TCP socket.

Both move encoded lines, so a transcript is byte-identical whichever
transport carried it.
"""

from __future__ import annotations

import queue
import socket
import socketserver
import threading

from .messages import MAX_LINE_BYTES, ProtocolDecodeError, decode_message, encode_message


class TransportTimeout(TimeoutError):
    pass


class TransportClosed(ConnectionError):
    pass


class Transport:
    """Common message interface over a raw line channel."""

    label = ""

    def send_line(self, line: bytes) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: float | None = None) -> bytes | None:
        """Next line including its newline, or ``None`` once the peer has closed."""
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def send(self, msg) -> bytes:
        line = encode_message(msg)
        self.send_line(line)
        return line

    def recv(self, timeout: float | None = None):
        line = self.recv_line(timeout)
        return None if line is None else decode_message(line)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_CLOSED = object()


class InProcessTransport(Transport):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, label: str = "inproc"):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False
        self._peer_closed = False
        self.label = label

    @classmethod
    def pair(cls, label: str = "inproc") -> tuple["InProcessTransport", "InProcessTransport"]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, label), cls(b, a, label)

    def send_line(self, line: bytes) -> None:
        if self._closed:
            raise TransportClosed(f"{self.label}: transport closed")
        if len(line) > MAX_LINE_BYTES:
            raise ProtocolDecodeError("oversize line")
        self._outbox.put(bytes(line))

    def recv_line(self, timeout: float | None = None) -> bytes | None:
        if self._peer_closed:
            return None
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"{self.label}: no message within {timeout}s") from None
        if item is _CLOSED:
            self._peer_closed = True
            return None
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


class SocketTransport(Transport):
    def __init__(self, sock: socket.socket, label: str = ""):
        self._sock = sock
        self._reader = sock.makefile("rb")
        self._closed = False
        self.label = label or _peer_label(sock)

    def send_line(self, line: bytes) -> None:
        if self._closed:
            raise TransportClosed(f"{self.label}: transport closed")
        self._sock.sendall(line)

    def recv_line(self, timeout: float | None = None) -> bytes | None:
        self._sock.settimeout(timeout)
        try:
            line = self._reader.readline(MAX_LINE_BYTES + 1)
        except socket.timeout:
            raise TransportTimeout(f"{self.label}: no message within {timeout}s") from None
        except OSError:
            return None
        if not line:
            return None
        if len(line) > MAX_LINE_BYTES:
            raise ProtocolDecodeError(f"oversize line from {self.label}")
        return line

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._reader.close()
        self._sock.close()


def _peer_label(sock) -> str:
    try:
        host, port = sock.getpeername()[:2]
        return f"{host}:{port}"
    except OSError:
        return "socket"


def connect(host: str, port: int, timeout: float = 5.0) -> SocketTransport:
    sock = socket.create_connection((host, port), timeout=timeout)
    return SocketTransport(sock, f"{host}:{port}")


class LineServer(socketserver.TCPServer):
    """Serves one session at a time, each handled by ``session(transport)``."""

    allow_reuse_address = True

    def __init__(self, address, session):
        self.session = session
        super().__init__(address, _Handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        transport = SocketTransport(self.request)
        try:
            self.server.session(transport)
        finally:
            transport.close()
