"""Host market nodes in-process or behind local TCP sockets."""

from __future__ import annotations

import threading

from .market import MarketNode, run_market_session
from .transport import InProcessTransport, LineServer, connect

INPROC = "inproc"
SOCKET = "socket"


class Simulation:
    """Run each market's session server and hand out researcher-side transports.

    Use as a context manager; on exit the researcher side closes every channel,
    the market sessions finish, and their logs are in ``logs``.
    """

    def __init__(self, markets: list[MarketNode], transport: str = INPROC, host: str = "127.0.0.1",
                 timeout: float = 30.0):
        if transport not in (INPROC, SOCKET):
            raise ValueError(f"unknown transport {transport!r}")
        self.markets = list(markets)
        self.kind = transport
        self.host = host
        self.timeout = timeout
        self.transports = []
        self.logs = {}
        self._threads = []
        self._servers = []
        self._done = {}

    def __enter__(self):
        for node in self.markets:
            done = threading.Event()
            self._done[node.market_id] = done
            if self.kind == INPROC:
                researcher_end, market_end = InProcessTransport.pair(node.market_id)
                t = threading.Thread(target=self._serve, args=(node, market_end, done), daemon=True)
                t.start()
                self._threads.append(t)
                self.transports.append(researcher_end)
            else:
                server = LineServer((self.host, 0), lambda tr, node=node, done=done: self._serve(node, tr, done))
                server.start()
                self._servers.append(server)
                self.transports.append(connect(*server.address, timeout=self.timeout))
        return self

    def _serve(self, node, transport, done):
        try:
            self.logs[node.market_id] = run_market_session(node, transport)
        finally:
            if self.kind == INPROC:
                transport.close()
            done.set()

    def __exit__(self, *exc):
        for t in self.transports:
            t.close()
        for market_id, done in self._done.items():
            if not done.wait(self.timeout):
                raise TimeoutError(f"market {market_id} session did not finish")
        for t in self._threads:
            t.join(self.timeout)
        for s in self._servers:
            s.stop()
        return False
