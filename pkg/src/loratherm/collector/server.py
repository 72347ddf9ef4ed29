"""Line-oriented TCP front end for the ingest pipeline.

One gateway report per line; responses are not sent (the uplink path is
fire-and-forget, like the radio side). Multiple gateway connections are
served concurrently; pipeline state is guarded by the collector's own
lock, so handlers stay trivial.
"""

from __future__ import annotations

import logging
import socketserver
import threading

from .pipeline import Collector

log = logging.getLogger(__name__)


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        collector: Collector = self.server.collector  # type: ignore[attr-defined]
        for raw in self.rfile:
            text = raw.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            outcome, _ = collector.ingest_line(text)
            self.server.lines_seen += 1  # type: ignore[attr-defined]
            log.debug("ingest %s: %s", outcome.value, text[:60])


class CollectorServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], collector: Collector):
        super().__init__(address, _LineHandler)
        self.collector = collector
        self.lines_seen = 0


def serve(
    collector: Collector,
    host: str = "127.0.0.1",
    port: int = 0,
    background: bool = False,
) -> CollectorServer:
    """Start serving; returns the server (caller owns shutdown).

    With background=True the accept loop runs on a daemon thread and the
    bound server is returned immediately, which is what tests want. Port
    0 binds an ephemeral port; read the real one from server_address.
    """
    server = CollectorServer((host, port), collector)
    if background:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
    return server
