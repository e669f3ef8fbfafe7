"""Line-oriented TCP plumbing shared by the PDU mock and the controller."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from typing import Callable, Iterable

log = logging.getLogger(__name__)

MAX_LINE = 4096


def parse_address(text: str) -> tuple[str, int]:
    """``host:port`` (or bare ``port``) to a socket address tuple."""
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ValueError(f"bad listen address {text!r}") from None


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        respond = self.server.respond
        while True:
            raw = self.rfile.readline(MAX_LINE)
            if not raw:
                break
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                reply = "ERR bad-request"
            else:
                try:
                    reply = respond(line)
                except Exception:
                    log.exception("handler failed on %r", line)
                    reply = "ERR internal"
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class LineServer(socketserver.ThreadingTCPServer):
    """Threaded server answering each request line with ``respond(line)``."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, respond: Callable[[str], str]):
        self.respond = respond
        super().__init__(address, _LineHandler)

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def request_lines(address, lines: Iterable[str], timeout: float = 5.0) -> list[str]:
    """Send lines over one connection and collect one reply per line."""
    replies = []
    with socket.create_connection(address, timeout=timeout) as sock:
        reader = sock.makefile("r", encoding="utf-8", newline="\n")
        for line in lines:
            sock.sendall((line.rstrip("\n") + "\n").encode("utf-8"))
            replies.append(reader.readline().rstrip("\n"))
    return replies
