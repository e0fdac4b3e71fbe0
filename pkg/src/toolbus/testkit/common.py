"""Shared plumbing for the hermetic mock servers."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..core import ToolError

__all__ = ["BindError", "QuietHandler", "start_http_server"]


class BindError(ToolError):
    pass


class QuietHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args) -> None:  # keep test output clean
        pass

    def send_json(self, status: int, payload, extra_headers: dict | None = None) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def send_empty(self, status: int, extra_headers: dict | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Length", "0")
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.end_headers()

    def read_json_body(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None
        return json.loads(raw)


def start_http_server(handler_cls, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind and serve on a background thread; loopback only by default."""
    try:
        server = ThreadingHTTPServer((host, port), handler_cls)
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name="toolbus-mock-http", daemon=True)
    thread.start()
    return server
