"""Hermetic MCP calculator server over stdio, SSE, and streamable HTTP.

One protocol core backs all three transports, so tool behavior is identical
across them by construction.  The core also records JSON-RPC discipline
violations (reused request ids, notifications carrying ids) so tests can
assert the client side behaves.
"""

from __future__ import annotations

import json
import queue
import sys
import threading
import urllib.parse
from dataclasses import dataclass

from ..core import run_tool, tool_from_function
from ..hub import BaseCalculator
from ..mcp import PROTOCOL_VERSION, McpTransportConfig
from .common import QuietHandler, start_http_server

__all__ = ["McpMockConfig", "MockMcpServer", "start_mock_mcp", "run_stdio_server"]

_CLOSE = object()  # sentinel: terminate an SSE stream


class _Drop(Exception):
    """Raised by the core to make the transport sever the connection."""


@dataclass(frozen=True)
class McpMockConfig:
    tools: tuple[str, ...] = ("add", "subtract", "multiply")
    page_size: int | None = None  # None: single page
    error_tools: tuple[str, ...] = ()  # respond isError=true for these
    drop_after_initialize: bool = False
    #: sever the connection for the first N non-handshake requests, then
    #: behave (HTTP kinds only: a respawned stdio process resets the count)
    drop_first_requests: int = 0
    stream_responses: bool = False  # streamable HTTP replies as event streams
    server_name: str = "mock-mcp"
    server_version: str = "1.0.0"
    protocol_version: str = PROTOCOL_VERSION
    port: int = 0

    def to_args(self) -> list[str]:
        args = ["--name", self.server_name, "--tools", ",".join(self.tools)]
        if self.page_size is not None:
            args += ["--page-size", str(self.page_size)]
        if self.error_tools:
            args += ["--error-tools", ",".join(self.error_tools)]
        if self.drop_after_initialize:
            args.append("--drop-after-initialize")
        if self.drop_first_requests:
            args += ["--drop-first-requests", str(self.drop_first_requests)]
        if self.protocol_version != PROTOCOL_VERSION:
            args += ["--protocol-version", self.protocol_version]
        return args


class McpServerCore:
    """Transport-independent request handling plus protocol bookkeeping."""

    def __init__(self, config: McpMockConfig):
        self.config = config
        self.tools = {name: tool_from_function(getattr(BaseCalculator, name)) for name in config.tools}
        self.violations: list[str] = []
        self.list_pages_served = 0
        self.initialize_count = 0
        self._drops_remaining = config.drop_first_requests
        self._seen_ids: dict[str, set] = {}
        self._lock = threading.Lock()

    def handle(self, message: dict, session_key: str) -> dict | None:
        method = message.get("method")
        msg_id = message.get("id")
        if not method:
            self._violate(f"message without method: {message!r}")
            return None
        if method.startswith("notifications/"):
            if msg_id is not None:
                self._violate(f"notification {method} carries id {msg_id!r}")
            return None
        if msg_id is None:
            self._violate(f"request {method} carries no id")
            return None
        with self._lock:
            seen = self._seen_ids.setdefault(session_key, set())
            reused = msg_id in seen
            seen.add(msg_id)
        if reused:
            self._violate(f"request id {msg_id!r} reused on {session_key}")

        if method == "initialize":
            self.initialize_count += 1
            return self._result(msg_id, {
                "protocolVersion": self.config.protocol_version,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": self.config.server_name, "version": self.config.server_version},
            })
        if self.config.drop_after_initialize:
            raise _Drop()
        with self._lock:
            must_drop = self._drops_remaining > 0
            if must_drop:
                self._drops_remaining -= 1
        if must_drop:
            raise _Drop()
        if method == "tools/list":
            return self._result(msg_id, self._list_tools(message.get("params") or {}))
        if method == "tools/call":
            return self._result(msg_id, self._call_tool(message.get("params") or {}))
        return self._error(msg_id, -32601, f"method not found: {method}")

    def _list_tools(self, params: dict) -> dict:
        entries = [
            {
                "name": tool.name,
                "description": tool.description,
                "inputSchema": tool.parameters.root,
            }
            for tool in self.tools.values()
        ]
        start = int(params.get("cursor") or 0)
        size = self.config.page_size or len(entries) or 1
        page = entries[start:start + size]
        self.list_pages_served += 1
        result: dict = {"tools": page}
        if start + size < len(entries):
            result["nextCursor"] = str(start + size)
        return result

    def _call_tool(self, params: dict) -> dict:
        name = params.get("name", "")
        arguments = params.get("arguments") or {}
        if name in self.config.error_tools:
            return {
                "content": [{"type": "text", "text": f"simulated failure in {name}"}],
                "isError": True,
            }
        tool = self.tools.get(name)
        if tool is None:
            return {
                "content": [{"type": "text", "text": f"unknown tool {name!r}"}],
                "isError": True,
            }
        outcome = run_tool(tool, arguments)
        if outcome.status == "error":
            assert outcome.error is not None
            return {"content": [{"type": "text", "text": outcome.error.message}], "isError": True}
        return {"content": [{"type": "text", "text": json.dumps(outcome.value)}]}

    def _violate(self, note: str) -> None:
        with self._lock:
            self.violations.append(note)

    @staticmethod
    def _result(msg_id, result: dict) -> dict:
        return {"jsonrpc": "2.0", "id": msg_id, "result": result}

    @staticmethod
    def _error(msg_id, code: int, message: str) -> dict:
        return {"jsonrpc": "2.0", "id": msg_id, "error": {"code": code, "message": message}}


# ---------------------------------------------------------------------------
# HTTP transports (SSE + streamable)
# ---------------------------------------------------------------------------


class MockMcpServer:
    """Serves the same core over /sse (+/messages) and /mcp on one port.

    The stdio flavor is exposed as a spawn specification running this
    package's stdio entry point with an equivalent configuration.
    """

    def __init__(self, config: McpMockConfig | None = None):
        self.config = config or McpMockConfig()
        self.core = McpServerCore(self.config)
        self._server = None
        self._sessions: dict[str, queue.Queue] = {}
        self._session_counter = 0
        self._lock = threading.Lock()

    @property
    def url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def sse_url(self) -> str:
        return f"{self.url}/sse"

    @property
    def http_url(self) -> str:
        return f"{self.url}/mcp"

    @property
    def stdio_config(self) -> McpTransportConfig:
        return McpTransportConfig.stdio(
            sys.executable, ["-m", "toolbus.testkit.mcp_stdio", *self.config.to_args()]
        )

    def _new_session(self) -> tuple[str, queue.Queue]:
        with self._lock:
            self._session_counter += 1
            key = str(self._session_counter)
            q: queue.Queue = queue.Queue()
            self._sessions[key] = q
            return key, q

    def start(self) -> "MockMcpServer":
        mock = self

        class Handler(QuietHandler):
            def do_GET(self):
                if self.path.rstrip("/") != "/sse":
                    self.send_json(404, {"error": f"no route {self.path}"})
                    return
                key, events = mock._new_session()
                # a terminated stream must close the TCP connection, or the
                # client would block on keep-alive waiting for more events
                self.close_connection = True
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.end_headers()
                try:
                    self._emit("endpoint", f"/messages?session={key}")
                    while True:
                        item = events.get()
                        if item is _CLOSE:
                            return
                        self._emit("message", json.dumps(item))
                except (BrokenPipeError, ConnectionResetError, OSError):
                    pass
                finally:
                    with mock._lock:
                        mock._sessions.pop(key, None)

            def _emit(self, event: str, data: str) -> None:
                self.wfile.write(f"event: {event}\ndata: {data}\n\n".encode())
                self.wfile.flush()

            def do_POST(self):
                path, _, query = self.path.partition("?")
                if path == "/messages":
                    self._handle_sse_message(query)
                elif path.rstrip("/") == "/mcp":
                    self._handle_streamable()
                else:
                    self.send_json(404, {"error": f"no route {path}"})

            def _handle_sse_message(self, query: str) -> None:
                params = urllib.parse.parse_qs(query)
                key = (params.get("session") or [""])[0]
                with mock._lock:
                    events = mock._sessions.get(key)
                if events is None:
                    self.send_json(404, {"error": f"unknown session {key!r}"})
                    return
                message = self.read_json_body()
                try:
                    response = mock.core.handle(message, f"sse-{key}")
                except _Drop:
                    events.put(_CLOSE)
                    self.send_empty(202)
                    return
                self.send_empty(202)
                if response is not None:
                    events.put(response)

            def _handle_streamable(self) -> None:
                # per-client sessions: assigned on the first exchange, echoed
                # by the client on every later POST
                session_id = self.headers.get("Mcp-Session-Id")
                extra = {}
                if session_id is None:
                    with mock._lock:
                        mock._session_counter += 1
                        session_id = f"h{mock._session_counter}"
                    extra["Mcp-Session-Id"] = session_id
                message = self.read_json_body()
                try:
                    response = mock.core.handle(message, f"streamable-{session_id}")
                except _Drop:
                    # sever without a response so the client sees a dropped connection
                    self.close_connection = True
                    try:
                        self.connection.close()
                    except OSError:
                        pass
                    return
                if response is None:
                    self.send_empty(202, extra)
                elif mock.config.stream_responses:
                    body = f"event: message\ndata: {json.dumps(response)}\n\n".encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "text/event-stream")
                    self.send_header("Content-Length", str(len(body)))
                    for name, value in extra.items():
                        self.send_header(name, value)
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self.send_json(200, response, extra)

        self._server = start_http_server(Handler, port=self.config.port)
        return self

    def stop(self) -> None:
        if self._server is not None:
            with self._lock:
                for events in self._sessions.values():
                    events.put(_CLOSE)
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockMcpServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def start_mock_mcp(config: McpMockConfig | None = None, **kwargs) -> MockMcpServer:
    """Start the mock MCP server over HTTP; kwargs build the config."""
    if config is None:
        config = McpMockConfig(**kwargs)
    return MockMcpServer(config).start()


# ---------------------------------------------------------------------------
# stdio transport entry point
# ---------------------------------------------------------------------------


def run_stdio_server(config: McpMockConfig) -> int:
    """Speak newline-delimited JSON-RPC on stdin/stdout until EOF or drop."""
    core = McpServerCore(config)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            continue
        try:
            response = core.handle(message, "stdio")
        except _Drop:
            return 0
        if response is not None:
            sys.stdout.write(json.dumps(response) + "\n")
            sys.stdout.flush()
    return 0
