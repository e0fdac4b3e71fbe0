"""MCP client: JSON-RPC 2.0 over stdio, SSE, and streamable HTTP.

One session multiplexes all tools wrapped from a server.  Writes to the
transport are serialized, many requests may be in flight, and responses are
correlated by strictly increasing integer ids.  On a dropped connection the
session reconnects once per call; after that, transport errors surface.

Framing per transport: stdio exchanges newline-delimited JSON with a spawned
process; sse holds an HTTP GET event stream for server-to-client messages and
POSTs client-to-server messages to the endpoint announced on that stream;
streamable HTTP POSTs each message and reads the response as plain JSON or a
chunked event stream.
"""

from __future__ import annotations

import itertools
import json
import os
import subprocess
import threading
import urllib.parse
from concurrent import futures
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping

import httpx

from .core import ParameterSchema, Tool, ToolError, ToolTransportError, make_tool
from .registry import ToolRegistry, normalize_namespace

__all__ = [
    "PROTOCOL_VERSION",
    "McpError",
    "ConnectError",
    "HandshakeError",
    "RpcError",
    "TransportClosed",
    "McpTimeout",
    "McpTransportConfig",
    "McpToolDescriptor",
    "McpSession",
    "connect",
    "list_tools",
    "mcp_tool_from_descriptor",
    "register_from_mcp",
]

#: Pinned protocol revision; equal-or-older servers are accepted.
PROTOCOL_VERSION = "2025-03-26"
CLIENT_INFO = {"name": "toolbus", "version": "0.1.0"}
REQUEST_TIMEOUT = 30.0


class McpError(ToolError):
    pass


class ConnectError(McpError):
    pass


class HandshakeError(McpError):
    pass


class RpcError(McpError):
    def __init__(self, code: int, message: str):
        super().__init__(f"JSON-RPC error {code}: {message}")
        self.code = code


class TransportClosed(McpError):
    pass


class McpTimeout(McpError):
    pass


@dataclass(frozen=True)
class McpTransportConfig:
    """Connection descriptor; exactly the selected kind's fields are set."""

    kind: str  # stdio | sse | streamable_http
    command: str | None = None
    args: tuple[str, ...] = ()
    env: Mapping[str, str] = field(default_factory=dict)
    url: str | None = None
    headers: Mapping[str, str] = field(default_factory=dict)
    connect_timeout: float = 10.0

    def __post_init__(self):
        if self.kind == "stdio":
            if not self.command:
                raise ValueError("stdio transport requires a command")
            if self.url is not None:
                raise ValueError("stdio transport takes no url")
        elif self.kind in ("sse", "streamable_http"):
            if not self.url:
                raise ValueError(f"{self.kind} transport requires a url")
            if self.command is not None or self.args or dict(self.env):
                raise ValueError(f"{self.kind} transport takes no command/args/env")
        else:
            raise ValueError(f"unknown transport kind {self.kind!r}")
        if self.connect_timeout <= 0:
            raise ValueError("connect_timeout must be > 0")

    @classmethod
    def stdio(cls, command: str, args: Iterable[str] = (), env: Mapping[str, str] | None = None,
              connect_timeout: float = 10.0) -> "McpTransportConfig":
        return cls(kind="stdio", command=command, args=tuple(args), env=dict(env or {}),
                   connect_timeout=connect_timeout)

    @classmethod
    def sse(cls, url: str, headers: Mapping[str, str] | None = None,
            connect_timeout: float = 10.0) -> "McpTransportConfig":
        return cls(kind="sse", url=url, headers=dict(headers or {}), connect_timeout=connect_timeout)

    @classmethod
    def streamable_http(cls, url: str, headers: Mapping[str, str] | None = None,
                        connect_timeout: float = 10.0) -> "McpTransportConfig":
        return cls(kind="streamable_http", url=url, headers=dict(headers or {}),
                   connect_timeout=connect_timeout)

    @classmethod
    def for_url(cls, url: str, headers: Mapping[str, str] | None = None,
                connect_timeout: float = 10.0) -> "McpTransportConfig":
        """A URL ending in /sse selects the SSE kind, else streamable HTTP."""
        kind = "sse" if url.rstrip("/").endswith("/sse") or url.endswith("/sse") else "streamable_http"
        if kind == "sse":
            return cls.sse(url, headers, connect_timeout)
        return cls.streamable_http(url, headers, connect_timeout)


@dataclass(frozen=True)
class McpToolDescriptor:
    name: str
    description: str
    input_schema: dict[str, Any]


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


def _iter_sse_events(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    event: str | None = None
    data: list[str] = []
    for line in lines:
        if line == "":
            if event is not None or data:
                yield (event or "message", "\n".join(data))
            event, data = None, []
        elif line.startswith("event:"):
            event = line[len("event:"):].strip()
        elif line.startswith("data:"):
            data.append(line[len("data:"):].lstrip())
        # id:/retry: fields and ":" comments are irrelevant here


class _StdioTransport:
    def __init__(self, config: McpTransportConfig):
        self._config = config
        self._proc: subprocess.Popen | None = None
        self._write_lock = threading.Lock()
        self.closed = threading.Event()

    def start(self, on_message: Callable[[dict], None], on_close: Callable[[], None]) -> None:
        cfg = self._config
        try:
            self._proc = subprocess.Popen(
                [cfg.command, *cfg.args],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                env={**os.environ, **cfg.env},
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ConnectError(f"cannot spawn {cfg.command!r}: {exc}") from exc

        def read_loop():
            assert self._proc is not None and self._proc.stdout is not None
            try:
                for line in self._proc.stdout:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        on_message(json.loads(line))
                    except json.JSONDecodeError:
                        continue
            except (OSError, ValueError):
                pass
            finally:
                self.closed.set()
                on_close()

        threading.Thread(target=read_loop, name="toolbus-mcp-stdio-reader", daemon=True).start()

    def send(self, message: dict) -> None:
        if self.closed.is_set() or self._proc is None or self._proc.stdin is None:
            raise TransportClosed("stdio transport is closed")
        try:
            with self._write_lock:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            self.closed.set()
            raise TransportClosed(f"stdio write failed: {exc}") from exc

    def close(self) -> None:
        self.closed.set()
        if self._proc is not None:
            try:
                self._proc.terminate()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()


class _SseTransport:
    def __init__(self, config: McpTransportConfig):
        self._config = config
        self._client = httpx.Client(
            headers=dict(config.headers),
            timeout=httpx.Timeout(10.0, connect=config.connect_timeout, read=None),
        )
        self._endpoint: str | None = None
        self._ready = threading.Event()
        self._response: httpx.Response | None = None
        self.closed = threading.Event()
        self._error: Exception | None = None

    def start(self, on_message: Callable[[dict], None], on_close: Callable[[], None]) -> None:
        def read_loop():
            try:
                with self._client.stream(
                    "GET", self._config.url, headers={"Accept": "text/event-stream"}
                ) as response:
                    self._response = response
                    if response.status_code != 200:
                        raise ConnectError(f"SSE endpoint returned HTTP {response.status_code}")
                    for event, data in _iter_sse_events(response.iter_lines()):
                        if event == "endpoint":
                            self._endpoint = urllib.parse.urljoin(str(self._config.url), data)
                            self._ready.set()
                        elif event == "message":
                            try:
                                on_message(json.loads(data))
                            except json.JSONDecodeError:
                                continue
            except Exception as exc:  # noqa: BLE001 - reader must record any failure
                self._error = exc
            finally:
                self.closed.set()
                self._ready.set()
                on_close()

        threading.Thread(target=read_loop, name="toolbus-mcp-sse-reader", daemon=True).start()
        if not self._ready.wait(self._config.connect_timeout):
            self.close()
            raise ConnectError(f"no endpoint event from {self._config.url} "
                               f"within {self._config.connect_timeout:g}s")
        if self.closed.is_set() or self._endpoint is None:
            raise ConnectError(f"SSE stream failed: {self._error}")

    def send(self, message: dict) -> None:
        if self.closed.is_set() or self._endpoint is None:
            raise TransportClosed("SSE transport is closed")
        try:
            response = self._client.post(self._endpoint, json=message, timeout=10.0)
        except httpx.HTTPError as exc:
            raise TransportClosed(f"SSE post failed: {exc}") from exc
        if response.status_code >= 300:
            raise TransportClosed(f"SSE post rejected: HTTP {response.status_code}")

    def close(self) -> None:
        self.closed.set()
        response = self._response
        if response is not None:
            try:
                response.close()
            except Exception:
                pass
        try:
            self._client.close()
        except Exception:
            pass


class _StreamableHttpTransport:
    """One POST per message; responses arrive inline as JSON or an event stream."""

    def __init__(self, config: McpTransportConfig):
        self._config = config
        self._client = httpx.Client(
            headers=dict(config.headers),
            timeout=httpx.Timeout(REQUEST_TIMEOUT, connect=config.connect_timeout),
        )
        self._on_message: Callable[[dict], None] | None = None
        self._session_id: str | None = None  # assigned by the server's first response
        self.closed = threading.Event()

    def start(self, on_message: Callable[[dict], None], on_close: Callable[[], None]) -> None:
        self._on_message = on_message
        self._on_close = on_close

    def send(self, message: dict) -> None:
        if self.closed.is_set():
            raise TransportClosed("streamable HTTP transport is closed")
        headers = {"Accept": "application/json, text/event-stream"}
        if self._session_id is not None:
            headers["Mcp-Session-Id"] = self._session_id
        try:
            response = self._client.post(self._config.url, json=message, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportClosed(f"POST {self._config.url} failed: {exc}") from exc
        if response.status_code >= 300:
            raise TransportClosed(f"POST {self._config.url} rejected: HTTP {response.status_code}")
        assigned = response.headers.get("mcp-session-id")
        if assigned:
            self._session_id = assigned
        assert self._on_message is not None
        content_type = response.headers.get("content-type", "")
        if "text/event-stream" in content_type:
            for event, data in _iter_sse_events(response.text.splitlines()):
                if event == "message":
                    try:
                        self._on_message(json.loads(data))
                    except json.JSONDecodeError:
                        continue
        elif response.content.strip():
            try:
                self._on_message(response.json())
            except json.JSONDecodeError:
                pass

    def close(self) -> None:
        self.closed.set()
        try:
            self._client.close()
        except Exception:
            pass


def _make_transport(config: McpTransportConfig):
    if config.kind == "stdio":
        return _StdioTransport(config)
    if config.kind == "sse":
        return _SseTransport(config)
    return _StreamableHttpTransport(config)


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


class McpSession:
    """An initialized connection to one MCP server."""

    def __init__(self, config: McpTransportConfig):
        self.config = config
        self.server_info: dict[str, Any] = {}
        self.protocol_version: str | None = None
        self._transport = None
        self._ids = itertools.count(1)
        self._pending: dict[int, futures.Future] = {}
        self._pending_lock = threading.Lock()
        self._reconnect_lock = threading.Lock()
        self._closed = False

    # transport callbacks ---------------------------------------------------

    def _on_message(self, message: dict) -> None:
        msg_id = message.get("id")
        if msg_id is None:
            return  # server-side notifications are out of scope
        with self._pending_lock:
            waiter = self._pending.pop(msg_id, None)
        if waiter is not None and not waiter.done():
            waiter.set_result(message)

    def _on_transport_closed(self) -> None:
        with self._pending_lock:
            waiters = list(self._pending.values())
            self._pending.clear()
        for waiter in waiters:
            if not waiter.done():
                waiter.set_exception(TransportClosed("connection dropped"))

    # plumbing ---------------------------------------------------------------

    def _open_transport(self) -> None:
        transport = _make_transport(self.config)
        transport.start(self._on_message, self._on_transport_closed)
        self._transport = transport

    def _handshake(self, timeout: float) -> None:
        try:
            result = self.request(
                "initialize",
                {
                    "protocolVersion": PROTOCOL_VERSION,
                    "capabilities": {},
                    "clientInfo": dict(CLIENT_INFO),
                },
                timeout=timeout,
                _no_reconnect=True,
            )
        except RpcError as exc:
            raise HandshakeError(f"initialize rejected: {exc}") from exc
        except TransportClosed as exc:
            # could not complete the exchange at all: a dial-level failure
            raise ConnectError(f"connection failed during initialize: {exc}") from exc
        if not isinstance(result, dict) or "protocolVersion" not in result:
            raise HandshakeError(f"malformed initialize response: {result!r}")
        version = result["protocolVersion"]
        if not isinstance(version, str) or version > PROTOCOL_VERSION:
            raise HandshakeError(
                f"server protocol {version!r} is newer than supported {PROTOCOL_VERSION}"
            )
        self.protocol_version = version
        info = result.get("serverInfo")
        self.server_info = info if isinstance(info, dict) else {}
        self.notify("notifications/initialized")

    def _reconnect(self) -> None:
        with self._reconnect_lock:
            if self._closed:
                raise TransportClosed("session is closed")
            if self._transport is not None:
                self._transport.close()
            try:
                self._open_transport()
                self._handshake(self.config.connect_timeout)
            except McpError as exc:
                raise TransportClosed(f"reconnect failed: {exc}") from exc

    def request(
        self,
        method: str,
        params: dict[str, Any] | None = None,
        timeout: float = REQUEST_TIMEOUT,
        _no_reconnect: bool = False,
    ) -> Any:
        """Send one request and block for its correlated response.

        Retries once over a fresh connection when the transport drops, then
        lets the failure surface.
        """
        if self._transport is None:
            raise TransportClosed("session not connected")
        for attempt in (0, 1):
            request_id = next(self._ids)
            waiter: futures.Future = futures.Future()
            with self._pending_lock:
                self._pending[request_id] = waiter
            message = {"jsonrpc": "2.0", "id": request_id, "method": method}
            if params is not None:
                message["params"] = params
            try:
                self._transport.send(message)
                response = waiter.result(timeout=timeout)
            except TransportClosed:
                with self._pending_lock:
                    self._pending.pop(request_id, None)
                if _no_reconnect or attempt == 1 or self._closed:
                    raise
                self._reconnect()
                continue
            except futures.TimeoutError as exc:
                with self._pending_lock:
                    self._pending.pop(request_id, None)
                raise McpTimeout(f"{method} timed out after {timeout:g}s") from exc
            if "error" in response:
                err = response["error"] or {}
                raise RpcError(int(err.get("code", -32000)), str(err.get("message", "unknown error")))
            return response.get("result")

    def notify(self, method: str, params: dict[str, Any] | None = None) -> None:
        if self._transport is None:
            raise TransportClosed("session not connected")
        message: dict[str, Any] = {"jsonrpc": "2.0", "method": method}
        if params is not None:
            message["params"] = params
        self._transport.send(message)

    def close(self) -> None:
        self._closed = True
        if self._transport is not None:
            self._transport.close()
        self._on_transport_closed()

    def __enter__(self) -> "McpSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect(config: McpTransportConfig | str) -> McpSession:
    """Establish the transport and run the initialize handshake."""
    if isinstance(config, str):
        config = McpTransportConfig.for_url(config)
    session = McpSession(config)
    session._open_transport()
    try:
        session._handshake(config.connect_timeout)
    except Exception:
        session.close()
        raise
    return session


# ---------------------------------------------------------------------------
# Tool discovery and wrapping
# ---------------------------------------------------------------------------


def list_tools(session: McpSession) -> list[McpToolDescriptor]:
    """Fetch all tool descriptors, following nextCursor pagination."""
    descriptors: list[McpToolDescriptor] = []
    cursor: str | None = None
    while True:
        params = {"cursor": cursor} if cursor else None
        result = session.request("tools/list", params)
        if not isinstance(result, dict):
            raise RpcError(-32000, f"malformed tools/list result: {result!r}")
        for entry in result.get("tools", []):
            name = entry.get("name", "")
            if not name:
                continue
            descriptors.append(
                McpToolDescriptor(
                    name=name,
                    description=entry.get("description", ""),
                    input_schema=entry.get("inputSchema") or {},
                )
            )
        cursor = result.get("nextCursor")
        if not cursor:
            return descriptors


def _resolve_local_refs(node: Any, defs_root: dict[str, Any], stack: tuple[str, ...], depth: int = 3) -> Any:
    if isinstance(node, list):
        return [_resolve_local_refs(item, defs_root, stack, depth) for item in node]
    if not isinstance(node, dict):
        return node
    if "$ref" in node:
        ref = str(node["$ref"])
        target: Any = defs_root
        for raw in ref.lstrip("#/").split("/"):
            key = raw.replace("~1", "/").replace("~0", "~")
            if isinstance(target, dict) and key in target:
                target = target[key]
            else:
                return {"type": "object"}  # unknown ref: degrade to an open object
        if stack.count(ref) >= depth:
            return {"type": "object"}
        return _resolve_local_refs(target, defs_root, stack + (ref,), depth)
    return {k: _resolve_local_refs(v, defs_root, stack, depth) for k, v in node.items()}


def _normalize_input_schema(schema: Mapping[str, Any]) -> ParameterSchema:
    doc = _resolve_local_refs(dict(schema), dict(schema), ())
    if "type" not in doc and "properties" in doc:
        doc["type"] = "object"
    doc.setdefault("type", "object")
    properties = doc.get("properties") or {}
    if not isinstance(properties, dict):
        properties = {}
    doc["properties"] = properties
    required = [name for name in doc.get("required", []) if name in properties]
    doc["required"] = required
    for key in ("$defs", "definitions", "$schema"):
        doc.pop(key, None)
    return ParameterSchema.from_dict(doc)


def _content_value(item: Mapping[str, Any]) -> Any:
    if item.get("type") == "text":
        text = item.get("text", "")
        try:
            return json.loads(text)
        except (json.JSONDecodeError, TypeError):
            return text
    return dict(item)


def mcp_tool_from_descriptor(desc: McpToolDescriptor, session: McpSession) -> Tool:
    """Wrap a remote tool; the handler performs tools/call on the session.

    Sessions cannot cross the isolated-worker boundary, so wrapped tools are
    marked non-transferable.
    """
    parameters = _normalize_input_schema(desc.input_schema)

    def handler(**arguments: Any) -> Any:
        try:
            result = session.request("tools/call", {"name": desc.name, "arguments": arguments})
        except (TransportClosed, ConnectError, McpTimeout) as exc:
            raise ToolTransportError(str(exc)) from exc
        if not isinstance(result, dict):
            raise RuntimeError(f"malformed tools/call result: {result!r}")
        content = result.get("content") or []
        if result.get("isError"):
            text = " ".join(
                str(item.get("text", "")) for item in content if isinstance(item, Mapping)
            ).strip()
            raise RuntimeError(text or f"tool {desc.name!r} reported an error")
        values = [_content_value(item) for item in content if isinstance(item, Mapping)]
        if not values:
            return None
        if len(values) == 1:
            return values[0]
        return values

    return make_tool(desc.name, desc.description, parameters, handler, transferable=False)


def register_from_mcp(
    registry: ToolRegistry,
    config: McpTransportConfig | str,
    with_namespace: bool | str = False,
) -> int:
    """Connect, discover, wrap, and register; the session lives with the registry."""
    session = connect(config)
    try:
        tools = [mcp_tool_from_descriptor(d, session) for d in list_tools(session)]
        namespace: bool | str = with_namespace
        if with_namespace is True:
            namespace = normalize_namespace(str(session.server_info.get("name", "")))
        count = registry.register_toolset(tools, with_namespace=namespace)
    except Exception:
        session.close()
        raise
    registry.attach_session(session)
    return count
