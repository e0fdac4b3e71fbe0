"""Hermetic OpenAPI calculator service for adapter and benchmark tests.

Serves its own document at /openapi.json; the arithmetic routes call the hub
calculator directly, so mock behavior equals local behavior exactly.  Latency
and fault injection are per-config; binding is loopback only.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Mapping

from ..core import run_tool, tool_from_function
from ..hub import BaseCalculator
from .common import QuietHandler, start_http_server

__all__ = ["MockOpenApiConfig", "MockOpenApiServer", "start_mock_openapi", "calculator_spec"]

_ROUTES = ("add", "subtract", "multiply", "divide")


def calculator_spec(title: str = "Calc Service", version: str = "1.0.0") -> dict:
    """The authored OpenAPI 3.1 document for the mock calculator."""
    paths = {}
    for name in _ROUTES:
        paths[f"/{name}"] = {
            "post": {
                "operationId": name,
                "summary": f"{name.capitalize()} two numbers",
                "requestBody": {
                    "required": True,
                    "content": {
                        "application/json": {
                            "schema": {
                                "type": "object",
                                "properties": {"a": {"type": "number"}, "b": {"type": "number"}},
                                "required": ["a", "b"],
                            }
                        }
                    },
                },
                "responses": {
                    "200": {
                        "description": "arithmetic result",
                        "content": {
                            "application/json": {
                                "schema": {
                                    "type": "object",
                                    "properties": {"result": {"type": "number"}},
                                }
                            }
                        },
                    },
                    "400": {"description": "invalid operands"},
                },
            }
        }
    return {"openapi": "3.1.0", "info": {"title": title, "version": version}, "paths": paths}


@dataclass(frozen=True)
class MockOpenApiConfig:
    port: int = 0
    latency: float = 0.0  # fixed seconds added to every arithmetic response
    jitter: float = 0.0  # plus uniform(0, jitter)
    fault_status: Mapping[str, int] = field(default_factory=dict)  # route -> forced status
    bearer_token: str | None = None
    title: str = "Calc Service"


class MockOpenApiServer:
    def __init__(self, config: MockOpenApiConfig | None = None):
        self.config = config or MockOpenApiConfig()
        self.spec = calculator_spec(title=self.config.title)
        self.spec_bytes = json.dumps(self.spec).encode()
        self.request_count = 0
        self._tools = {name: tool_from_function(getattr(BaseCalculator, name)) for name in _ROUTES}
        self._server = None

    @property
    def url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockOpenApiServer":
        mock = self

        class Handler(QuietHandler):
            def do_GET(self):
                if self.path == "/openapi.json":
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(mock.spec_bytes)))
                    self.end_headers()
                    self.wfile.write(mock.spec_bytes)
                else:
                    self.send_json(404, {"error": f"no route {self.path}"})

            def do_POST(self):
                mock.request_count += 1
                route = self.path.split("?", 1)[0]
                name = route.lstrip("/")
                if name not in mock._tools:
                    self.send_json(404, {"error": f"no route {route}"})
                    return
                cfg = mock.config
                if cfg.latency or cfg.jitter:
                    time.sleep(cfg.latency + random.uniform(0, cfg.jitter))
                if cfg.bearer_token is not None:
                    expected = f"Bearer {cfg.bearer_token}"
                    if self.headers.get("Authorization") != expected:
                        self.send_json(401, {"error": "missing or invalid bearer token"})
                        return
                forced = cfg.fault_status.get(route)
                if forced is not None:
                    self.send_json(forced, {"error": "injected fault"})
                    return
                try:
                    body = self.read_json_body()
                except json.JSONDecodeError:
                    self.send_json(400, {"error": "request body is not valid JSON"})
                    return
                result = run_tool(mock._tools[name], body or {})
                if result.status == "success":
                    self.send_json(200, {"result": result.value})
                else:
                    assert result.error is not None
                    self.send_json(400, {"error": result.error.message})

        self._server = start_http_server(Handler, port=self.config.port)
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockOpenApiServer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def start_mock_openapi(config: MockOpenApiConfig | None = None, **kwargs) -> MockOpenApiServer:
    """Start a mock calculator service; keyword arguments build the config."""
    if config is None:
        config = MockOpenApiConfig(**kwargs)
    return MockOpenApiServer(config).start()
