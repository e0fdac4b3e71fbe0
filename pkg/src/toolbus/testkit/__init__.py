"""Hermetic mock servers and workload generators.

These ship with the library (not test-only) so the benchmark command can run
anywhere; servers bind loopback only by default.
"""

from .common import BindError
from .mcp_mock import McpMockConfig, MockMcpServer, start_mock_mcp
from .openapi_mock import MockOpenApiConfig, MockOpenApiServer, calculator_spec, start_mock_openapi
from .workload import make_latency_tool, make_worker_killer_tool

__all__ = [
    "BindError",
    "McpMockConfig",
    "MockMcpServer",
    "start_mock_mcp",
    "MockOpenApiConfig",
    "MockOpenApiServer",
    "calculator_spec",
    "start_mock_openapi",
    "make_latency_tool",
    "make_worker_killer_tool",
]
