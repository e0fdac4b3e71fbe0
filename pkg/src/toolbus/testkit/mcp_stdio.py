"""Spawnable stdio flavor of the mock MCP server.

Run as ``python -m toolbus.testkit.mcp_stdio --tools add,subtract``; flags
mirror :class:`~toolbus.testkit.mcp_mock.McpMockConfig`.
"""

from __future__ import annotations

import argparse
import sys

from ..mcp import PROTOCOL_VERSION
from .mcp_mock import McpMockConfig, run_stdio_server


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="mock MCP server on stdio")
    parser.add_argument("--name", default="mock-mcp")
    parser.add_argument("--tools", default="add,subtract,multiply")
    parser.add_argument("--page-size", type=int, default=None)
    parser.add_argument("--error-tools", default="")
    parser.add_argument("--drop-after-initialize", action="store_true")
    parser.add_argument("--drop-first-requests", type=int, default=0)
    parser.add_argument("--protocol-version", default=PROTOCOL_VERSION)
    opts = parser.parse_args(argv)
    config = McpMockConfig(
        tools=tuple(t for t in opts.tools.split(",") if t),
        page_size=opts.page_size,
        error_tools=tuple(t for t in opts.error_tools.split(",") if t),
        drop_after_initialize=opts.drop_after_initialize,
        drop_first_requests=opts.drop_first_requests,
        server_name=opts.name,
        protocol_version=opts.protocol_version,
    )
    return run_stdio_server(config)


if __name__ == "__main__":
    sys.exit(main())
