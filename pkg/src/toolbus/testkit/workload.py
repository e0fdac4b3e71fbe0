"""Synthetic workload tools for concurrency tests and benchmarks."""

from __future__ import annotations

import functools
import os
import time
from typing import Any

from ..core import ParameterSchema, Tool, make_tool

__all__ = ["make_latency_tool", "make_worker_killer_tool"]

_ECHO_SCHEMA = {"type": "object", "properties": {}, "required": [], "additionalProperties": True}


def _sleep_echo(delay: float, **arguments: Any) -> dict[str, Any]:
    time.sleep(delay)
    return arguments


def make_latency_tool(delay: float, name: str = "latency") -> Tool:
    """A fixed-latency I/O-style tool: sleeps ``delay`` then echoes its input.

    Built on a partial of a module-level function, so it stays transferable
    to isolated workers.
    """
    if delay < 0:
        raise ValueError("delay must be >= 0")
    return make_tool(
        name,
        f"sleeps {delay:g}s then echoes its arguments",
        ParameterSchema.from_dict(_ECHO_SCHEMA),
        functools.partial(_sleep_echo, delay),
    )


def _exit_process(**arguments: Any) -> None:
    os._exit(23)  # bypass all cleanup: simulates a hard worker crash


def make_worker_killer_tool(name: str = "killer") -> Tool:
    """A tool whose handler terminates its host process abnormally."""
    return make_tool(
        name,
        "terminates the executing process without returning",
        ParameterSchema.from_dict(_ECHO_SCHEMA),
        _exit_process,
    )
