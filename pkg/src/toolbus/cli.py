"""Command-line front end: list, describe, and call tools from any source,
plus a desk-scale concurrency benchmark against the in-repo mock servers.

Exit codes: 0 success, 2 source or setup failure, 3 the tool call itself
failed.
"""

from __future__ import annotations

import argparse
import json
import re
import statistics
import sys
import time
from dataclasses import dataclass

from .compat import ApiFormat
from .core import ToolCall, ToolError
from .executor import ExecutionMode, ExecutorConfig
from .hub import calculator_tools
from .registry import ToolRegistry

EXIT_OK = 0
EXIT_SOURCE = 2
EXIT_TOOL = 3

_FORMATS = {"chat": ApiFormat.OPENAI_CHAT_COMPLETION, "response": ApiFormat.OPENAI_RESPONSE}
_NAMESPACE_TAIL = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*$")


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # hub | openapi | mcp
    locator: str
    namespace: str | None = None


def parse_source(raw: str) -> SourceSpec:
    """Parse ``kind:locator[:namespace]``.

    The trailing segment counts as a namespace only when it looks like an
    identifier starting with a letter, so URL ports and paths never match.
    """
    kind, sep, rest = raw.partition(":")
    if not sep or kind not in ("hub", "openapi", "mcp"):
        raise ValueError(f"source must be hub:|openapi:|mcp: prefixed, got {raw!r}")
    locator, namespace = rest, None
    head, sep2, tail = rest.rpartition(":")
    if sep2 and head and "/" not in tail and _NAMESPACE_TAIL.fullmatch(tail):
        locator, namespace = head, tail
    if not locator:
        raise ValueError(f"source {raw!r} has an empty locator")
    return SourceSpec(kind=kind, locator=locator, namespace=namespace)


def build_registry(sources: list[SourceSpec]) -> tuple[ToolRegistry, dict[str, str]]:
    """Load every source into one registry; returns (registry, name -> kind)."""
    registry = ToolRegistry()
    origins: dict[str, str] = {}
    for source in sources:
        before = set(registry.names())
        namespace: bool | str = source.namespace or False
        if source.kind == "hub":
            if source.locator != "calculator":
                raise ToolError(f"unknown hub toolset {source.locator!r}")
            registry.register_toolset(calculator_tools(), with_namespace=namespace)
        elif source.kind == "openapi":
            from .openapi import HttpClientConfig, register_from_openapi

            client = HttpClientConfig(base_url=source.locator)
            register_from_openapi(registry, client, with_namespace=namespace)
        else:
            from .mcp import register_from_mcp

            register_from_mcp(registry, source.locator, with_namespace=namespace)
        for name in set(registry.names()) - before:
            origins[name] = source.kind
    return registry, origins


def _sources(args) -> list[SourceSpec]:
    return [parse_source(raw) for raw in args.source or []]


def cmd_list(args) -> int:
    registry, origins = build_registry(_sources(args))
    try:
        rows = [(name, origins.get(name, "?"), registry.get_tool(name).description) for name in registry.names()]
        width = max((len(name) for name, _, _ in rows), default=4)
        for name, kind, description in rows:
            print(f"{name:<{width}}  {kind:<7}  {description}")
        return EXIT_OK
    finally:
        registry.close()


def cmd_describe(args) -> int:
    registry, _ = build_registry(_sources(args))
    try:
        api_format = _FORMATS[args.format]
        if args.tool:
            tool = registry.get_tool(args.tool)
            if tool is None:
                print(f"no tool named {args.tool!r}", file=sys.stderr)
                return EXIT_SOURCE
            definitions = [d for d in registry.get_tools_json(api_format)
                           if d.get("name") == args.tool or d.get("function", {}).get("name") == args.tool]
        else:
            definitions = registry.get_tools_json(api_format)
        print(json.dumps(definitions, indent=2))
        return EXIT_OK
    finally:
        registry.close()


def _executor_config(args) -> ExecutorConfig:
    kwargs = {"mode": ExecutionMode(args.mode)}
    if getattr(args, "pool", None):
        kwargs["pool_size"] = args.pool
    if getattr(args, "timeout", None):
        kwargs["per_call_timeout"] = args.timeout
    return ExecutorConfig(**kwargs)


def cmd_call(args) -> int:
    try:
        arguments = json.loads(args.args)
    except json.JSONDecodeError as exc:
        print(f"--args is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_SOURCE
    if not isinstance(arguments, dict):
        print("--args must encode a JSON object", file=sys.stderr)
        return EXIT_SOURCE
    registry, _ = build_registry(_sources(args))
    try:
        call = ToolCall(id="cli-1", name=args.tool, arguments=arguments)
        result = registry.execute_tool_calls([call], config=_executor_config(args))["cli-1"]
        print(json.dumps(result.to_dict(), indent=2))
        return EXIT_OK if result.is_success else EXIT_TOOL
    finally:
        registry.close()


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


def _bench_target(tool_kind: str, latency: float = 0.0):
    """Returns (registry, tool name, cleanup)."""
    registry = ToolRegistry()
    cleanup = registry.close
    if tool_kind == "native":
        if latency > 0:
            from .testkit import make_latency_tool

            registry.register(make_latency_tool(latency, name="add"))
        else:
            registry.register_toolset(calculator_tools())
    elif tool_kind == "openapi":
        from .openapi import HttpClientConfig, register_from_openapi
        from .testkit import start_mock_openapi

        server = start_mock_openapi(latency=latency)
        register_from_openapi(registry, HttpClientConfig(base_url=server.url))

        def cleanup():
            registry.close()
            server.stop()

    elif tool_kind == "mcp":
        if latency > 0:
            raise ToolError("--latency supports the native and openapi tool kinds")
        from .mcp import register_from_mcp
        from .testkit import start_mock_mcp

        server = start_mock_mcp()
        register_from_mcp(registry, server.sse_url)

        def cleanup():
            registry.close()
            server.stop()

    else:
        raise ToolError(f"unknown tool kind {tool_kind!r}")
    return registry, "add", cleanup


def run_bench(
    tool_kind: str, calls: int, iterations: int, config: ExecutorConfig, latency: float = 0.0
) -> dict:
    registry, target, cleanup = _bench_target(tool_kind, latency=latency)
    try:
        wall_ms: list[float] = []
        successes = 0
        for iteration in range(iterations):
            batch = [
                ToolCall(id=f"c{iteration}-{i}", name=target, arguments={"a": i, "b": 1})
                for i in range(calls)
            ]
            started = time.perf_counter()
            results = registry.execute_tool_calls(batch, config=config)
            wall_ms.append((time.perf_counter() - started) * 1000.0)
            successes += sum(r.is_success for r in results.values())
        rates = [calls / (ms / 1000.0) for ms in wall_ms]
        return {
            "tool_kind": tool_kind,
            "mode": config.mode.value,
            "pool": config.pool_size,
            "calls": calls,
            "iterations": iterations,
            "wall_ms": [round(ms, 3) for ms in wall_ms],
            "calls_per_s": {
                "min": round(min(rates), 3),
                "median": round(statistics.median(rates), 3),
                "max": round(max(rates), 3),
            },
            "success_rate": successes / (calls * iterations),
        }
    finally:
        cleanup()


def cmd_bench(args) -> int:
    config = _executor_config(args)
    report = run_bench(args.tool_kind, args.calls, args.iterations, config, latency=args.latency)
    wall = report["wall_ms"]
    print(f"{'kind':<8} {'mode':<9} {'pool':>4} {'calls':>6} {'iters':>6} "
          f"{'wall ms min/med/max':>24} {'calls/s med':>12} {'success':>8}")
    print(
        f"{report['tool_kind']:<8} {report['mode']:<9} {report['pool']:>4} "
        f"{report['calls']:>6} {report['iterations']:>6} "
        f"{min(wall):>8.1f}/{statistics.median(wall):.1f}/{max(wall):.1f}"
        f"{report['calls_per_s']['median']:>14.1f} {report['success_rate']:>7.1%}"
    )
    with open(args.report, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"report written to {args.report}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _add_source_arg(parser) -> None:
    parser.add_argument(
        "--source",
        action="append",
        metavar="KIND:LOCATOR[:NS]",
        help="tool source (hub:calculator, openapi:URL, mcp:URL); repeatable",
    )


def _add_exec_args(parser) -> None:
    parser.add_argument("--mode", choices=["shared", "isolated"], default="shared")
    parser.add_argument("--pool", type=int, default=None, help="worker pool size")
    parser.add_argument("--timeout", type=float, default=None, help="per-call timeout seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toolbus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_list = sub.add_parser("list", help="list tools from the given sources")
    _add_source_arg(p_list)
    p_list.set_defaults(func=cmd_list)

    p_desc = sub.add_parser("describe", help="print provider-format tool definitions")
    _add_source_arg(p_desc)
    p_desc.add_argument("tool", nargs="?", help="limit output to one tool")
    p_desc.add_argument("--format", choices=sorted(_FORMATS), default="chat")
    p_desc.set_defaults(func=cmd_describe)

    p_call = sub.add_parser("call", help="invoke one tool")
    _add_source_arg(p_call)
    p_call.add_argument("tool")
    p_call.add_argument("--args", default="{}", help="JSON object of arguments")
    _add_exec_args(p_call)
    p_call.set_defaults(func=cmd_call)

    p_bench = sub.add_parser("bench", help="concurrent throughput benchmark against mocks")
    p_bench.add_argument("tool_kind", choices=["native", "openapi", "mcp"])
    p_bench.add_argument("--calls", type=int, default=100)
    p_bench.add_argument("--iterations", type=int, default=10)
    p_bench.add_argument("--latency", type=float, default=0.0,
                         help="inject per-call latency seconds (native/openapi kinds)")
    p_bench.add_argument("--report", default="toolbus_bench.json", help="JSON report path")
    _add_exec_args(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ToolError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOURCE


if __name__ == "__main__":
    sys.exit(main())
