"""Central tool store with namespace algebra and batch entry points.

Names live in a flat map with O(1) lookup; dot-separated prefixes provide
optional hierarchy.  ``merge``/``spinoff``/``reduce_namespace`` are the
set-algebra operations over that hierarchy.  Reads are safe under concurrent
access with no writers; mutations require caller-side serialization.
"""

from __future__ import annotations

import re
from typing import Any, Callable, Iterable, Iterator, Mapping

from .compat import ApiFormat, format_tool_definition
from .core import InvalidName, Tool, ToolCall, ToolCallResult, ToolError, tool_from_function, update_namespace
from .executor import ExecutionMode, Executor, ExecutorConfig

__all__ = [
    "DuplicateName",
    "UnknownPrefix",
    "CollisionAfterReduce",
    "ToolRegistry",
]


class DuplicateName(ToolError):
    pass


class UnknownPrefix(ToolError):
    pass


class CollisionAfterReduce(ToolError):
    pass


def _snake_case(name: str) -> str:
    return re.sub(r"([a-z0-9])([A-Z])", r"\1_\2", name).lower()


def normalize_namespace(raw: str) -> str:
    """Derive a namespace identifier from a free-form title or server name."""
    cleaned = re.sub(r"[^A-Za-z0-9_]+", "_", _snake_case(raw)).strip("_")
    if not cleaned:
        raise InvalidName(f"cannot derive a namespace from {raw!r}")
    return cleaned


class ToolRegistry:
    def __init__(self, name: str | None = None, wire_separator: str = "."):
        self.name = name
        #: separator substituted for "." in emitted tool definitions, for
        #: providers that forbid dots; mapped back on dispatch.
        self.wire_separator = wire_separator
        self._tools: dict[str, Tool] = {}
        self._sub_registries: set[str] = set()
        self._sessions: list[Any] = []
        self._executor: Executor | None = None

    # -- introspection ------------------------------------------------------

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __iter__(self) -> Iterator[Tool]:
        return iter(self._tools.values())

    def names(self) -> list[str]:
        return sorted(self._tools)

    @property
    def sub_registries(self) -> set[str]:
        return set(self._sub_registries)

    def get_tool(self, name: str) -> Tool | None:
        return self._tools.get(name)

    # -- registration -------------------------------------------------------

    def register(self, tool: Tool | Callable[..., Any], namespace: str | None = None) -> None:
        """Insert one tool, optionally under a namespace prefix.

        Plain callables are wrapped via signature introspection.  A name that
        is already present raises :class:`DuplicateName`; conflict-resolving
        insertion is merge's job, not register's.
        """
        if not isinstance(tool, Tool):
            tool = tool_from_function(tool)
        if namespace is not None:
            tool = update_namespace(tool, namespace)
            self._sub_registries.add(namespace)
        if tool.name in self._tools:
            raise DuplicateName(f"tool {tool.name!r} already registered")
        self._tools[tool.name] = tool

    def register_toolset(self, toolset: Any, with_namespace: bool | str = False) -> int:
        """Register every tool a toolset enumerates; all-or-nothing.

        A toolset is an iterable of tools, an object with a ``tools()``
        method, or a class/instance whose public methods are reflected into
        tools.  ``with_namespace=True`` derives the namespace from the
        toolset's own name (snake_cased); a string selects it explicitly.
        """
        tools, derived = _toolset_tools(toolset)
        namespace: str | None = None
        if isinstance(with_namespace, str):
            namespace = with_namespace
        elif with_namespace:
            if derived is None:
                raise InvalidName("toolset has no name to derive a namespace from")
            namespace = derived
        if namespace is not None:
            tools = [update_namespace(t, namespace) for t in tools]

        staged: dict[str, Tool] = {}
        for tool in tools:
            if tool.name in staged:
                raise DuplicateName(f"toolset yields {tool.name!r} twice")
            if tool.name in self._tools:
                raise DuplicateName(f"tool {tool.name!r} already registered")
            staged[tool.name] = tool
        self._tools.update(staged)
        if namespace is not None and staged:
            self._sub_registries.add(namespace)
        return len(staged)

    def register_from_openapi(
        self,
        client: Any,
        spec: Any = None,
        with_namespace: bool | str = False,
    ) -> int:
        from . import openapi

        return openapi.register_from_openapi(self, client, spec, with_namespace=with_namespace)

    def register_from_mcp(self, config: Any, with_namespace: bool | str = False) -> int:
        from . import mcp

        return mcp.register_from_mcp(self, config, with_namespace=with_namespace)

    # -- namespace algebra ---------------------------------------------------

    def merge(self, src: "ToolRegistry", keep_existing: bool = False) -> None:
        """Insert all of ``src``'s tools; the flag resolves name collisions."""
        for name, tool in src._tools.items():
            if name in self._tools and keep_existing:
                continue
            self._tools[name] = tool
        self._sub_registries |= src._sub_registries

    def spinoff(self, prefix: str) -> "ToolRegistry":
        """Extract every tool under ``prefix.`` into a new registry."""
        dotted = prefix + "."
        matching = [name for name in self._tools if name.startswith(dotted)]
        if not matching:
            raise UnknownPrefix(f"no tool under prefix {prefix!r}")
        spun = ToolRegistry(name=prefix, wire_separator=self.wire_separator)
        for name in matching:
            spun._tools[name] = self._tools.pop(name)
        spun._sub_registries.add(prefix)
        self._sub_registries.discard(prefix)
        return spun

    def reduce_namespace(self, prefix: str) -> None:
        """Strip ``prefix.`` from matching names; atomic on collision."""
        dotted = prefix + "."
        renames = {name: name[len(dotted):] for name in self._tools if name.startswith(dotted)}
        kept = set(self._tools) - set(renames)
        targets = list(renames.values())
        collisions = (set(targets) & kept) | {t for t in targets if targets.count(t) > 1}
        if collisions:
            raise CollisionAfterReduce(f"reducing {prefix!r} would collide on {sorted(collisions)}")
        for old, new in renames.items():
            self._tools[new] = _renamed(self._tools.pop(old), new)
        self._sub_registries.discard(prefix)

    # -- provider output and execution ---------------------------------------

    def get_tools_json(self, api_format: ApiFormat = ApiFormat.OPENAI_CHAT_COMPLETION) -> list[dict]:
        """Deterministic provider-format definitions, sorted by name."""
        out = []
        for name in self.names():
            tool = self._tools[name]
            emitted = name if self.wire_separator == "." else name.replace(".", self.wire_separator)
            out.append(format_tool_definition(tool, api_format, name=emitted))
        return out

    def _lookup(self, name: str) -> Tool | None:
        tool = self._tools.get(name)
        if tool is None and self.wire_separator != ".":
            tool = self._tools.get(name.replace(self.wire_separator, "."))
        return tool

    def execute_tool_calls(
        self,
        calls: Iterable[ToolCall],
        mode: ExecutionMode | None = None,
        config: ExecutorConfig | None = None,
    ) -> dict[str, ToolCallResult]:
        """Run a batch against a read-only snapshot of the current tools."""
        snapshot = dict(self._tools)
        separator = self.wire_separator

        def lookup(name: str) -> Tool | None:
            tool = snapshot.get(name)
            if tool is None and separator != ".":
                tool = snapshot.get(name.replace(separator, "."))
            return tool

        if config is None and mode is not None:
            config = ExecutorConfig(mode=mode)
        return self._get_executor().execute_batch(lookup, calls, config=config)

    def call_tool(self, name: str, arguments: Mapping[str, Any]) -> ToolCallResult:
        """Convenience single-call entry point (not_found encoded, never raised)."""
        results = self.execute_tool_calls([ToolCall(id="call_0", name=name, arguments=dict(arguments))])
        return results["call_0"]

    def _get_executor(self) -> Executor:
        if self._executor is None:
            self._executor = Executor()
        return self._executor

    # -- lifecycle ------------------------------------------------------------

    def attach_session(self, session: Any) -> None:
        """Tie a remote session's lifetime to this registry."""
        self._sessions.append(session)

    def close(self) -> None:
        for session in self._sessions:
            try:
                session.close()
            except Exception:
                pass
        self._sessions.clear()
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> "ToolRegistry":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _renamed(tool: Tool, new_name: str) -> Tool:
    from dataclasses import replace

    return replace(tool, name=new_name)


def _toolset_tools(toolset: Any) -> tuple[list[Tool], str | None]:
    """Materialize a toolset into tools plus its derivable namespace name."""
    import inspect

    if isinstance(toolset, Tool):
        return [toolset], None
    if isinstance(toolset, type):
        derived = _snake_case(toolset.__name__)
        instance = toolset()
    elif isinstance(toolset, Iterable):
        tools = list(toolset)
        for t in tools:
            if not isinstance(t, Tool):
                raise TypeError(f"toolset iterable must yield Tools, got {type(t).__name__}")
        return tools, None
    else:
        derived = _snake_case(type(toolset).__name__)
        instance = toolset

    if callable(getattr(instance, "tools", None)):
        tools = list(instance.tools())
        for t in tools:
            if not isinstance(t, Tool):
                raise TypeError(f"toolset.tools() must yield Tools, got {type(t).__name__}")
        return tools, derived

    tools = []
    for name, member in inspect.getmembers(instance, callable):
        if name.startswith("_"):
            continue
        tools.append(tool_from_function(member))
    return tools, derived
