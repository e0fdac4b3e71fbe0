"""Provider wire-format adaptation.

Normalizes assistant tool calls from the two supported OpenAI-style dialects
into :class:`~toolbus.core.ToolCall` records and renders results back into
provider-legal messages.  All operations are pure and total over
:class:`ApiFormat`.
"""

from __future__ import annotations

import enum
import json
from typing import Any, Iterable, Mapping, Sequence

from .core import Tool, ToolCall, ToolCallResult

__all__ = [
    "ApiFormat",
    "MalformedCall",
    "format_tool_definition",
    "convert_tool_calls",
    "recover_tool_message",
    "recover_assistant_message",
]


class ApiFormat(enum.Enum):
    """Supported provider dialects for tool definitions and messages."""

    OPENAI_CHAT_COMPLETION = "openai_chat_completion"
    OPENAI_RESPONSE = "openai_response"


class MalformedCall(ValueError):
    """A provider tool-call entry that cannot be normalized."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"tool call at index {index}: {reason}")
        self.index = index
        self.reason = reason


def _canonical(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def format_tool_definition(tool: Tool, api_format: ApiFormat, name: str | None = None) -> dict[str, Any]:
    """Render one tool definition in the requested dialect.

    ``name`` overrides the emitted name (used by registries that substitute
    the namespace separator for providers that forbid dots).
    """
    emitted = name if name is not None else tool.name
    if api_format is ApiFormat.OPENAI_CHAT_COMPLETION:
        return {
            "type": "function",
            "function": {
                "name": emitted,
                "description": tool.description,
                "parameters": tool.parameters.root,
            },
        }
    return {
        "type": "function",
        "name": emitted,
        "description": tool.description,
        "parameters": tool.parameters.root,
    }


def _parse_arguments(raw: Any, index: int) -> dict[str, Any]:
    if isinstance(raw, dict):
        return raw
    if not isinstance(raw, str):
        raise MalformedCall(index, f"arguments must be a JSON string, got {type(raw).__name__}")
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedCall(index, f"unparseable arguments string: {exc}") from exc
    if not isinstance(parsed, dict):
        raise MalformedCall(index, "arguments string does not encode an object")
    return parsed


def convert_tool_calls(raw: Any, api_format: ApiFormat) -> list[ToolCall]:
    """Normalize a provider tool-call payload into ToolCall records.

    Chat-completion input is the assistant message's ``tool_calls`` array (a
    full assistant message is also accepted); response input is the output
    items array, where non-``function_call`` items are skipped.  Order is
    preserved and ids are copied bit-exactly.
    """
    if raw is None:
        return []
    if isinstance(raw, Mapping):
        if api_format is ApiFormat.OPENAI_CHAT_COMPLETION:
            raw = raw.get("tool_calls") or []
        else:
            raw = raw.get("output") or []
    if not isinstance(raw, Sequence) or isinstance(raw, (str, bytes)):
        raise MalformedCall(0, f"expected an array of tool calls, got {type(raw).__name__}")

    calls: list[ToolCall] = []
    for index, item in enumerate(raw):
        if not isinstance(item, Mapping):
            raise MalformedCall(index, "entry is not an object")
        if api_format is ApiFormat.OPENAI_CHAT_COMPLETION:
            if item.get("type") != "function":
                raise MalformedCall(index, f"unknown tool call type {item.get('type')!r}")
            fn = item.get("function")
            if not isinstance(fn, Mapping):
                raise MalformedCall(index, "missing function object")
            call_id, name = item.get("id"), fn.get("name")
            arguments = _parse_arguments(fn.get("arguments", "{}"), index)
        else:
            if item.get("type") != "function_call":
                continue  # response outputs interleave text items; skip them
            call_id, name = item.get("call_id"), item.get("name")
            arguments = _parse_arguments(item.get("arguments", "{}"), index)
        if not call_id or not isinstance(call_id, str):
            raise MalformedCall(index, "missing call id")
        if not name or not isinstance(name, str):
            raise MalformedCall(index, "missing tool name")
        calls.append(ToolCall(id=call_id, name=name, arguments=arguments))
    return calls


def _result_content(result: ToolCallResult) -> str:
    if result.status == "error":
        assert result.error is not None
        return _canonical({"error": result.error.to_dict()})
    if isinstance(result.value, str):
        return result.value  # bare strings go through unquoted
    return _canonical(result.value)


def recover_tool_message(result: ToolCallResult, api_format: ApiFormat) -> dict[str, Any]:
    """Render one result as the provider's tool-role message."""
    content = _result_content(result)
    if api_format is ApiFormat.OPENAI_CHAT_COMPLETION:
        return {"role": "tool", "tool_call_id": result.id, "content": content}
    return {"type": "function_call_output", "call_id": result.id, "output": content}


def recover_assistant_message(calls: Iterable[ToolCall], api_format: ApiFormat) -> Any:
    """Reconstruct the assistant-side payload that carries ``calls``.

    Round-trips with :func:`convert_tool_calls`; arguments are re-serialized
    as canonical JSON strings so the round-trip is deterministic.
    """
    calls = list(calls)
    if api_format is ApiFormat.OPENAI_CHAT_COMPLETION:
        return {
            "role": "assistant",
            "content": None,
            "tool_calls": [
                {
                    "id": call.id,
                    "type": "function",
                    "function": {"name": call.name, "arguments": _canonical(call.arguments)},
                }
                for call in calls
            ],
        }
    return [
        {
            "type": "function_call",
            "call_id": call.id,
            "name": call.name,
            "arguments": _canonical(call.arguments),
        }
        for call in calls
    ]
