"""Unified tool abstraction: schemas, validation, and the invocation contract.

A :class:`Tool` bundles a name, a description, a JSON-Schema description of its
inputs (:class:`ParameterSchema`) and a handler.  ``run_tool`` is the single
blocking entry point: it validates arguments, drives sync or async handlers to
completion, and never raises; every failure is encoded in the returned
:class:`ToolCallResult` so batch execution can degrade gracefully.
"""

from __future__ import annotations

import asyncio
import copy
import inspect
import json
import re
import threading
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterator, Literal, Mapping, NamedTuple, Sequence

import jsonschema

__all__ = [
    "ErrorKind",
    "ToolError",
    "InvalidName",
    "InvalidSchema",
    "ValidationError",
    "DuplicateParam",
    "ToolTransportError",
    "ParameterSchema",
    "Tool",
    "ToolCall",
    "ToolCallError",
    "ToolCallResult",
    "Param",
    "make_tool",
    "tool_from_declared_signature",
    "tool_from_function",
    "validate_arguments",
    "run_tool",
    "update_namespace",
]

ErrorKind = Literal["validation", "not_found", "execution", "timeout", "transport"]

NAME_PATTERN = re.compile(r"^[A-Za-z0-9_.\-]+$")
NAMESPACE_PATTERN = re.compile(r"^[A-Za-z0-9_\-]+$")

#: JSON Schema ``type`` names accepted for tool parameters.
PRIMITIVE_KINDS = ("string", "number", "integer", "boolean", "array", "object", "null")


class ToolError(Exception):
    """Base class for errors raised by tool construction and registries."""


class InvalidName(ToolError):
    pass


class InvalidSchema(ToolError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class ValidationError(ToolError):
    """Argument map rejected by a tool's parameter schema."""

    def __init__(self, path: str, expected: str, found: str):
        super().__init__(f"at {path or '<root>'}: expected {expected}, found {found}")
        self.path = path
        self.expected = expected
        self.found = found


class DuplicateParam(ToolError):
    pass


class ToolTransportError(Exception):
    """Raised by adapter handlers when the remote endpoint is unreachable.

    ``run_tool`` maps it to ``error.kind == "transport"`` instead of the
    generic ``execution`` kind, which makes the failure retryable.
    """


# ---------------------------------------------------------------------------
# Schema model and validation
# ---------------------------------------------------------------------------


def _json_type_name(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "array"
    if isinstance(value, dict):
        return "object"
    return type(value).__name__


def _matches_type(value: Any, kind: str) -> bool:
    if kind == "null":
        return value is None
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "integer":
        # JSON has no int/float distinction: 2.0 is a valid integer.
        if isinstance(value, bool):
            return False
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "string":
        return isinstance(value, str)
    if kind == "array":
        return isinstance(value, list)
    if kind == "object":
        return isinstance(value, dict)
    return False


def _json_equal(a: Any, b: Any) -> bool:
    # bool is an int subclass in Python but a distinct JSON type.
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_json_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_json_equal(v, b[k]) for k, v in a.items())
    return type(a) is type(b) and a == b


def _first_error(schema: Mapping[str, Any], value: Any, path: str) -> ValidationError | None:
    """Validate ``value`` against a subschema, returning the first failure.

    Implements the keyword subset used by tool parameter schemas: type, enum,
    properties, required, additionalProperties, items, anyOf, oneOf, allOf.
    Unknown keywords are ignored, like any JSON Schema validator would.
    """
    if "$ref" in schema:
        raise InvalidSchema("unresolved $ref encountered during validation", path)

    declared = schema.get("type")
    if declared is not None:
        kinds = declared if isinstance(declared, list) else [declared]
        if not any(_matches_type(value, k) for k in kinds):
            return ValidationError(path, " or ".join(kinds), _json_type_name(value))

    if "enum" in schema:
        if not any(_json_equal(value, option) for option in schema["enum"]):
            return ValidationError(path, f"one of {schema['enum']!r}", repr(value))

    for sub in schema.get("allOf", ()):
        err = _first_error(sub, value, path)
        if err is not None:
            return err

    if "anyOf" in schema:
        if not any(_first_error(sub, value, path) is None for sub in schema["anyOf"]):
            return ValidationError(path, "a value matching anyOf", _json_type_name(value))

    if "oneOf" in schema:
        matches = sum(_first_error(sub, value, path) is None for sub in schema["oneOf"])
        if matches != 1:
            return ValidationError(path, "exactly one oneOf match", f"{matches} matches")

    if isinstance(value, dict):
        properties = schema.get("properties", {})
        for name in schema.get("required", ()):
            if name not in value:
                key_path = f"{path}.{name}" if path else name
                return ValidationError(key_path, "required property", "missing")
        for name, sub in properties.items():
            if name in value:
                key_path = f"{path}.{name}" if path else name
                err = _first_error(sub, value[name], key_path)
                if err is not None:
                    return err
        additional = schema.get("additionalProperties")
        if additional is not None and additional is not True:
            for name in value:
                if name in properties:
                    continue
                key_path = f"{path}.{name}" if path else name
                if additional is False:
                    return ValidationError(key_path, "no additional properties", "unexpected property")
                err = _first_error(additional, value[name], key_path)
                if err is not None:
                    return err

    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            item_path = f"{path}.{i}" if path else str(i)
            err = _first_error(schema["items"], item, item_path)
            if err is not None:
                return err

    return None


def _walk_refs(node: Any) -> Iterator[str]:
    if isinstance(node, dict):
        if "$ref" in node:
            yield str(node["$ref"])
        for v in node.values():
            yield from _walk_refs(v)
    elif isinstance(node, list):
        for v in node:
            yield from _walk_refs(v)


@dataclass(frozen=True)
class ParameterSchema:
    """An object-typed JSON Schema describing a tool's argument map.

    Immutable after construction; build instances through :meth:`from_dict`
    or :meth:`from_properties`, which enforce the structural invariants.
    """

    root: dict[str, Any]

    @classmethod
    def from_dict(cls, root: Mapping[str, Any]) -> "ParameterSchema":
        if not isinstance(root, Mapping):
            raise InvalidSchema(f"parameter schema must be an object, got {_json_type_name(root)}")
        doc = copy.deepcopy(dict(root))
        doc.setdefault("type", "object")
        if doc["type"] != "object":
            raise InvalidSchema(f'parameter schema root must have type "object", got {doc["type"]!r}', "type")
        doc.setdefault("properties", {})
        doc.setdefault("required", [])
        doc.setdefault("additionalProperties", False)

        try:
            jsonschema.Draft202012Validator.check_schema(doc)
        except jsonschema.SchemaError as exc:
            raise InvalidSchema(f"not a valid 2020-12 schema: {exc.message}", exc.json_path) from exc
        for ref in _walk_refs(doc):
            raise InvalidSchema(f"unresolved $ref {ref!r} in finalized schema")
        if not isinstance(doc["properties"], dict):
            raise InvalidSchema("properties must be an object", "properties")
        missing = [name for name in doc["required"] if name not in doc["properties"]]
        if missing:
            raise InvalidSchema(f"required names missing from properties: {missing}", "required")

        ordered = {
            "type": doc.pop("type"),
            "properties": doc.pop("properties"),
            "required": doc.pop("required"),
            "additionalProperties": doc.pop("additionalProperties"),
        }
        ordered.update(doc)  # preserve any extra root keywords after the canonical four
        return cls(ordered)

    @classmethod
    def from_properties(
        cls,
        properties: Mapping[str, Any],
        required: Sequence[str] = (),
        additional_properties: bool = False,
    ) -> "ParameterSchema":
        return cls.from_dict(
            {
                "type": "object",
                "properties": dict(properties),
                "required": list(required),
                "additionalProperties": additional_properties,
            }
        )

    @property
    def properties(self) -> dict[str, Any]:
        return self.root["properties"]

    @property
    def required(self) -> list[str]:
        return self.root["required"]

    def first_error(self, arguments: Mapping[str, Any]) -> ValidationError | None:
        return _first_error(self.root, arguments, "")

    def to_json(self) -> str:
        """Canonical serialization: root keys in insertion order, compact."""
        return json.dumps(self.root, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# Tool and call records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Tool:
    """A named, schema-described, stateless invocation unit.

    ``handler`` receives the validated arguments as keyword arguments and
    returns a JSON-representable value.  ``transferable`` is the capability
    mark consumed by the executor's serialization probe: ``False`` pins the
    tool to in-process execution, ``None`` lets the probe decide.
    """

    name: str
    description: str
    parameters: ParameterSchema
    handler: Callable[..., Any]
    is_async: bool = False
    transferable: bool | None = None

    def run(self, arguments: Mapping[str, Any], call_id: str = "") -> "ToolCallResult":
        return run_tool(self, arguments, call_id=call_id)


@dataclass(frozen=True)
class ToolCall:
    """A normalized provider tool-call request."""

    id: str
    name: str
    arguments: dict[str, Any]

    def __post_init__(self):
        if not self.id:
            raise ValueError("ToolCall.id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "arguments": self.arguments}


@dataclass(frozen=True)
class ToolCallError:
    kind: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class ToolCallResult:
    """Outcome of one tool call; exactly one of ``value``/``error`` is set."""

    id: str
    status: Literal["success", "error"]
    value: Any = None
    error: ToolCallError | None = None

    @classmethod
    def ok(cls, call_id: str, value: Any) -> "ToolCallResult":
        return cls(id=call_id, status="success", value=value)

    @classmethod
    def fail(cls, call_id: str, kind: ErrorKind, message: str) -> "ToolCallResult":
        return cls(id=call_id, status="error", error=ToolCallError(kind, message))

    @property
    def is_success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "status": self.status}
        if self.status == "success":
            out["value"] = self.value
        else:
            assert self.error is not None
            out["error"] = self.error.to_dict()
        return out


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def make_tool(
    name: str,
    description: str,
    parameters: ParameterSchema | Mapping[str, Any],
    handler: Callable[..., Any],
    is_async: bool = False,
    transferable: bool | None = None,
) -> Tool:
    """Build a Tool, enforcing the name grammar and schema invariants.

    Raises :class:`InvalidName` or :class:`InvalidSchema`; the handler is
    stored unmodified.
    """
    if not NAME_PATTERN.match(name or ""):
        raise InvalidName(f"tool name {name!r} does not match [A-Za-z0-9_.-]+")
    if not isinstance(parameters, ParameterSchema):
        parameters = ParameterSchema.from_dict(parameters)
    return Tool(
        name=name,
        description=description,
        parameters=parameters,
        handler=handler,
        is_async=is_async,
        transferable=transferable,
    )


class Param(NamedTuple):
    """One declared tool parameter: name, primitive kind, required flag."""

    name: str
    kind: str
    required: bool = True
    description: str = ""


def tool_from_declared_signature(
    name: str,
    description: str,
    params: Sequence[Param | tuple],
    handler: Callable[..., Any],
    is_async: bool = False,
) -> Tool:
    """Build a Tool from an explicit parameter declaration list."""
    properties: dict[str, Any] = {}
    required: list[str] = []
    for raw in params:
        p = raw if isinstance(raw, Param) else Param(*raw)
        if p.name in properties:
            raise DuplicateParam(f"parameter {p.name!r} declared twice")
        if p.kind not in PRIMITIVE_KINDS:
            raise InvalidSchema(f"unknown parameter kind {p.kind!r}", p.name)
        prop: dict[str, Any] = {"type": p.kind}
        if p.description:
            prop["description"] = p.description
        properties[p.name] = prop
        if p.required:
            required.append(p.name)
    schema = ParameterSchema.from_properties(properties, required)
    return make_tool(name, description, schema, handler, is_async=is_async)


_ANNOTATION_KINDS: dict[Any, str] = {
    str: "string",
    float: "number",
    int: "integer",
    bool: "boolean",
    list: "array",
    dict: "object",
    type(None): "null",
}


def _annotation_to_schema(annotation: Any) -> dict[str, Any]:
    import collections.abc
    import types
    import typing

    if annotation is inspect.Parameter.empty or annotation is Any:
        return {}
    origin = typing.get_origin(annotation)
    if origin is typing.Union or origin is types.UnionType:
        subs = [_annotation_to_schema(a) for a in typing.get_args(annotation)]
        return {"anyOf": subs}
    if origin in (list, collections.abc.Sequence):
        args = typing.get_args(annotation)
        item = _annotation_to_schema(args[0]) if args else {}
        return {"type": "array", "items": item} if item else {"type": "array"}
    if origin is dict:
        return {"type": "object"}
    kind = _ANNOTATION_KINDS.get(annotation)
    return {"type": kind} if kind else {}


def tool_from_function(
    fn: Callable[..., Any],
    name: str | None = None,
    description: str | None = None,
) -> Tool:
    """Derive the declared signature from a plain function and wrap it.

    Type hints map to JSON Schema kinds, parameters without defaults are
    required, and the first docstring line becomes the description.  A
    ``**kwargs`` catch-all turns on ``additionalProperties``.
    """
    import typing

    sig = inspect.signature(fn)
    try:
        hints = typing.get_type_hints(fn)  # resolves postponed (string) annotations
    except Exception:
        hints = {}
    properties: dict[str, Any] = {}
    required: list[str] = []
    additional = False
    for param in sig.parameters.values():
        if param.kind is inspect.Parameter.VAR_KEYWORD:
            additional = True
            continue
        if param.kind is inspect.Parameter.VAR_POSITIONAL:
            continue
        prop = _annotation_to_schema(hints.get(param.name, param.annotation))
        if not prop and param.default is not inspect.Parameter.empty and param.default is not None:
            prop = _annotation_to_schema(type(param.default))
        properties[param.name] = prop
        if param.default is inspect.Parameter.empty:
            required.append(param.name)
    doc = inspect.getdoc(fn) or ""
    return make_tool(
        name or fn.__name__,
        description if description is not None else doc.splitlines()[0] if doc else "",
        ParameterSchema.from_properties(properties, required, additional_properties=additional),
        fn,
        is_async=inspect.iscoroutinefunction(fn),
    )


# ---------------------------------------------------------------------------
# Invocation
# ---------------------------------------------------------------------------


def validate_arguments(tool: Tool, arguments: Mapping[str, Any]) -> dict[str, Any]:
    """Return ``arguments`` iff they satisfy the tool's parameter schema."""
    if not isinstance(arguments, Mapping):
        raise ValidationError("", "object", _json_type_name(arguments))
    arguments = dict(arguments)
    err = tool.parameters.first_error(arguments)
    if err is not None:
        raise err
    return arguments


class _AsyncDriver:
    """A background event loop that drives async handlers to completion.

    Keeping the loop on a dedicated thread means ``run_tool`` can block on a
    coroutine even when the caller already sits inside a running event loop,
    without deadlocking.  Fork-aware: a forked child gets a fresh loop.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._pid: int | None = None

    def _ensure_loop(self) -> asyncio.AbstractEventLoop:
        import os

        with self._lock:
            if self._loop is None or self._pid != os.getpid() or self._loop.is_closed():
                loop = asyncio.new_event_loop()
                thread = threading.Thread(target=loop.run_forever, name="toolbus-async-driver", daemon=True)
                thread.start()
                self._loop = loop
                self._pid = os.getpid()
            return self._loop

    def run(self, coro) -> Any:
        future = asyncio.run_coroutine_threadsafe(coro, self._ensure_loop())
        return future.result()


_driver = _AsyncDriver()


def run_tool(tool: Tool, arguments: Mapping[str, Any], call_id: str = "") -> ToolCallResult:
    """Validate, invoke, and capture: the total invocation entry point.

    Never raises.  Handler exceptions become ``execution`` errors (or
    ``transport`` for :class:`ToolTransportError`), schema rejections become
    ``validation`` errors, and non-JSON-representable returns are reported as
    ``execution`` failures because results must serialize into tool messages.
    """
    try:
        validated = validate_arguments(tool, arguments)
    except ValidationError as exc:
        return ToolCallResult.fail(call_id, "validation", str(exc))

    try:
        result = tool.handler(**validated)
        if tool.is_async or inspect.iscoroutine(result):
            result = _driver.run(result)
    except ToolTransportError as exc:
        return ToolCallResult.fail(call_id, "transport", str(exc))
    except Exception as exc:  # noqa: BLE001 - totality is the contract
        return ToolCallResult.fail(call_id, "execution", f"{type(exc).__name__}: {exc}")

    try:
        json.dumps(result, allow_nan=False)
    except (TypeError, ValueError) as exc:
        return ToolCallResult.fail(
            call_id, "execution", f"handler returned a non-JSON-representable value: {exc}"
        )
    return ToolCallResult.ok(call_id, result)


def update_namespace(tool: Tool, namespace: str, force: bool = False) -> Tool:
    """Prefix the tool's bare name with ``namespace``.

    An existing prefix is retained unless ``force`` is set, in which case the
    bare name (everything after the first dot) is re-prefixed.
    """
    if not NAMESPACE_PATTERN.match(namespace or ""):
        raise InvalidName(f"namespace {namespace!r} must match [A-Za-z0-9_-]+ (no dots)")
    if "." in tool.name and not force:
        return tool
    bare = tool.name.split(".", 1)[1] if "." in tool.name else tool.name
    return replace(tool, name=f"{namespace}.{bare}")
