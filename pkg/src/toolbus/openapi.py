"""OpenAPI 3.0/3.1 ingestion: one Tool per operation.

Each operation's path/query/header parameters and JSON request body are merged
into a single flat argument schema; the generated handler routes every
argument back to its recorded location and performs the HTTP request against
the configured base client.  The document's ``servers`` array is ignored in
favor of the explicit :class:`HttpClientConfig`.
"""

from __future__ import annotations

import json
import re
import urllib.parse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx
import yaml

from .core import ParameterSchema, Tool, ToolError, ToolTransportError, make_tool
from .registry import ToolRegistry, normalize_namespace

__all__ = [
    "HttpClientConfig",
    "OpenAPIOperation",
    "SkippedOperation",
    "FetchError",
    "ParseError",
    "UnsupportedVersion",
    "NameCollision",
    "RefResolutionError",
    "load_openapi_spec",
    "extract_operations",
    "operation_to_tool",
    "register_from_openapi",
]

_METHODS = ("get", "put", "post", "patch", "delete")
_SPEC_FETCH_TIMEOUT = 10.0
DEFAULT_REF_DEPTH = 3


class FetchError(ToolError):
    pass


class ParseError(ToolError):
    pass


class UnsupportedVersion(ToolError):
    pass


class NameCollision(ToolError):
    pass


class RefResolutionError(ToolError):
    pass


@dataclass(frozen=True)
class HttpClientConfig:
    """Where and how the generated handlers talk to the service."""

    base_url: str
    default_headers: Mapping[str, str] = field(default_factory=dict)
    timeout: float = 10.0
    auth: str | None = None  # bearer token

    def __post_init__(self):
        scheme = urllib.parse.urlsplit(self.base_url).scheme
        if scheme not in ("http", "https"):
            raise ValueError(f"base_url must be http(s), got {self.base_url!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class OpenAPIOperation:
    operation_id: str
    method: str
    path_template: str
    param_locations: dict[str, str]  # name -> path | query | header | body
    request_schema: ParameterSchema
    description: str


@dataclass(frozen=True)
class SkippedOperation:
    """Extraction-report record for an operation this adapter cannot serve."""

    path: str
    method: str
    reason: str


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------


def _check_version(doc: Any) -> dict[str, Any]:
    if not isinstance(doc, dict):
        raise ParseError("document is not a JSON/YAML object")
    version = doc.get("openapi")
    if not isinstance(version, str) or not re.match(r"^3\.[01](\.\d+)?$", version):
        raise UnsupportedVersion(f"unsupported OpenAPI version {version!r} (need 3.0.x or 3.1.x)")
    return doc


def _parse_document(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"neither JSON nor YAML: {exc}") from exc


def load_openapi_spec(source: str | Path) -> dict[str, Any]:
    """Fetch or read an OpenAPI document and verify its version.

    URLs are fetched with a 10 s timeout; a bare base URL is probed at the
    well-known paths ``/openapi.json`` then ``/openapi.yaml``.
    """
    source = str(source)
    if source.startswith(("http://", "https://")):
        return _fetch_spec(source)
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise FetchError(f"cannot read {source}: {exc}") from exc
    return _check_version(_parse_document(text))


def _fetch_spec(url: str) -> dict[str, Any]:
    candidates = [url, url.rstrip("/") + "/openapi.json", url.rstrip("/") + "/openapi.yaml"]
    parse_failure: ParseError | None = None
    fetch_failure: str | None = None
    with httpx.Client(timeout=_SPEC_FETCH_TIMEOUT) as client:
        for candidate in candidates:
            try:
                response = client.get(candidate)
            except httpx.HTTPError as exc:
                fetch_failure = f"{candidate}: {exc}"
                continue
            if response.status_code >= 300:
                fetch_failure = f"{candidate}: HTTP {response.status_code}"
                continue
            try:
                doc = _parse_document(response.text)
            except ParseError as exc:
                parse_failure = exc
                continue
            if isinstance(doc, dict) and "openapi" in doc:
                return _check_version(doc)
            parse_failure = ParseError(f"{candidate}: not an OpenAPI document")
    if parse_failure is not None:
        raise parse_failure
    raise FetchError(fetch_failure or f"no OpenAPI document found at {url}")


# ---------------------------------------------------------------------------
# Operation extraction
# ---------------------------------------------------------------------------


def _deref(spec: dict[str, Any], ref: str) -> Any:
    if not ref.startswith("#/"):
        raise RefResolutionError(f"external $ref {ref!r} is not supported")
    node: Any = spec
    for raw in ref[2:].split("/"):
        key = raw.replace("~1", "/").replace("~0", "~")
        if isinstance(node, dict) and key in node:
            node = node[key]
        else:
            raise RefResolutionError(f"dangling $ref {ref!r}")
    return node


def _merge_all_of(schema: dict[str, Any]) -> dict[str, Any]:
    parts = schema.pop("allOf")
    merged: dict[str, Any] = {}
    properties: dict[str, Any] = {}
    required: list[str] = []
    for part in [*parts, schema]:
        for key, value in part.items():
            if key == "properties":
                properties.update(value)
            elif key == "required":
                required.extend(n for n in value if n not in required)
            else:
                merged[key] = value
    if properties:
        merged["properties"] = properties
    if required:
        merged["required"] = required
    return merged


def _resolve_schema(node: Any, spec: dict[str, Any], stack: tuple[str, ...], depth: int) -> Any:
    if isinstance(node, list):
        return [_resolve_schema(item, spec, stack, depth) for item in node]
    if not isinstance(node, dict):
        return node
    if "$ref" in node:
        ref = str(node["$ref"])
        target = _deref(spec, ref)
        if stack.count(ref) >= depth:
            return {"type": "object"}  # recursion truncated to an unconstrained object
        resolved = _resolve_schema(target, spec, stack + (ref,), depth)
        siblings = {k: v for k, v in node.items() if k != "$ref"}
        if siblings and isinstance(resolved, dict):
            resolved = {**resolved, **_resolve_schema(siblings, spec, stack, depth)}
        return resolved
    out = {key: _resolve_schema(value, spec, stack, depth) for key, value in node.items()}
    if isinstance(out.get("allOf"), list):
        out = _merge_all_of(out)
    return out


def _fallback_operation_id(method: str, path: str) -> str:
    return method.lower() + path.replace("/", "_").replace("{", "_").replace("}", "_")


def _merge_parameters(path_item: Mapping, op: Mapping) -> list[dict]:
    by_key: dict[tuple[str, str], dict] = {}
    for param in [*path_item.get("parameters", []), *op.get("parameters", [])]:
        by_key[(param.get("name", ""), param.get("in", ""))] = param
    return list(by_key.values())


def extract_operations(
    spec: dict[str, Any],
    max_ref_depth: int = DEFAULT_REF_DEPTH,
    report: list[SkippedOperation] | None = None,
) -> list[OpenAPIOperation]:
    """One operation per (path, method), a pure function of the document.

    Recursive ``$ref`` chains are expanded ``max_ref_depth`` times and then
    truncated to an unconstrained object; operations this adapter cannot
    serve (non-JSON bodies, cookie parameters) are skipped and recorded in
    ``report`` when given.
    """
    operations: list[OpenAPIOperation] = []
    seen_names: set[str] = set()
    for path, path_item in spec.get("paths", {}).items():
        if not isinstance(path_item, Mapping):
            continue
        for method in _METHODS:
            op = path_item.get(method)
            if not isinstance(op, Mapping):
                continue
            extracted = _extract_one(path, method, path_item, op, spec, max_ref_depth, report)
            if extracted is None:
                continue
            if extracted.operation_id in seen_names:
                raise NameCollision(f"two operations named {extracted.operation_id!r}")
            seen_names.add(extracted.operation_id)
            operations.append(extracted)
    return operations


def _skip(report, path, method, reason) -> None:
    if report is not None:
        report.append(SkippedOperation(path=path, method=method.upper(), reason=reason))


def _extract_one(
    path: str,
    method: str,
    path_item: Mapping,
    op: Mapping,
    spec: dict[str, Any],
    depth: int,
    report: list[SkippedOperation] | None,
) -> OpenAPIOperation | None:
    properties: dict[str, Any] = {}
    required: list[str] = []
    locations: dict[str, str] = {}

    for raw in _merge_parameters(path_item, op):
        param = _resolve_schema(raw, spec, (), depth)
        name, where = param.get("name"), param.get("in")
        if where == "cookie":
            _skip(report, path, method, f"cookie parameter {name!r} is not supported")
            return None
        if where not in ("path", "query", "header") or not name:
            continue
        prop = dict(param.get("schema") or {})
        description = param.get("description", "")
        if where == "header":
            description = f"[location=header] {description}".strip()
        if description:
            prop["description"] = description
        properties[name] = prop
        locations[name] = where
        if param.get("required") or where == "path":
            required.append(name)

    body = op.get("requestBody")
    if body:
        body = _resolve_schema(body, spec, (), depth)
        content = body.get("content") or {}
        if content and "application/json" not in content:
            _skip(report, path, method, f"unsupported request body content types: {sorted(content)}")
            return None
        body_schema = _resolve_schema((content.get("application/json") or {}).get("schema") or {}, spec, (), depth)
        if body_schema:
            body_props = body_schema.get("properties")
            if not isinstance(body_props, dict) or body_schema.get("type", "object") != "object":
                _skip(report, path, method, "request body is not a JSON object schema")
                return None
            for name, sub in body_props.items():
                if name in properties:
                    _skip(report, path, method, f"body property {name!r} collides with a parameter")
                    continue
                properties[name] = sub
                locations[name] = "body"
            for name in body_schema.get("required", []):
                if name in properties and name not in required:
                    required.append(name)

    # OpenAPI requires path placeholders to be declared; tolerate documents
    # that don't by synthesizing a required string parameter.
    for placeholder in re.findall(r"{([^{}]+)}", path):
        if placeholder not in locations:
            properties[placeholder] = {"type": "string"}
            locations[placeholder] = "path"
            required.append(placeholder)

    operation_id = op.get("operationId") or _fallback_operation_id(method, path)
    operation_id = re.sub(r"[^A-Za-z0-9_.\-]", "_", str(operation_id))
    return OpenAPIOperation(
        operation_id=operation_id,
        method=method.upper(),
        path_template=path,
        param_locations=locations,
        request_schema=ParameterSchema.from_properties(properties, required),
        description=op.get("summary") or op.get("description") or "",
    )


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------


class _HttpBackend:
    """Shared, connection-pooled HTTP client for all tools of one service."""

    def __init__(self, config: HttpClientConfig):
        self.config = config
        self._client = httpx.Client(base_url=config.base_url, timeout=config.timeout)

    def call(self, op: OpenAPIOperation, arguments: Mapping[str, Any]) -> Any:
        path = op.path_template
        query: dict[str, Any] = {}
        headers = dict(self.config.default_headers)
        body: dict[str, Any] = {}
        has_body = any(where == "body" for where in op.param_locations.values())
        for name, value in arguments.items():
            where = op.param_locations.get(name, "body")
            if where == "path":
                path = path.replace("{" + name + "}", urllib.parse.quote(str(value), safe=""))
            elif where == "query":
                query[name] = _query_value(value)
            elif where == "header":
                headers[name] = str(value)
            else:
                body[name] = value
        if self.config.auth:
            headers["Authorization"] = f"Bearer {self.config.auth}"
        try:
            response = self._client.request(
                op.method,
                path,
                params=query or None,
                headers=headers,
                json=body if has_body else None,
            )
        except httpx.HTTPError as exc:
            raise ToolTransportError(f"{op.method} {path}: {exc}") from exc
        if 200 <= response.status_code < 300:
            if "json" in response.headers.get("content-type", ""):
                return response.json()
            return response.text
        raise RuntimeError(f"HTTP {response.status_code} from {op.method} {path}: {response.text[:200]}")

    def close(self) -> None:
        self._client.close()


def _query_value(value: Any) -> Any:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return value


def operation_to_tool(
    op: OpenAPIOperation,
    client: HttpClientConfig,
    backend: _HttpBackend | None = None,
) -> Tool:
    """Wrap one operation; the handler performs the HTTP request.

    Handlers close over a live connection pool, so they are marked
    non-transferable and the executor falls back to shared mode for them.
    """
    backend = backend or _HttpBackend(client)

    def handler(**arguments: Any) -> Any:
        return backend.call(op, arguments)

    return make_tool(
        op.operation_id,
        op.description,
        op.request_schema,
        handler,
        transferable=False,
    )


def register_from_openapi(
    registry: ToolRegistry,
    client: HttpClientConfig,
    spec: dict[str, Any] | str | Path | None = None,
    with_namespace: bool | str = False,
) -> int:
    """Load, extract, wrap, and register; returns the number of tools added.

    ``spec`` may be a loaded document, a URL/path, or None to discover it at
    the client's base URL.  ``with_namespace=True`` derives the namespace
    from the document's ``info.title``.
    """
    if spec is None:
        doc = load_openapi_spec(client.base_url)
    elif isinstance(spec, (str, Path)):
        doc = load_openapi_spec(spec)
    else:
        doc = _check_version(spec)
    operations = extract_operations(doc)
    backend = _HttpBackend(client)
    tools = [operation_to_tool(op, client, backend=backend) for op in operations]
    namespace: bool | str = with_namespace
    if with_namespace is True:
        namespace = normalize_namespace(doc.get("info", {}).get("title", ""))
    return registry.register_toolset(tools, with_namespace=namespace)
