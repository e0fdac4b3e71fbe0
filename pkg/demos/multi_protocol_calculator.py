"""One registry, three protocols: the same addition runs through a native
toolset, an OpenAPI service, and an MCP server without protocol-specific code."""
from toolbus import ToolRegistry
from toolbus.hub import BaseCalculator
from toolbus.openapi import HttpClientConfig
from toolbus.testkit import start_mock_mcp, start_mock_openapi

openapi_service = start_mock_openapi()
mcp_server = start_mock_mcp()
registry = ToolRegistry()
registry.register_toolset(BaseCalculator, with_namespace=True)
registry.register_from_openapi(HttpClientConfig(base_url=openapi_service.url), with_namespace=True)
registry.register_from_mcp(mcp_server.sse_url, with_namespace=True)

results = {name: registry.call_tool(name, {"a": 2, "b": 3})
           for name in ("base_calculator.add", "calc_service.add", "mock_mcp.add")}
answers = [r.value["result"] if isinstance(r.value, dict) else r.value for r in results.values()]
for name, result in results.items():
    print(f"{name:>20} -> {result.value}")
assert answers == [5, 5, 5], answers
print("every protocol computed:", answers[0])
registry.close()
openapi_service.stop()
mcp_server.stop()
