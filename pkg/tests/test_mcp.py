"""MCP client: handshake, discovery, calls, and transport equivalence."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import pytest

from toolbus.core import run_tool
from toolbus.mcp import (
    ConnectError,
    HandshakeError,
    McpTransportConfig,
    TransportClosed,
    connect,
    list_tools,
    mcp_tool_from_descriptor,
    register_from_mcp,
)
from toolbus.registry import ToolRegistry
from toolbus.testkit import MockMcpServer, start_mock_mcp


def transports(server: MockMcpServer) -> dict[str, McpTransportConfig]:
    return {
        "stdio": server.stdio_config,
        "sse": McpTransportConfig.sse(server.sse_url),
        "streamable_http": McpTransportConfig.streamable_http(server.http_url),
    }


class TestConnect:
    @pytest.mark.parametrize("kind", ["stdio", "sse", "streamable_http"])
    def test_handshake_records_server_info(self, mock_mcp, kind):
        with connect(transports(mock_mcp)[kind]) as session:
            assert session.server_info["name"] == "mock-mcp"
            assert session.protocol_version is not None

    def test_refused_connection(self):
        with pytest.raises(ConnectError):
            connect(McpTransportConfig.sse("http://127.0.0.1:9/sse", connect_timeout=1.0))

    def test_refused_connection_streamable(self):
        with pytest.raises(ConnectError):
            connect(McpTransportConfig.streamable_http("http://127.0.0.1:9/mcp", connect_timeout=1.0))

    def test_bad_command_spawn(self):
        with pytest.raises(ConnectError):
            connect(McpTransportConfig.stdio("/nonexistent/binary"))

    def test_newer_server_protocol_rejected(self):
        server = start_mock_mcp(protocol_version="2099-01-01")
        try:
            with pytest.raises(HandshakeError):
                connect(McpTransportConfig.sse(server.sse_url))
        finally:
            server.stop()


class TestListTools:
    def test_two_tools(self):
        server = start_mock_mcp(tools=("add", "subtract"))
        try:
            with connect(McpTransportConfig.sse(server.sse_url)) as session:
                descriptors = list_tools(session)
            assert [d.name for d in descriptors] == ["add", "subtract"]
        finally:
            server.stop()

    def test_three_tools_across_two_pages(self):
        server = start_mock_mcp(page_size=2)
        try:
            with connect(McpTransportConfig.sse(server.sse_url)) as session:
                descriptors = list_tools(session)
            assert [d.name for d in descriptors] == ["add", "subtract", "multiply"]
            assert server.core.list_pages_served == 2
        finally:
            server.stop()

    def test_page_size_one_traverses_three_pages(self):
        server = start_mock_mcp(page_size=1)
        try:
            with connect(McpTransportConfig.streamable_http(server.http_url)) as session:
                descriptors = list_tools(session)
            assert len(descriptors) == 3
            assert server.core.list_pages_served == 3
        finally:
            server.stop()

    def test_closed_session_raises_transport_closed(self, mock_mcp):
        session = connect(McpTransportConfig.sse(mock_mcp.sse_url))
        session.close()
        with pytest.raises(TransportClosed):
            list_tools(session)

    def test_drop_after_initialize(self):
        server = start_mock_mcp(drop_after_initialize=True)
        try:
            session = connect(McpTransportConfig.sse(server.sse_url))
            with pytest.raises(TransportClosed):
                list_tools(session)
            session.close()
        finally:
            server.stop()

    def test_drop_after_initialize_streamable(self):
        server = start_mock_mcp(drop_after_initialize=True)
        try:
            session = connect(McpTransportConfig.streamable_http(server.http_url))
            with pytest.raises(TransportClosed):
                list_tools(session)
            session.close()
        finally:
            server.stop()

    @pytest.mark.parametrize("kind", ["sse", "streamable_http"])
    def test_single_drop_recovers_via_reconnect(self, kind):
        server = start_mock_mcp(drop_first_requests=1)
        try:
            config = (
                McpTransportConfig.sse(server.sse_url)
                if kind == "sse"
                else McpTransportConfig.streamable_http(server.http_url)
            )
            with connect(config) as session:
                descriptors = list_tools(session)  # first attempt dropped, retried once
            assert [d.name for d in descriptors] == ["add", "subtract", "multiply"]
        finally:
            server.stop()


class TestWrappedTools:
    def test_call_parses_numeric_text(self, mock_mcp):
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            tools = {d.name: mcp_tool_from_descriptor(d, session) for d in list_tools(session)}
            result = run_tool(tools["add"], {"a": 2, "b": 3})
            assert result.is_success and result.value == 5

    def test_is_error_result_maps_to_execution(self):
        server = start_mock_mcp(error_tools=("add",))
        try:
            with connect(McpTransportConfig.sse(server.sse_url)) as session:
                (add, *_), = [list_tools(session)]
                tool = mcp_tool_from_descriptor(add, session)
                result = run_tool(tool, {"a": 1, "b": 2})
                assert result.error.kind == "execution"
                assert "simulated failure" in result.error.message
        finally:
            server.stop()

    def test_missing_type_inferred_as_object(self, mock_mcp):
        from toolbus.mcp import McpToolDescriptor

        desc = McpToolDescriptor(
            name="loose",
            description="",
            input_schema={"properties": {"x": {"type": "number"}}},
        )
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            tool = mcp_tool_from_descriptor(desc, session)
        assert tool.parameters.root["type"] == "object"

    def test_wrapped_tools_are_non_transferable(self, mock_mcp):
        from toolbus.executor import classify_transferable

        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            tools = [mcp_tool_from_descriptor(d, session) for d in list_tools(session)]
            assert all(classify_transferable(t) is False for t in tools)

    def test_validation_stays_local(self, mock_mcp):
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            tools = {d.name: mcp_tool_from_descriptor(d, session) for d in list_tools(session)}
            result = run_tool(tools["add"], {"a": 2})
            assert result.error.kind == "validation"


class TestTransportEquivalence:
    VECTOR = [
        ("add", {"a": 2, "b": 3}),
        ("add", {"a": -1.5, "b": 0.25}),
        ("add", {"a": 0, "b": 0}),
        ("subtract", {"a": 10, "b": 4}),
        ("subtract", {"a": 1.5, "b": 2.25}),
        ("multiply", {"a": 3, "b": 7}),
        ("multiply", {"a": -2, "b": 0.5}),
        ("add", {"a": 1}),  # validation error
        ("multiply", {"a": "x", "b": 1}),  # validation error
        ("subtract", {}),  # validation error
    ] * 2  # 20 cases

    def test_identical_descriptors_and_results(self, mock_mcp):
        outcomes: dict[str, list] = {}
        descriptor_lists: dict[str, list] = {}
        for kind, config in transports(mock_mcp).items():
            with connect(config) as session:
                descriptors = list_tools(session)
                descriptor_lists[kind] = [(d.name, d.description, d.input_schema) for d in descriptors]
                tools = {d.name: mcp_tool_from_descriptor(d, session) for d in descriptors}
                outcomes[kind] = [
                    run_tool(tools[name], args).to_dict() for name, args in self.VECTOR
                ]
        assert descriptor_lists["stdio"] == descriptor_lists["sse"] == descriptor_lists["streamable_http"]
        assert outcomes["stdio"] == outcomes["sse"] == outcomes["streamable_http"]

    def test_mock_records_no_protocol_violations(self, mock_mcp):
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            list_tools(session)
            list_tools(session)
        assert mock_mcp.core.violations == []


class TestConcurrentCalls:
    def test_twenty_parallel_calls_correlate(self, mock_mcp):
        with connect(McpTransportConfig.sse(mock_mcp.sse_url)) as session:
            def call(i: int):
                result = session.request("tools/call", {"name": "add", "arguments": {"a": i, "b": i}})
                return i, result["content"][0]["text"]

            with ThreadPoolExecutor(max_workers=20) as pool:
                for i, text in pool.map(call, range(20)):
                    assert text == str(2 * i)
        assert mock_mcp.core.violations == []


class TestRegisterFromMcp:
    def test_sse_kind_selected_from_url(self, mock_mcp):
        config = McpTransportConfig.for_url(mock_mcp.sse_url)
        assert config.kind == "sse"
        assert McpTransportConfig.for_url(mock_mcp.http_url).kind == "streamable_http"

    def test_stdio_with_namespace(self, mock_mcp):
        registry = ToolRegistry()
        count = register_from_mcp(registry, mock_mcp.stdio_config, with_namespace=True)
        assert count == 3
        assert "mock_mcp.add" in registry
        assert registry.call_tool("mock_mcp.add", {"a": 2, "b": 3}).value == 5
        registry.close()

    def test_unreachable_url_leaves_registry_unchanged(self):
        registry = ToolRegistry()
        with pytest.raises(ConnectError):
            register_from_mcp(registry, "http://127.0.0.1:9/sse", with_namespace=True)
        assert len(registry) == 0

    def test_session_closed_with_registry(self, mock_mcp):
        registry = ToolRegistry()
        register_from_mcp(registry, mock_mcp.sse_url)
        session = registry._sessions[0]
        registry.close()
        with pytest.raises(TransportClosed):
            session.request("tools/list")
