"""MCP server conformance: state machine, tools, and the stdio wire."""

from __future__ import annotations

import json
import os
import select
import subprocess
import sys

import jsonschema
import pytest

from loc_world import SUBJECTS_BASE
from lcsh_loop.mcp import (
    INVALID_PARAMS,
    INVALID_REQUEST,
    METHOD_NOT_FOUND,
    PARSE_ERROR,
    McpServer,
    SessionState,
)
from lcsh_loop.pipeline import SessionConfig

JSONRPC_RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["jsonrpc", "id"],
    "properties": {
        "jsonrpc": {"const": "2.0"},
        "id": {"type": ["string", "integer", "null"]},
        "result": {"type": "object"},
        "error": {
            "type": "object",
            "required": ["code", "message"],
            "properties": {"code": {"type": "integer"}, "message": {"type": "string"}},
        },
    },
    "oneOf": [{"required": ["result"]}, {"required": ["error"]}],
}

_response_validator = jsonschema.Draft202012Validator(JSONRPC_RESPONSE_SCHEMA)


def assert_protocol_line(line: str) -> dict:
    message = json.loads(line)
    _response_validator.validate(message)
    return message


@pytest.fixture()
def server(replay_client):
    return McpServer(replay_client, session_cfg=SessionConfig())


def rpc(server: McpServer, method: str, params: dict | None = None, msg_id=1) -> dict:
    request: dict = {"jsonrpc": "2.0", "id": msg_id, "method": method}
    if params is not None:
        request["params"] = params
    response = server.handle_line(json.dumps(request))
    assert response is not None
    return assert_protocol_line(response)


def initialize(server: McpServer) -> dict:
    response = rpc(
        server,
        "initialize",
        {"protocolVersion": "2025-06-18", "capabilities": {}, "clientInfo": {"name": "t"}},
        msg_id=0,
    )
    server.handle_line(json.dumps({"jsonrpc": "2.0", "method": "notifications/initialized"}))
    return response


class TestHandshake:
    def test_initialize_response(self, server):
        response = initialize(server)
        result = response["result"]
        assert result["serverInfo"]["name"] == "lcsh-loop-mcp"
        assert result["protocolVersion"] == "2025-06-18"
        assert "tools" in result["capabilities"]
        assert server.state is SessionState.READY

    def test_unsupported_version_falls_back_to_pinned(self, server):
        response = rpc(server, "initialize", {"protocolVersion": "1999-01-01"}, msg_id=5)
        assert response["result"]["protocolVersion"] == server.protocol_version

    def test_double_initialize_rejected(self, server):
        initialize(server)
        response = rpc(server, "initialize", {}, msg_id=9)
        assert response["error"]["code"] == INVALID_REQUEST

    def test_tools_rejected_before_initialize(self, server):
        response = rpc(server, "tools/list")
        assert response["error"]["code"] == INVALID_REQUEST
        assert server.state is SessionState.AWAITING_INITIALIZE
        response = rpc(server, "tools/call", {"name": "search_lcsh", "arguments": {"query": "x"}})
        assert response["error"]["code"] == INVALID_REQUEST

    def test_initialized_notification_gets_no_response(self, server):
        initialize(server)
        line = json.dumps({"jsonrpc": "2.0", "method": "notifications/initialized"})
        assert server.handle_line(line) is None


class TestProtocolErrors:
    def test_parse_error(self, server):
        response = assert_protocol_line(server.handle_line("{this is not json"))
        assert response["error"]["code"] == PARSE_ERROR
        assert response["id"] is None

    def test_invalid_request(self, server):
        response = assert_protocol_line(server.handle_line(json.dumps({"id": 3, "oops": True})))
        assert response["error"]["code"] == INVALID_REQUEST
        assert response["id"] == 3

    def test_method_not_found(self, server):
        initialize(server)
        response = rpc(server, "resources/list", msg_id=4)
        assert response["error"]["code"] == METHOD_NOT_FOUND

    def test_unknown_notification_ignored(self, server):
        initialize(server)
        line = json.dumps({"jsonrpc": "2.0", "method": "notifications/cancelled"})
        assert server.handle_line(line) is None

    def test_ping(self, server):
        assert rpc(server, "ping", msg_id=7)["result"] == {}


class TestToolsList:
    def test_exactly_three_tools(self, server):
        initialize(server)
        response = rpc(server, "tools/list", msg_id=2)
        tools = response["result"]["tools"]
        assert [t["name"] for t in tools] == ["search_lcsh", "validate_heading", "get_authority"]
        for tool in tools:
            assert tool["description"]
            schema = tool["inputSchema"]
            assert schema["type"] == "object"
            assert schema["required"]
            jsonschema.Draft202012Validator.check_schema(schema)


def call_tool(server: McpServer, name: str, arguments: dict, msg_id=10) -> dict:
    response = rpc(server, "tools/call", {"name": name, "arguments": arguments}, msg_id=msg_id)
    return response["result"]


class TestSearchTool:
    def test_search_finds_exact(self, server):
        initialize(server)
        result = call_tool(server, "search_lcsh", {"query": "World Wide Web"})
        assert result["isError"] is False
        assert result["structuredContent"]["hits"][0]["authorized_label"] == "World Wide Web"
        assert "World Wide Web" in result["content"][0]["text"]

    def test_empty_query_is_tool_error(self, server):
        initialize(server)
        result = call_tool(server, "search_lcsh", {"query": "  "})
        assert result["isError"] is True
        assert "empty query" in result["content"][0]["text"]

    def test_nonsense_is_empty_hit_list_not_error(self, server):
        initialize(server)
        result = call_tool(server, "search_lcsh", {"query": "zzqx-nonsense-term-000"})
        assert result["isError"] is False
        assert result["structuredContent"]["hits"] == []

    def test_count_truncates(self, server):
        initialize(server)
        result = call_tool(server, "search_lcsh", {"query": "Subject headings", "count": 1})
        assert len(result["structuredContent"]["hits"]) == 1


class TestValidateTool:
    def test_variant(self, server):
        initialize(server)
        result = call_tool(server, "validate_heading", {"term": "Cookery"})
        assert result["isError"] is False
        assert result["structuredContent"]["status"] == "VariantMatch"
        assert result["structuredContent"]["authorized_label"] == "Cooking"

    def test_exact(self, server):
        initialize(server)
        result = call_tool(server, "validate_heading", {"term": "World Wide Web"})
        assert result["structuredContent"]["status"] == "ExactAuthorized"

    def test_blank_term_is_tool_error(self, server):
        initialize(server)
        result = call_tool(server, "validate_heading", {"term": "   "})
        assert result["isError"] is True

    def test_unreachable_service_is_tool_error(self, fixture_dir, tmp_path):
        import httpx

        from lcsh_loop.loc import LocClient, LookupConfig, Mode

        def handler(request):
            raise httpx.ConnectError("down")

        cfg = LookupConfig(mode=Mode.LIVE, min_request_interval=0.0)
        client = LocClient(cfg, transport=httpx.MockTransport(handler), sleeper=lambda s: None)
        server = McpServer(client)
        initialize(server)
        result = call_tool(server, "validate_heading", {"term": "Cooking"})
        assert result["isError"] is True
        assert "lookup failed" in result["content"][0]["text"]


class TestGetAuthorityTool:
    def test_full_record(self, server):
        initialize(server)
        result = call_tool(server, "get_authority", {"uri": SUBJECTS_BASE + "sh92002816"})
        structured = result["structuredContent"]
        assert structured["authorized_label"] == "World Wide Web"
        assert structured["broader"]
        assert structured["deprecated"] is False

    def test_foreign_uri_is_tool_error(self, server):
        initialize(server)
        result = call_tool(server, "get_authority", {"uri": "https://example.com/x"})
        assert result["isError"] is True

    def test_second_call_hits_cache(self, server, replay_client):
        initialize(server)
        call_tool(server, "get_authority", {"uri": SUBJECTS_BASE + "sh85031730"})
        before = replay_client.backend_requests
        call_tool(server, "get_authority", {"uri": SUBJECTS_BASE + "sh85031730"})
        assert replay_client.backend_requests == before

    def test_unknown_tool_is_invalid_params(self, server):
        initialize(server)
        response = rpc(server, "tools/call", {"name": "nope", "arguments": {}}, msg_id=11)
        assert response["error"]["code"] == INVALID_PARAMS


class McpProcess:
    """Harness speaking newline-delimited JSON-RPC to a spawned server."""

    def __init__(self, fixture_dir):
        env = os.environ.copy()
        env["LCSH_LOC_MODE"] = "replay"
        env["LCSH_LOC_FIXTURE_DIR"] = str(fixture_dir)
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "lcsh_loop.mcp"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            env=env,
        )
        self.stdout_lines: list[str] = []

    def send(self, message: dict) -> None:
        self.proc.stdin.write(json.dumps(message) + "\n")
        self.proc.stdin.flush()

    def send_raw(self, line: str) -> None:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float = 10.0) -> dict:
        ready, _, _ = select.select([self.proc.stdout], [], [], timeout)
        assert ready, "timed out waiting for a server response"
        line = self.proc.stdout.readline()
        assert line, "server closed stdout"
        self.stdout_lines.append(line.rstrip("\n"))
        return assert_protocol_line(line)

    def request(self, method: str, params: dict | None, msg_id) -> dict:
        message: dict = {"jsonrpc": "2.0", "id": msg_id, "method": method}
        if params is not None:
            message["params"] = params
        self.send(message)
        response = self.recv()
        assert response["id"] == msg_id
        return response

    def close(self) -> None:
        self.proc.stdin.close()
        self.proc.wait(timeout=10)


class TestStdioConformance:
    def test_full_session_over_stdio(self, fixture_dir):
        harness = McpProcess(fixture_dir)
        try:
            init = harness.request(
                "initialize",
                {"protocolVersion": "2025-06-18", "capabilities": {}},
                msg_id="init-1",
            )
            assert init["result"]["serverInfo"]["name"] == "lcsh-loop-mcp"
            harness.send({"jsonrpc": "2.0", "method": "notifications/initialized"})

            tools = harness.request("tools/list", None, msg_id=2)
            assert len(tools["result"]["tools"]) == 3

            search = harness.request(
                "tools/call",
                {"name": "search_lcsh", "arguments": {"query": "World Wide Web"}},
                msg_id=3,
            )
            assert search["result"]["isError"] is False

            validate = harness.request(
                "tools/call",
                {"name": "validate_heading", "arguments": {"term": "Cookery"}},
                msg_id=4,
            )
            assert validate["result"]["structuredContent"]["authorized_label"] == "Cooking"

            authority = harness.request(
                "tools/call",
                {"name": "get_authority", "arguments": {"uri": SUBJECTS_BASE + "sh92002816"}},
                msg_id=5,
            )
            assert authority["result"]["structuredContent"]["broader"]

            # protocol-error triplet
            harness.send_raw("{broken json")
            parse_error = harness.recv()
            assert parse_error["error"]["code"] == PARSE_ERROR
            harness.send_raw(json.dumps({"id": 6, "not": "jsonrpc"}))
            invalid = harness.recv()
            assert invalid["error"]["code"] == INVALID_REQUEST
            bad_method = harness.request("no/such/method", None, msg_id=7)
            assert bad_method["error"]["code"] == METHOD_NOT_FOUND

            # every stdout line was schema-validated on receipt; ids are
            # answered exactly once and notifications got no replies
            ids = [json.loads(line).get("id") for line in harness.stdout_lines]
            assert sorted(str(i) for i in ids) == sorted(
                str(i) for i in ["init-1", 2, 3, 4, 5, None, 6, 7]
            )
        finally:
            harness.close()
