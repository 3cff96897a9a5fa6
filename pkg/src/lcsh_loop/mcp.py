"""Model Context Protocol server exposing LCSH validation tools.

Speaks newline-delimited JSON-RPC 2.0 over stdio, the dominant MCP
transport for locally launched servers. Three tools: search_lcsh,
validate_heading, get_authority. Tool failures become structured
tool-error results, never transport errors; stdout carries protocol
messages only, logs go to stderr.
"""

from __future__ import annotations

import json
import logging
import sys
from enum import Enum

from . import __version__
from .loc import LocClient, LocLookupError, LookupConfig
from .model import CandidateTerm
from .pipeline import SessionConfig, outcome_to_dict, validate_candidates

logger = logging.getLogger(__name__)

SERVER_NAME = "lcsh-loop-mcp"
DEFAULT_PROTOCOL_VERSION = "2025-06-18"
SUPPORTED_PROTOCOL_VERSIONS = ("2025-06-18", "2025-03-26", "2024-11-05")

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


class SessionState(Enum):
    AWAITING_INITIALIZE = "awaiting-initialize"
    READY = "ready"
    CLOSED = "closed"


TOOL_DESCRIPTORS = [
    {
        "name": "search_lcsh",
        "description": (
            "Search the Library of Congress Subject Headings suggest service "
            "for a query term. Returns candidate headings with their "
            "authorized labels and authority URIs."
        ),
        "inputSchema": {
            "type": "object",
            "properties": {
                "query": {"type": "string", "description": "Term to search for."},
                "count": {
                    "type": "integer",
                    "description": "Maximum hits to return (default 10).",
                    "minimum": 1,
                    "maximum": 50,
                },
            },
            "required": ["query"],
        },
    },
    {
        "name": "validate_heading",
        "description": (
            "Validate one candidate subject heading against LCSH. Reports "
            "whether it is the exact authorized form, a variant of an "
            "authorized heading, deprecated, or unknown, with the closest "
            "alternatives and similarity scores."
        ),
        "inputSchema": {
            "type": "object",
            "properties": {
                "term": {"type": "string", "description": "Candidate heading to validate."}
            },
            "required": ["term"],
        },
    },
    {
        "name": "get_authority",
        "description": (
            "Fetch one LCSH authority record by URI: authorized label, "
            "variant labels, broader/narrower/related terms, deprecation."
        ),
        "inputSchema": {
            "type": "object",
            "properties": {
                "uri": {"type": "string", "description": "Authority URI under id.loc.gov."}
            },
            "required": ["uri"],
        },
    },
]


class ToolError(Exception):
    """Raised by tool bodies; rendered as an isError tool result."""


class McpServer:
    def __init__(
        self,
        client: LocClient,
        session_cfg: SessionConfig | None = None,
        protocol_version: str = DEFAULT_PROTOCOL_VERSION,
    ):
        self.client = client
        self.session_cfg = session_cfg or SessionConfig()
        self.protocol_version = protocol_version
        self.state = SessionState.AWAITING_INITIALIZE
        self.negotiated_version: str | None = None

    # -- transport ----------------------------------------------------------

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        for line in stdin:
            if not line.strip():
                continue
            response = self.handle_line(line)
            if response is not None:
                stdout.write(response + "\n")
                stdout.flush()
            if self.state is SessionState.CLOSED:
                break

    def handle_line(self, line: str) -> str | None:
        """Process one wire line; returns the response line, if any."""
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            return self._error(None, PARSE_ERROR, "Parse error")
        if not isinstance(message, dict):
            return self._error(None, INVALID_REQUEST, "Invalid Request")
        msg_id = message.get("id")
        if not isinstance(msg_id, (str, int, type(None))):
            msg_id = None
        method = message.get("method")
        if message.get("jsonrpc") != "2.0" or not isinstance(method, str):
            if "id" in message:
                return self._error(msg_id, INVALID_REQUEST, "Invalid Request")
            return None  # malformed notification: nothing to answer
        params = message.get("params")
        if params is None:
            params = {}
        if not isinstance(params, dict):
            if "id" in message:
                return self._error(msg_id, INVALID_REQUEST, "params must be an object")
            return None
        if "id" in message:
            return self._handle_request(msg_id, method, params)
        self._handle_notification(method)
        return None

    # -- dispatch -----------------------------------------------------------

    def _handle_request(self, msg_id, method: str, params: dict) -> str:
        if method == "initialize":
            return self._initialize(msg_id, params)
        if method == "ping":
            return self._result(msg_id, {})
        if method in ("tools/list", "tools/call") and self.state is not SessionState.READY:
            return self._error(msg_id, INVALID_REQUEST, "server not initialized")
        if method == "tools/list":
            return self._result(msg_id, {"tools": TOOL_DESCRIPTORS})
        if method == "tools/call":
            return self._tools_call(msg_id, params)
        return self._error(msg_id, METHOD_NOT_FOUND, f"Method not found: {method}")

    def _handle_notification(self, method: str) -> None:
        if method == "notifications/initialized":
            return  # state already READY after the initialize response
        logger.info("ignoring notification %s", method)

    def _initialize(self, msg_id, params: dict) -> str:
        if self.state is not SessionState.AWAITING_INITIALIZE:
            return self._error(msg_id, INVALID_REQUEST, "already initialized")
        requested = params.get("protocolVersion")
        if isinstance(requested, str) and requested in SUPPORTED_PROTOCOL_VERSIONS:
            self.negotiated_version = requested
        else:
            self.negotiated_version = self.protocol_version
        self.state = SessionState.READY
        return self._result(
            msg_id,
            {
                "protocolVersion": self.negotiated_version,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": SERVER_NAME, "version": __version__},
            },
        )

    def _tools_call(self, msg_id, params: dict) -> str:
        name = params.get("name")
        arguments = params.get("arguments") or {}
        if not isinstance(name, str) or not isinstance(arguments, dict):
            return self._error(msg_id, INVALID_PARAMS, "tools/call needs name and arguments")
        tools = {
            "search_lcsh": self._tool_search,
            "validate_heading": self._tool_validate,
            "get_authority": self._tool_get_authority,
        }
        tool = tools.get(name)
        if tool is None:
            return self._error(msg_id, INVALID_PARAMS, f"unknown tool: {name}")
        try:
            text, structured = tool(arguments)
        except ToolError as exc:
            return self._tool_error(msg_id, str(exc))
        except LocLookupError as exc:
            return self._tool_error(msg_id, f"lookup failed: {exc}")
        except Exception:
            logger.exception("tool %s crashed", name)
            return self._error(msg_id, INTERNAL_ERROR, "internal error")
        return self._result(
            msg_id,
            {
                "content": [{"type": "text", "text": text}],
                "structuredContent": structured,
                "isError": False,
            },
        )

    # -- tools --------------------------------------------------------------

    def _tool_search(self, args: dict) -> tuple[str, dict]:
        query = args.get("query")
        if not isinstance(query, str) or not query.strip():
            raise ToolError("empty query")
        count = args.get("count", 10)
        if not isinstance(count, int) or count < 1:
            raise ToolError("count must be a positive integer")
        hits = self.client.suggest(query.strip())[:count]
        structured = {
            "hits": [
                {
                    "label": h.label,
                    "authorized_label": h.authorized_label,
                    "uri": h.uri,
                    "match_kind": h.match_kind.value,
                }
                for h in hits
            ]
        }
        if not hits:
            return f'No LCSH matches for "{query.strip()}".', structured
        lines = [f'LCSH matches for "{query.strip()}":']
        for i, hit in enumerate(hits, start=1):
            lines.append(f'{i}. {hit.label} — authorized: {hit.authorized_label} <{hit.uri}>')
        return "\n".join(lines), structured

    def _tool_validate(self, args: dict) -> tuple[str, dict]:
        term = args.get("term")
        if not isinstance(term, str) or not term.strip():
            raise ToolError("empty term")
        [outcome] = validate_candidates(
            [CandidateTerm(text=term.strip())], self.client, self.session_cfg
        )
        structured = outcome_to_dict(outcome)
        lines = [f'"{term.strip()}": {outcome.status.value}']
        if outcome.authorized_label:
            lines.append(f"authorized form: {outcome.authorized_label} <{outcome.resolved_uri}>")
        for match in outcome.matches[:3]:
            lines.append(
                f"alternative: {match.label} (score {match.score.value:.2f}) <{match.uri}>"
            )
        return "\n".join(lines), structured

    def _tool_get_authority(self, args: dict) -> tuple[str, dict]:
        uri = args.get("uri")
        if not isinstance(uri, str) or not uri.strip():
            raise ToolError("empty uri")
        try:
            record = self.client.fetch_authority(uri.strip())
        except LocLookupError as exc:
            raise ToolError(str(exc)) from exc
        structured = {
            "uri": record.uri,
            "authorized_label": record.authorized_label,
            "variant_labels": list(record.variant_labels),
            "broader": [{"uri": u, "label": l} for u, l in record.broader],
            "narrower": [{"uri": u, "label": l} for u, l in record.narrower],
            "related": [{"uri": u, "label": l} for u, l in record.related],
            "deprecated": record.deprecated,
        }
        lines = [f"{record.authorized_label} <{record.uri}>"]
        if record.deprecated:
            lines.append("DEPRECATED heading")
        if record.variant_labels:
            lines.append("variants: " + "; ".join(record.variant_labels))
        for relation, pairs in (
            ("broader", record.broader),
            ("narrower", record.narrower),
            ("related", record.related),
        ):
            if pairs:
                lines.append(f"{relation}: " + "; ".join(label or uri for uri, label in pairs))
        return "\n".join(lines), structured

    # -- wire helpers ---------------------------------------------------------

    @staticmethod
    def _result(msg_id, result: dict) -> str:
        return json.dumps({"jsonrpc": "2.0", "id": msg_id, "result": result}, ensure_ascii=False)

    @staticmethod
    def _error(msg_id, code: int, message: str) -> str:
        return json.dumps(
            {"jsonrpc": "2.0", "id": msg_id, "error": {"code": code, "message": message}},
            ensure_ascii=False,
        )

    def _tool_error(self, msg_id, message: str) -> str:
        return self._result(
            msg_id, {"content": [{"type": "text", "text": message}], "isError": True}
        )


def main() -> None:
    """Entry point for the stdio server; honors the LCSH_LOC_* environment."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    client = LocClient(LookupConfig.from_env())
    McpServer(client).serve()


if __name__ == "__main__":
    main()
