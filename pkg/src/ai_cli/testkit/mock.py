"""Scriptable mock of the chat-completions endpoint, for offline tests.

Rules are matched in order against the last user message of each request;
the first match wins and a catch-all default always terminates the list.
A rule can delay, return a non-200 status, or substitute a raw body, which
covers the fault-injection cases (timeouts, rate limiting, broken JSON).
Every exchange is recorded in arrival order.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, HTTPServer
from typing import Optional

from ..backend import ChatRequest, Usage
from ..chat import ChatMessage, Role
from ..config import read_ini

COMPLETIONS_PATH = "/v1/chat/completions"

DEFAULT_REPLY = "true"
DEFAULT_USAGE = Usage(10, 1, 11)


@dataclass
class MockRule:
    """One scripted behavior: when `match` hits, answer accordingly."""

    match: str = ""            # substring of the last user message; "" = any
    exact: bool = False        # require the whole message to equal `match`
    reply: str = DEFAULT_REPLY
    usage: Usage = DEFAULT_USAGE
    status: int = 200
    delay_ms: int = 0
    body_override: Optional[bytes] = None  # raw body for malformed-JSON cases

    def matches(self, last_user_message: str) -> bool:
        if self.exact:
            return last_user_message == self.match
        return self.match in last_user_message


@dataclass
class RecordedExchange:
    raw: bytes
    request: Optional[ChatRequest]  # None when the body was not a valid request
    timestamp: float
    rule: MockRule
    headers: dict[str, str] = field(default_factory=dict)


def _parse_request(raw: bytes) -> Optional[ChatRequest]:
    try:
        obj = json.loads(raw.decode("utf-8"))
        messages = tuple(
            ChatMessage(role=Role(m["role"]), content=m["content"])
            for m in obj["messages"])
        return ChatRequest(model=obj.get("model", ""),
                           temperature=obj.get("temperature", 0.0),
                           messages=messages)
    except Exception:
        return None


def _last_user_message(request: Optional[ChatRequest]) -> str:
    if request is None:
        return ""
    for message in reversed(request.messages):
        if message.role is Role.USER:
            return message.content
    return ""


class _Handler(BaseHTTPRequestHandler):
    server_version = "ai-cli-mock/0.1"
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # tests want silence
        pass

    def do_POST(self):
        mock: MockServer = self.server.mock  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        if self.path != COMPLETIONS_PATH:
            self.send_error(404, "unknown path")
            return
        request = _parse_request(raw)
        rule = mock._select_rule(_last_user_message(request))
        mock.exchanges.append(RecordedExchange(
            raw=raw, request=request, timestamp=time.time(), rule=rule,
            headers={k: v for k, v in self.headers.items()}))
        if rule.delay_ms:
            time.sleep(rule.delay_ms / 1000.0)
        model = request.model if request else "mock-model"
        body = rule.body_override
        if body is None:
            body = json.dumps(mock._response_object(rule, model)).encode("utf-8")
        try:
            self.send_response(rule.status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        except (BrokenPipeError, ConnectionResetError):
            pass  # client gave up (timeout tests)


class MockServer:
    """Loopback completions server; handles one request at a time."""

    def __init__(self, rules: list[MockRule] | tuple[MockRule, ...] = (),
                 host: str = "127.0.0.1", port: int = 0):
        self.rules = list(rules)
        if not any(r.match == "" and not r.exact for r in self.rules):
            self.rules.append(MockRule())  # the catch-all default
        self.exchanges: list[RecordedExchange] = []
        self._counter = 0
        self._httpd = HTTPServer((host, port), _Handler)
        self._httpd.mock = self  # type: ignore[attr-defined]
        self._started = False
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        daemon=True)

    def _select_rule(self, last_user_message: str) -> MockRule:
        for rule in self.rules:
            if rule.matches(last_user_message):
                return rule
        return self.rules[-1]

    def _response_object(self, rule: MockRule, model: str) -> dict:
        self._counter += 1
        return {
            "id": f"chatcmpl-mock{self._counter:06d}",
            "object": "chat.completion",
            "created": int(time.time()),
            "model": model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": rule.reply},
                "finish_reason": "stop",
            }],
            # total is derived, so generated bodies always satisfy the
            # usage invariant; use body_override to break it on purpose
            "usage": {
                "prompt_tokens": rule.usage.prompt_tokens,
                "completion_tokens": rule.usage.completion_tokens,
                "total_tokens": (rule.usage.prompt_tokens
                                 + rule.usage.completion_tokens),
            },
        }

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}{COMPLETIONS_PATH}"

    def start(self) -> "MockServer":
        if not self._thread.is_alive() and not self._started:
            self._started = True
            self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def mock_serve(rules: list[MockRule] | tuple[MockRule, ...] = (),
               port: int = 0) -> MockServer:
    """Start a mock server on an ephemeral (or given) loopback port."""
    return MockServer(rules, port=port).start()


def rules_from_ini(text: str) -> list[MockRule]:
    """Read rules from the same INI dialect the config uses, one per section.

    Recognized keys: match, exact, reply, prompt_tokens, completion_tokens,
    status, delay_ms, body_override.
    """
    rules = []
    for section in read_ini(text):
        values = {item.key: item.value for item in section.items}
        prompt_tokens = int(values.get("prompt_tokens", DEFAULT_USAGE.prompt_tokens))
        completion_tokens = int(values.get("completion_tokens",
                                           DEFAULT_USAGE.completion_tokens))
        override = values.get("body_override")
        rules.append(MockRule(
            match=values.get("match", ""),
            exact=values.get("exact", "no").lower() in ("yes", "true", "1"),
            reply=values.get("reply", DEFAULT_REPLY),
            usage=Usage(prompt_tokens, completion_tokens,
                        prompt_tokens + completion_tokens),
            status=int(values.get("status", 200)),
            delay_ms=int(values.get("delay_ms", 0)),
            body_override=override.encode("utf-8") if override is not None else None,
        ))
    return rules
