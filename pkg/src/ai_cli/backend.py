"""OpenAI-compatible chat-completions wire protocol, in one file.

Serializes requests, performs the authenticated HTTP POST, parses
responses and the provider's error envelope, and accounts token usage and
cost.  The HTTP stack (and the entropy it consumes) is not touched until
the first real call: importing this module performs no network-related
work whatsoever, which is what keeps the attach path inert inside
syscall-filtered host processes.

Alternative providers would slot in by replacing `complete`; nothing else
in the package knows about HTTP.
"""

from __future__ import annotations

import enum
import json
import threading
import urllib.parse
from dataclasses import dataclass
from typing import Optional

from .chat import ChatMessage
from .config import Config


@dataclass(frozen=True)
class Usage:
    """Token counts reported by the provider for one completion."""

    prompt_tokens: int
    completion_tokens: int
    total_tokens: int

    @property
    def consistent(self) -> bool:
        return self.total_tokens == self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class ChatRequest:
    model: str
    temperature: float
    messages: tuple[ChatMessage, ...]

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")


@dataclass(frozen=True)
class ChatResponse:
    id: str
    model: str
    content: str
    finish_reason: str
    usage: Usage


@dataclass
class UsageLedger:
    """Cumulative token counts for a session, plus the prices that cost them.

    Counters only ever grow; `add` folds in one response's usage.
    """

    price_per_1k_prompt: float = 0.0015
    price_per_1k_completion: float = 0.002
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def add(self, usage: Usage) -> None:
        self.prompt_tokens += usage.prompt_tokens
        self.completion_tokens += usage.completion_tokens

    @property
    def total(self) -> Usage:
        return Usage(self.prompt_tokens, self.completion_tokens,
                     self.prompt_tokens + self.completion_tokens)

    @classmethod
    def for_config(cls, config: Config) -> "UsageLedger":
        return cls(price_per_1k_prompt=config.price_per_1k_prompt,
                   price_per_1k_completion=config.price_per_1k_completion)


def estimate_cost(ledger: UsageLedger) -> float:
    """Accumulated cost in currency units at the ledger's per-1k prices."""
    return (ledger.prompt_tokens * ledger.price_per_1k_prompt
            + ledger.completion_tokens * ledger.price_per_1k_completion) / 1000.0


class ErrorKind(enum.Enum):
    NETWORK = "network"
    TIMEOUT = "timeout"
    HTTP_STATUS = "http_status"
    API_ERROR = "api_error"
    MALFORMED_RESPONSE = "malformed_response"


class BackendError(Exception):
    """A failed completion attempt; `kind` says which way it failed."""

    def __init__(self, kind: ErrorKind, detail: str = "",
                 status: Optional[int] = None,
                 message: Optional[str] = None):
        self.kind = kind
        self.detail = detail
        self.status = status
        # For API_ERROR, the server's error message verbatim.
        self.message = message
        super().__init__(self.summary() + (f": {detail}" if detail else ""))

    def summary(self) -> str:
        """Short machine-stable form, e.g. "http_status 500"."""
        if self.kind is ErrorKind.HTTP_STATUS and self.status is not None:
            return f"http_status {self.status}"
        if self.kind is ErrorKind.API_ERROR and self.message:
            return f"api_error {self.message}"
        return self.kind.value


class ApiKeyMissing(Exception):
    """No API key configured; raised before any network activity."""


def serialize_request(req: ChatRequest) -> bytes:
    """Encode a request as the provider's JSON: model, temperature, messages."""
    payload = {
        "model": req.model,
        "temperature": req.temperature,
        "messages": [
            {"role": m.role.value, "content": m.content} for m in req.messages
        ],
    }
    return json.dumps(payload, ensure_ascii=False).encode("utf-8")


def parse_response(body: bytes | str) -> ChatResponse:
    """Extract the first choice and usage from a completions response body.

    Unknown extra fields are ignored.  Raises BackendError(api_error) for
    the provider's {"error": ...} envelope and malformed_response for
    anything that is not a well-formed completion.
    """
    if isinstance(body, bytes):
        try:
            body = body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BackendError(ErrorKind.MALFORMED_RESPONSE, f"bad encoding: {exc}")
    try:
        obj = json.loads(body)
    except ValueError as exc:
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, f"not JSON: {exc}")
    if not isinstance(obj, dict):
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "top level is not an object")
    if "error" in obj:
        error = obj["error"]
        message = error.get("message") if isinstance(error, dict) else None
        raise BackendError(ErrorKind.API_ERROR, message=message or str(error))
    choices = obj.get("choices")
    if not isinstance(choices, list) or not choices:
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "no choices")
    first = choices[0]
    content = None
    if isinstance(first, dict):
        content = first.get("message", {}).get("content")
    if not isinstance(content, str):
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "choice 0 has no content")
    usage_obj = obj.get("usage")
    if not isinstance(usage_obj, dict):
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "missing usage")
    try:
        usage = Usage(int(usage_obj["prompt_tokens"]),
                      int(usage_obj["completion_tokens"]),
                      int(usage_obj["total_tokens"]))
    except (KeyError, TypeError, ValueError):
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "bad usage object")
    if usage.prompt_tokens < 0 or usage.completion_tokens < 0:
        # negative counts would break the ledger's monotonicity
        raise BackendError(ErrorKind.MALFORMED_RESPONSE, "negative token count")
    if not usage.consistent:
        raise BackendError(
            ErrorKind.MALFORMED_RESPONSE,
            f"usage total {usage.total_tokens} != prompt {usage.prompt_tokens}"
            f" + completion {usage.completion_tokens}")
    return ChatResponse(
        id=str(obj.get("id", "")),
        model=str(obj.get("model", "")),
        content=content,
        finish_reason=str(first.get("finish_reason", "")),
        usage=usage,
    )


# --- lazy HTTP stack ---------------------------------------------------------

_init_lock = threading.Lock()
_init_count = 0
_init_error: Optional[BackendError] = None
_http = None
_session_ledger: Optional[UsageLedger] = None


def lazy_init() -> None:
    """Bring up the HTTP stack on first use; later calls are no-ops.

    Until this runs, the module has made zero network-related system
    interactions.  A failure is cached and re-raised on every call.
    """
    global _init_count, _init_error, _http
    with _init_lock:
        if _init_error is not None:
            raise _init_error
        if _http is not None:
            return
        try:
            import http.client as http_client
            import os
            # Entropy warm-up, the one syscall-visible part of bringing up
            # a TLS-capable stack; done here so it can never happen before
            # the first real request.
            os.urandom(16)
        except Exception as exc:
            _init_error = BackendError(ErrorKind.NETWORK,
                                       f"HTTP stack unavailable: {exc}")
            raise _init_error
        _http = http_client
        _init_count += 1


def init_count() -> int:
    """How many times the HTTP stack has been initialized (0 or 1)."""
    return _init_count


def session_ledger(config: Optional[Config] = None) -> UsageLedger:
    """The process-wide ledger, created from the first config that needs it."""
    global _session_ledger
    if _session_ledger is None:
        _session_ledger = (UsageLedger.for_config(config) if config
                           else UsageLedger())
    return _session_ledger


def _reset_for_tests() -> None:
    global _init_count, _init_error, _http, _session_ledger
    with _init_lock:
        _init_count = 0
        _init_error = None
        _http = None
        _session_ledger = None


def complete(config: Config, req: ChatRequest,
             ledger: Optional[UsageLedger] = None) -> ChatResponse:
    """POST the request to the configured endpoint and parse the answer.

    Authenticates with `Authorization: Bearer <api_key>`; aborts after
    config.timeout_ms.  Usage from a successful response is folded into
    `ledger` (the session ledger by default).  Raises ApiKeyMissing or
    BackendError.
    """
    if not config.api_key:
        raise ApiKeyMissing(
            "no API key: set [auth] api_key or the AI_CLI_API_KEY variable")
    lazy_init()
    url = urllib.parse.urlsplit(config.endpoint_url)
    if url.scheme not in ("http", "https") or not url.hostname:
        raise BackendError(ErrorKind.NETWORK,
                           f"unsupported endpoint URL: {config.endpoint_url!r}")
    timeout = config.timeout_ms / 1000.0
    if url.scheme == "https":
        conn = _http.HTTPSConnection(url.hostname, url.port, timeout=timeout)
    else:
        conn = _http.HTTPConnection(url.hostname, url.port, timeout=timeout)
    path = url.path or "/"
    if url.query:
        path += "?" + url.query
    body = serialize_request(req)
    try:
        try:
            conn.request("POST", path, body=body, headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {config.api_key}",
            })
            response = conn.getresponse()
            data = response.read()
            status = response.status
        except TimeoutError:
            raise BackendError(ErrorKind.TIMEOUT,
                               f"no response within {config.timeout_ms} ms")
        except (ConnectionError, OSError, _http.HTTPException) as exc:
            raise BackendError(ErrorKind.NETWORK, str(exc))
    finally:
        conn.close()
    if status != 200:
        snippet = data[:200].decode("utf-8", "replace")
        raise BackendError(ErrorKind.HTTP_STATUS,
                           detail=snippet, status=status)
    parsed = parse_response(data)
    (ledger if ledger is not None else session_ledger(config)).add(parsed.usage)
    return parsed
