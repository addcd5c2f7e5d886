"""Deterministic offline test infrastructure.

`mock` serves an OpenAI-compatible completions endpoint with scripted
replies and fault injection; `pty_harness` drives host programs in a
pseudo-terminal with the shim injected; `tracing` wraps an optional
system-call tracer.
"""

from .mock import MockRule, MockServer, RecordedExchange, mock_serve, rules_from_ini
from .pty_harness import (Expect, ExpectTimeout, Hotkey, PtyResult, PtySession,
                          Send, Silent, UnexpectedOutput, make_session, pty_run)
from .tracing import TracerUnavailable, trace_syscalls, tracer_available

__all__ = [
    "MockRule", "MockServer", "RecordedExchange", "mock_serve", "rules_from_ini",
    "PtySession", "PtyResult", "Send", "Hotkey", "Expect", "Silent",
    "ExpectTimeout", "UnexpectedOutput", "make_session", "pty_run",
    "TracerUnavailable", "trace_syscalls", "tracer_available",
]
