"""Optional system-call tracing for PTY sessions.

Requires an external tracer (strace); when it is missing, tests that need
tracing must skip rather than fail.  The trace records syscall names with
timestamps so they can be attributed before or after the first hotkey.
"""

from __future__ import annotations

import re
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .pty_harness import PtyResult, PtySession, Step, pty_run

_TRACE_LINE = re.compile(r"^(?:\d+\s+)?(\d+\.\d+)\s+(\w+)\(")


class TracerUnavailable(RuntimeError):
    """No syscall tracer on this platform; callers should skip."""


def tracer_available() -> bool:
    return shutil.which("strace") is not None


@dataclass
class SyscallTrace:
    calls: list[tuple[float, str]]   # (epoch timestamp, syscall name)
    result: PtyResult

    def names(self) -> list[str]:
        return [name for _, name in self.calls]

    def names_before_first_hotkey(self) -> list[str]:
        if not self.result.hotkey_times:
            return self.names()
        cutoff = self.result.hotkey_times[0]
        return [name for ts, name in self.calls if ts < cutoff]

    def names_after_first_hotkey(self) -> list[str]:
        if not self.result.hotkey_times:
            return []
        cutoff = self.result.hotkey_times[0]
        return [name for ts, name in self.calls if ts >= cutoff]


def trace_syscalls(session: PtySession, steps: Sequence[Step] = (),
                   trace_set: Optional[str] = None) -> SyscallTrace:
    """Run the session under the tracer and parse the syscall log.

    Raises TracerUnavailable when no tracer is installed.
    """
    strace = shutil.which("strace")
    if strace is None:
        raise TracerUnavailable("strace not found on PATH")
    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "trace.log"
        argv = [strace, "-f", "-qq", "-ttt", "-o", str(log)]
        if trace_set:
            argv += ["-e", f"trace={trace_set}"]
        traced = PtySession(argv=argv + session.argv, env=session.env)
        result = pty_run(traced, steps)
        calls = []
        if log.exists():
            for line in log.read_text(errors="replace").splitlines():
                match = _TRACE_LINE.match(line.strip())
                if match:
                    calls.append((float(match.group(1)), match.group(2)))
        return SyscallTrace(calls=calls, result=result)
