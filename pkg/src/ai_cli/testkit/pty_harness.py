"""Pseudo-terminal harness: run a host under the shim and drive it by keys.

A session spawns the host inside a PTY with the preload environment set
(PYTHONPATH pointing at the shim's inject directory, AI_CLI_CONFIG naming
a config whose endpoint must be loopback).  Steps send raw bytes or the
hotkey wire form, expect substrings with a timeout, or assert silence.
The full transcript and the child's exit status or fatal signal come back
in the result; a kernel-terminated child is how a syscall-filter
regression shows up.
"""

from __future__ import annotations

import os
import pty
import select
import time
import urllib.parse
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from ..attach import inject_dir
from ..config import ENV_API_KEY, ENV_CONFIG_FILE, parse_source

DEFAULT_HOTKEY_WIRE = b"\x18a"  # ctrl-x a
DEFAULT_EXPECT_TIMEOUT = 5.0


@dataclass
class PtySession:
    argv: list[str]
    env: dict[str, str]


@dataclass
class Send:
    data: bytes


@dataclass
class Hotkey:
    wire: bytes = DEFAULT_HOTKEY_WIRE


@dataclass
class Expect:
    text: bytes | str
    timeout: float = DEFAULT_EXPECT_TIMEOUT


@dataclass
class Silent:
    duration: float = 0.5


Step = Union[Send, Hotkey, Expect, Silent]


@dataclass
class PtyResult:
    transcript: bytes
    exit_status: Optional[int]   # None when killed by a signal
    signal: Optional[int]        # None on a normal exit
    hotkey_times: list[float] = field(default_factory=list)


class ExpectTimeout(AssertionError):
    def __init__(self, wanted: bytes, transcript: bytes):
        self.wanted = wanted
        self.transcript = transcript
        super().__init__(
            f"expected {wanted!r} within the timeout; transcript so far:\n"
            f"{transcript.decode('utf-8', 'replace')}")


class UnexpectedOutput(AssertionError):
    def __init__(self, data: bytes):
        super().__init__(f"expected silence, got {data!r}")


def make_session(argv: Sequence[str],
                 config_path: Optional[str] = None,
                 inject: bool = True,
                 extra_env: Optional[dict[str, str]] = None) -> PtySession:
    """A session environment wired for offline use.

    With `inject` the shim's preload directory leads PYTHONPATH.  The
    config file, when given, must point the shim at a loopback endpoint;
    pty_run refuses anything else.
    """
    env = dict(os.environ)
    env["TERM"] = "dumb"
    if inject:
        existing = env.get("PYTHONPATH")
        env["PYTHONPATH"] = inject_dir() + (os.pathsep + existing if existing else "")
    if config_path is not None:
        env[ENV_CONFIG_FILE] = str(config_path)
    env.setdefault(ENV_API_KEY, "mock-key")
    if extra_env:
        env.update(extra_env)
    return PtySession(argv=list(argv), env=env)


def _assert_loopback(env: dict[str, str]) -> None:
    """The harness never lets a session talk to a non-local endpoint."""
    config_path = env.get(ENV_CONFIG_FILE)
    if not config_path or not os.path.isfile(config_path):
        return
    with open(config_path) as handle:
        partial = parse_source(handle.read())
    if partial.endpoint_url is None:
        return
    host = urllib.parse.urlsplit(partial.endpoint_url).hostname
    if host not in ("127.0.0.1", "localhost", "::1"):
        raise ValueError(f"session endpoint {partial.endpoint_url!r} is not loopback")


def _drain(fd: int, transcript: bytearray, duration: float) -> bytes:
    """Read whatever arrives within `duration`; returns the new bytes."""
    new = bytearray()
    if fd < 0:
        time.sleep(duration)
        return b""
    deadline = time.monotonic() + duration
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            ready, _, _ = select.select([fd], [], [], remaining)
        except OSError:
            break
        if not ready:
            continue
        try:
            data = os.read(fd, 4096)
        except OSError:
            break
        if not data:
            break
        transcript.extend(data)
        new.extend(data)
    return bytes(new)


def pty_run(session: PtySession, steps: Sequence[Step],
            exit_timeout: float = 10.0) -> PtyResult:
    """Run the host through the scripted steps and collect the outcome.

    Raises ExpectTimeout / UnexpectedOutput on a failed step (transcript
    attached).  After the steps the master side is closed and the child
    reaped; a crash is reported through PtyResult.signal.
    """
    _assert_loopback(session.env)
    pid, fd = pty.fork()
    if pid == 0:  # child: become the host
        try:
            os.execvpe(session.argv[0], session.argv, session.env)
        finally:
            os._exit(127)

    transcript = bytearray()
    hotkey_times: list[float] = []
    scan_from = 0
    try:
        for step in steps:
            if isinstance(step, (Send, Hotkey)):
                if isinstance(step, Hotkey):
                    hotkey_times.append(time.time())
                    payload = step.wire
                else:
                    payload = step.data
                try:
                    os.write(fd, payload)
                except OSError as exc:
                    raise ExpectTimeout(payload, bytes(transcript)) from exc
            elif isinstance(step, Expect):
                wanted = step.text if isinstance(step.text, bytes) \
                    else step.text.encode("utf-8")
                deadline = time.monotonic() + step.timeout
                while bytes(transcript).find(wanted, scan_from) < 0:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise ExpectTimeout(wanted, bytes(transcript))
                    if not _drain(fd, transcript, min(remaining, 0.1)):
                        continue
                scan_from = bytes(transcript).find(wanted, scan_from) + len(wanted)
            elif isinstance(step, Silent):
                new = _drain(fd, transcript, step.duration)
                if new:
                    raise UnexpectedOutput(new)
            else:
                raise TypeError(f"unknown step {step!r}")

        # Steps done: give the host a moment to finish, then reap it.
        status: Optional[int] = None

        def poll_exit(seconds: float) -> Optional[int]:
            deadline = time.monotonic() + seconds
            while time.monotonic() < deadline:
                done, wait_status = os.waitpid(pid, os.WNOHANG)
                if done == pid:
                    return wait_status
                _drain(fd, transcript, 0.05)
            return None

        status = poll_exit(exit_timeout)
        if status is None:
            try:
                os.close(fd)  # hang up the terminal
            except OSError:
                pass
            fd = -1
            status = poll_exit(2.0)
        if status is None:
            os.kill(pid, 9)
            _, status = os.waitpid(pid, 0)
        pid = 0
    finally:
        if pid:
            try:
                os.kill(pid, 9)
                os.waitpid(pid, 0)
            except (ProcessLookupError, ChildProcessError):
                pass
        if fd >= 0:
            try:
                _drain(fd, transcript, 0.05)
                os.close(fd)
            except OSError:
                pass

    exit_status = os.WEXITSTATUS(status) if os.WIFEXITED(status) else None
    term_signal = os.WTERMSIG(status) if os.WIFSIGNALED(status) else None
    return PtyResult(transcript=bytes(transcript), exit_status=exit_status,
                     signal=term_signal, hotkey_times=hotkey_times)
