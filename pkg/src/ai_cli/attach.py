"""Attach AI help to the host process's line editor at load time.

The shim targets processes whose command-line editing goes through the
GNU Readline shared library (for Python hosts, anything using the stdlib
readline module).  All access to the editor happens through the dynamic
loader: the library handle is obtained with RTLD_NOLOAD so a host that
never loaded the editor is left completely untouched, and the editing
state (line buffer, cursor, end index) is read and written through the
library's exported global variables.

Injection uses the interpreter's standard preload mechanism: putting the
directory returned by `inject_dir()` on PYTHONPATH makes its
sitecustomize run `on_load()` before the host's own code.  Because a
Python host loads the editor library on import rather than at process
start, `on_load` installs an import watcher when the library is not yet
mapped and completes the attachment the moment the host pulls it in.

The HTTP stack is initialized lazily on the first hotkey press (see
`backend.lazy_init`), never at load time, so hosts running under
restrictive syscall filters are not disturbed.
"""

from __future__ import annotations

import ctypes
import importlib.machinery
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from . import backend, chat
from . import config as config_mod
from .keys import KeyParseError, KeySequence, parse_key_sequence

FUNCTION_NAME = b"ai-help"

# int (*rl_command_func_t)(int count, int key)
RL_COMMAND_FUNC = ctypes.CFUNCTYPE(ctypes.c_int, ctypes.c_int, ctypes.c_int)

# The complete ABI surface the shim needs: read the buffer, replace the
# buffer, bind a key, and read/append history.  If any of these cannot be
# resolved the shim stays inert.
REQUIRED_FUNCTIONS = (
    "rl_bind_keyseq",     # int (const char *keyseq, rl_command_func_t *)
    "rl_add_defun",       # int (const char *name, rl_command_func_t *, int)
    "rl_insert_text",     # int (const char *)
    "rl_delete_text",     # int (int from, int to)
    "rl_redisplay",       # void (void)
    "history_list",       # HIST_ENTRY ** (void)
    "add_history",        # void (const char *)
)
REQUIRED_VARIABLES = (
    "rl_line_buffer",     # char *
    "rl_point",           # int
    "rl_end",             # int
    "history_length",     # int
)

_SONAME_CANDIDATES = (
    "libreadline.so.8",
    "libreadline.so.7",
    "libreadline.so.6",
    "libreadline.so",
)


class _HistEntry(ctypes.Structure):
    # Leading fields of readline's HIST_ENTRY; only `line` is read.
    _fields_ = [("line", ctypes.c_char_p),
                ("timestamp", ctypes.c_char_p),
                ("data", ctypes.c_void_p)]


def _loaded_library_path() -> Optional[str]:
    """Path of the readline library already mapped into this process."""
    try:
        with open("/proc/self/maps") as maps:
            for line in maps:
                target = line.split()[-1]
                if "/libreadline.so" in target:
                    return target
    except OSError:
        pass
    return None


class ReadlineAbi:
    """Typed ctypes facade over the resolved editor symbols."""

    def __init__(self, lib: ctypes.CDLL):
        self._lib = lib
        self.symbols: dict[str, int] = {}
        for name in REQUIRED_FUNCTIONS:
            func = getattr(lib, name)  # raises AttributeError if missing
            self.symbols[name] = ctypes.cast(func, ctypes.c_void_p).value or 0
        self._line_buffer = ctypes.c_char_p.in_dll(lib, "rl_line_buffer")
        self._point = ctypes.c_int.in_dll(lib, "rl_point")
        self._end = ctypes.c_int.in_dll(lib, "rl_end")
        self._history_length = ctypes.c_int.in_dll(lib, "history_length")
        for name in REQUIRED_VARIABLES:
            self.symbols[name] = ctypes.addressof(
                {"rl_line_buffer": self._line_buffer, "rl_point": self._point,
                 "rl_end": self._end,
                 "history_length": self._history_length}[name])

        lib.rl_bind_keyseq.argtypes = [ctypes.c_char_p, RL_COMMAND_FUNC]
        lib.rl_bind_keyseq.restype = ctypes.c_int
        lib.rl_add_defun.argtypes = [ctypes.c_char_p, RL_COMMAND_FUNC, ctypes.c_int]
        lib.rl_add_defun.restype = ctypes.c_int
        lib.rl_insert_text.argtypes = [ctypes.c_char_p]
        lib.rl_insert_text.restype = ctypes.c_int
        lib.rl_delete_text.argtypes = [ctypes.c_int, ctypes.c_int]
        lib.rl_delete_text.restype = ctypes.c_int
        lib.rl_redisplay.argtypes = []
        lib.rl_redisplay.restype = None
        lib.history_list.argtypes = []
        lib.history_list.restype = ctypes.POINTER(ctypes.POINTER(_HistEntry))
        lib.add_history.argtypes = [ctypes.c_char_p]
        lib.add_history.restype = None

    @classmethod
    def from_loaded_library(cls) -> Optional["ReadlineAbi"]:
        """Resolve the ABI of an already-mapped editor library, if any.

        RTLD_NOLOAD guarantees detection never pulls the library in.
        """
        noload = os.RTLD_LAZY | os.RTLD_NOLOAD
        candidates = []
        mapped = _loaded_library_path()
        if mapped:
            candidates.append(mapped)
        candidates.extend(_SONAME_CANDIDATES)
        for name in candidates:
            try:
                lib = ctypes.CDLL(name, mode=noload)
            except OSError:
                continue
            try:
                return cls(lib)
            except (AttributeError, ValueError):
                return None  # mapped, but symbols missing: stay inert
        return None

    def buffer_text(self) -> str:
        return (self._line_buffer.value or b"").decode("utf-8", "replace")

    def replace_buffer(self, text: str) -> None:
        """All-or-nothing buffer swap: clear, insert, cursor to end, redraw.

        Uses the editor's own text operations so undo and cursor state
        stay consistent.
        """
        self._lib.rl_delete_text(0, self._end.value)
        self._point.value = 0
        self._lib.rl_insert_text(text.encode("utf-8"))
        self._point.value = self._end.value
        self._lib.rl_redisplay()

    def bell(self) -> None:
        try:
            os.write(2, b"\x07")
        except OSError:
            pass

    def register_function(self, callback: RL_COMMAND_FUNC) -> bool:
        return self._lib.rl_add_defun(FUNCTION_NAME, callback, -1) == 0

    def bind(self, wire: bytes, callback: RL_COMMAND_FUNC) -> bool:
        return self._lib.rl_bind_keyseq(wire, callback) == 0

    def history_tail(self, limit: int) -> list[str]:
        if limit <= 0:
            return []
        entries = self._lib.history_list()
        if not entries:
            return []
        length = self._history_length.value
        lines = []
        for i in range(max(0, length - limit), length):
            entry = entries[i]
            if entry:
                lines.append((entry.contents.line or b"").decode("utf-8", "replace"))
        return lines

    def append_history(self, line: str) -> None:
        self._lib.add_history(line.encode("utf-8"))


@dataclass
class AttachState:
    """What load-time attachment detected and installed in this process."""

    detected: bool = False
    bound: bool = False
    program: str = ""
    resolved: dict[str, int] = field(default_factory=dict)
    watching: bool = False
    failed_prompts: set[str] = field(default_factory=set)

    @property
    def init_count(self) -> int:
        return backend.init_count()


_state: Optional[AttachState] = None
_abi: Optional[ReadlineAbi] = None
_config: Optional[config_mod.Config] = None
_callback = None  # keepalive: the ctypes thunk must outlive the binding
_watcher = None


def host_program_name(argv: Optional[list[str]] = None) -> str:
    """Base name of the host program, for profile lookup.

    For an interpreter invocation the script's base name (without .py) is
    the program identity; a bare interpreter is just "python".
    """
    argv = argv if argv is not None else getattr(sys, "argv", [])
    first = os.path.basename(argv[0]) if argv and argv[0] else ""
    if first.startswith("python"):
        for arg in argv[1:]:
            if arg and not arg.startswith("-"):
                first = os.path.basename(arg)
                break
        else:
            return "python"
    if not first:
        return "python"
    if first.endswith(".py"):
        first = first[:-3]
    return first


def inject_dir() -> str:
    """Directory to put on PYTHONPATH so new interpreters load the shim."""
    return str(os.path.join(os.path.dirname(os.path.abspath(__file__)), "_inject"))


def _log(message: str) -> None:
    # Diagnostics never touch the host's standard streams; they go to the
    # file named by the log_file config key, or nowhere.
    path = _config.log_file if _config else None
    if not path:
        return
    try:
        with open(path, "a") as log:
            log.write(f"{time.strftime('%H:%M:%S')} ai-cli: {message}\n")
    except OSError:
        pass


def detect_abi() -> Optional[ReadlineAbi]:
    """The editor ABI of this process, or None to signal "stay inert"."""
    return ReadlineAbi.from_loaded_library()


def install_binding(abi: ReadlineAbi, seq: KeySequence | str) -> bool:
    """Register the named "ai-help" function and bind the key sequence."""
    global _callback
    if isinstance(seq, str):
        try:
            seq = parse_key_sequence(seq)
        except KeyParseError as exc:
            _log(f"bad key binding: {exc}")
            return False
    callback = RL_COMMAND_FUNC(_hotkey_entry)
    if not abi.register_function(callback):
        return False
    if not abi.bind(seq.wire, callback):
        return False
    _callback = callback
    return True


class _ReadlineImportWatcher:
    """Meta-path hook that completes attachment when the host imports readline."""

    def __init__(self):
        self.fired = False

    def find_spec(self, fullname, path=None, target=None):
        if fullname != "readline" or self.fired:
            return None
        spec = importlib.machinery.PathFinder.find_spec(fullname, None)
        if spec is None or spec.loader is None:
            return None
        self.fired = True
        spec.loader = _NotifyingLoader(spec.loader)
        return spec


class _NotifyingLoader:
    def __init__(self, real):
        self._real = real

    def create_module(self, spec):
        return self._real.create_module(spec)

    def exec_module(self, module):
        self._real.exec_module(module)
        _editor_library_loaded()


def _remove_watcher() -> None:
    global _watcher
    if _watcher is not None:
        try:
            sys.meta_path.remove(_watcher)
        except ValueError:
            pass
        _watcher = None
    if _state is not None:
        _state.watching = False


def _complete_attach(abi: ReadlineAbi) -> None:
    global _abi
    _abi = abi
    _state.detected = True
    _state.resolved = dict(abi.symbols)
    _state.bound = install_binding(abi, _config.key_binding)
    _log(f"attached to {_state.program!r}: bound={_state.bound}")
    if os.environ.get("AI_CLI_EAGER_INIT") == "1":
        # Regression knob: historical eager behavior that initialized the
        # HTTP stack at attach time.  Kept so the syscall-filter tests can
        # assert the lazy path is what keeps filtered hosts alive.
        backend.lazy_init()


def _editor_library_loaded() -> None:
    """Called by the watcher right after the host maps the editor library."""
    _remove_watcher()
    if _state is None or _state.detected:
        return
    try:
        abi = detect_abi()
        if abi is not None:
            _complete_attach(abi)
    except Exception as exc:
        _log(f"late attach failed: {exc!r}")


def on_load(env=None, argv: Optional[list[str]] = None) -> AttachState:
    """Load-time entry point; runs once per process and never raises.

    Loads configuration, detects the editor ABI and installs the binding
    if it is already mapped, otherwise leaves an import watcher behind.
    Performs no network-stack initialization.
    """
    global _state, _config, _watcher
    if _state is not None:
        return _state
    _state = AttachState()
    try:
        environ = env if env is not None else os.environ
        try:
            _config = config_mod.load_config(env=environ, on_warning=_log)
        except config_mod.ConfigError as exc:
            _config = config_mod.Config()
            _log(f"config error, using defaults: {exc}")
        _state.program = host_program_name(argv)
        abi = detect_abi()
        if abi is not None:
            _complete_attach(abi)
        elif _watcher is None:
            _watcher = _ReadlineImportWatcher()
            sys.meta_path.insert(0, _watcher)
            _state.watching = True
    except Exception as exc:
        try:
            _log(f"on_load failed: {exc!r}")
        except Exception:
            pass
    return _state


def harvest_host_history(abi: Optional[ReadlineAbi], limit: int) -> list[str]:
    """The host's most recent history entries, filtered for use as context.

    Entries recorded as failed prompts are marked so the chat-level filter
    drops them.
    """
    if abi is None:
        return []
    raw = abi.history_tail(limit)
    failed = _state.failed_prompts if _state else set()
    marked = [chat.FAILED_MARK + line if line in failed else line
              for line in raw]
    return chat.harvest_history(marked, limit)


def _fail_into_buffer(profile, prompt: str, summary: str) -> None:
    # Error path: the whole buffer becomes one comment line, so nothing
    # executable can appear; the failed prompt is kept in history (marked)
    # so the user can recall it but later requests do not resend it.
    _abi.replace_buffer(f"{profile.comment} ai-cli error: {summary}")
    if _state is not None:
        _state.failed_prompts.add(prompt)
    _abi.append_history(prompt)


def on_hotkey() -> int:
    """Replace the natural-language text in the editing buffer with a command.

    Invoked by the editor via the bound key.  Blank buffer: terminal bell.
    Any failure writes a single comment line instead; the host is never
    disturbed beyond its own editing buffer.
    """
    text = _abi.buffer_text()
    prompt = text.strip()
    if not prompt:
        _abi.bell()
        return 0
    profile = config_mod.profile_for(_config, _state.program)
    try:
        backend.lazy_init()
        history = harvest_host_history(_abi, _config.history_context)
        messages = chat.assemble(
            chat.PromptContext(profile=profile, history=tuple(history),
                               live_prompt=prompt),
            _config.history_context)
        request = backend.ChatRequest(model=_config.model,
                                      temperature=_config.temperature,
                                      messages=tuple(messages))
        response = backend.complete(_config, request)
    except backend.ApiKeyMissing:
        _fail_into_buffer(profile, prompt, "api_key missing")
        return 0
    except backend.BackendError as exc:
        _fail_into_buffer(profile, prompt, exc.summary())
        return 0
    _abi.replace_buffer(response.content)
    return 0


def _hotkey_entry(count: int, key: int) -> int:
    # The raw editor callback; it must never let an exception escape into
    # the host's C stack.
    try:
        return on_hotkey()
    except Exception as exc:
        try:
            _log(f"hotkey failed: {exc!r}")
            if _abi is not None and _config is not None and _state is not None:
                profile = config_mod.profile_for(_config, _state.program)
                _abi.replace_buffer(f"{profile.comment} ai-cli error: internal")
        except Exception:
            pass
        return 0


def current_state() -> Optional[AttachState]:
    return _state


def _reset_for_tests() -> None:
    global _state, _abi, _config, _callback
    _remove_watcher()
    _state = None
    _abi = None
    _config = None
    _callback = None
