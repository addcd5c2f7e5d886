import json
import subprocess
import sys
import textwrap

import pytest

from ai_cli import attach, backend
from ai_cli.attach import AttachState, harvest_host_history, host_program_name
from ai_cli.backend import Usage
from ai_cli.config import Config, ProgramProfile
from ai_cli.testkit import MockRule, mock_serve
from _helpers import clean_subprocess_env


class FakeAbi:
    """In-process stand-in for the resolved editor ABI."""

    def __init__(self, buffer="", history=None):
        self.buffer = buffer
        self.history = list(history or [])
        self.bells = 0
        self.replacements = []
        self.symbols = {"rl_line_buffer": 1}

    def buffer_text(self):
        return self.buffer

    def replace_buffer(self, text):
        self.buffer = text
        self.replacements.append(text)

    def bell(self):
        self.bells += 1

    def register_function(self, callback):
        return True

    def bind(self, wire, callback):
        return True

    def history_tail(self, limit):
        return self.history[-limit:] if limit > 0 else []

    def append_history(self, line):
        self.history.append(line)


@pytest.fixture
def wired(monkeypatch):
    """Attach module wired to a fake ABI and a local config."""
    def _wire(mock=None, buffer="", history=None, **config_overrides):
        import dataclasses
        values = dict(api_key="test-key")
        if mock is not None:
            values["endpoint_url"] = mock.endpoint
        values.update(config_overrides)
        fake = FakeAbi(buffer=buffer, history=history)
        state = AttachState(detected=True, bound=True, program="bash")
        monkeypatch.setattr(attach, "_abi", fake)
        monkeypatch.setattr(attach, "_config",
                            dataclasses.replace(Config(), **values))
        monkeypatch.setattr(attach, "_state", state)
        return fake, state
    return _wire


@pytest.fixture(autouse=True)
def reset_backend():
    backend._reset_for_tests()
    yield
    backend._reset_for_tests()


# --- hotkey behavior (in process, fake ABI) ----------------------------------

def test_blank_buffer_rings_bell_and_changes_nothing(wired):
    fake, _ = wired(buffer="   ")
    assert attach.on_hotkey() == 0
    assert fake.bells == 1
    assert fake.replacements == []
    assert backend.init_count() == 0


def test_hotkey_replaces_buffer_with_completion(wired):
    rules = [MockRule(match="running", reply="uptime", usage=Usage(167, 1, 168))]
    with mock_serve(rules) as mock:
        fake, _ = wired(mock, buffer="How long has the computer been running?")
        attach.on_hotkey()
    assert fake.buffer == "uptime"
    assert fake.replacements == ["uptime"]
    assert backend.init_count() == 1


def test_hotkey_sends_host_history_as_context(wired):
    # The last history_context entries are taken first, then filtered, so
    # the empty line costs one context slot.
    with mock_serve([]) as mock:
        fake, _ = wired(mock, buffer="do things",
                        history=["ls", "pwd", "", "make"])
        attach.on_hotkey()
        messages = mock.exchanges[0].request.messages
    user_lines = [m.content for m in messages if m.role.value == "user"]
    assert user_lines == ["pwd", "make", "do things"]


def test_http_error_becomes_comment_line(wired):
    with mock_serve([MockRule(status=500)]) as mock:
        fake, state = wired(mock, buffer="explode please")
        attach.on_hotkey()
    assert fake.buffer == "# ai-cli error: http_status 500"
    assert "explode please" in state.failed_prompts
    assert fake.history[-1] == "explode please"


def test_error_path_uses_profile_comment_leader(wired):
    profile = ProgramProfile(program="bash", system_prompt="s", comment="--")
    with mock_serve([MockRule(status=503)]) as mock:
        fake, _ = wired(mock, buffer="boom",
                        profiles={"bash": profile})
        attach.on_hotkey()
    assert fake.buffer.startswith("-- ai-cli error:")


def test_failed_prompt_not_resent_as_context(wired):
    with mock_serve([MockRule(match="boom", status=500), MockRule()]) as mock:
        fake, _ = wired(mock, buffer="boom")
        attach.on_hotkey()           # fails, prompt lands in history marked
        fake.buffer = "next request"
        attach.on_hotkey()           # must not resend "boom" as context
        messages = mock.exchanges[-1].request.messages
    user_lines = [m.content for m in messages if m.role.value == "user"]
    assert "boom" not in user_lines


def test_missing_api_key_becomes_comment_line(wired):
    fake, _ = wired(buffer="hello", api_key=None)
    attach.on_hotkey()
    assert fake.buffer == "# ai-cli error: api_key missing"


def test_raw_callback_never_raises(monkeypatch):
    monkeypatch.setattr(attach, "_abi", None)
    monkeypatch.setattr(attach, "_config", None)
    monkeypatch.setattr(attach, "_state", None)
    assert attach._hotkey_entry(1, 0x61) == 0


def test_install_binding_rejects_malformed_sequence(monkeypatch):
    monkeypatch.setattr(attach, "_config", Config())
    assert attach.install_binding(FakeAbi(), "ctrl-") is False


def test_install_binding_reports_registration_failure(monkeypatch):
    class RefusingAbi(FakeAbi):
        def register_function(self, callback):
            return False

    monkeypatch.setattr(attach, "_config", Config())
    assert attach.install_binding(RefusingAbi(), "ctrl-x a") is False


def test_harvest_host_history_without_abi_is_empty():
    assert harvest_host_history(None, 5) == []


def test_harvest_host_history_applies_limit_then_filter(wired):
    fake, _ = wired(history=["old", "a", "", "b"])
    assert harvest_host_history(fake, 3) == ["a", "b"]


# --- program identity --------------------------------------------------------

@pytest.mark.parametrize("argv,expected", [
    (["/usr/bin/python3", "/x/history_repl.py"], "history_repl"),
    (["python", "tool.py", "--flag"], "tool"),
    (["python3.10"], "python"),
    (["/bin/bash"], "bash"),
    (["gdb", "a.out"], "gdb"),
    ([], "python"),
    ([""], "python"),
])
def test_host_program_name(argv, expected):
    assert host_program_name(argv) == expected


# --- real-ABI behavior (subprocess) -------------------------------------------

KEYMAP_ORACLE = textwrap.dedent("""\
    import ctypes, os
    import ai_cli.attach as attach

    def keymap_entry(wire):
        path = attach._loaded_library_path()
        lib = ctypes.CDLL(path, mode=os.RTLD_LAZY | os.RTLD_NOLOAD)
        lib.rl_function_of_keyseq.argtypes = [ctypes.c_char_p, ctypes.c_void_p]
        lib.rl_function_of_keyseq.restype = ctypes.c_void_p
        lib.rl_named_function.argtypes = [ctypes.c_char_p]
        lib.rl_named_function.restype = ctypes.c_void_p
        return lib.rl_function_of_keyseq(wire, None), lib.rl_named_function(b"ai-help")
""")


def run_py(script, env, timeout=60):
    proc = subprocess.run([sys.executable, "-c", script], env=env,
                          capture_output=True, text=True, timeout=timeout)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_attach_to_host_with_editor_loaded(tmp_path):
    script = KEYMAP_ORACLE + textwrap.dedent("""\
        import json, readline
        state = attach.on_load(argv=["testhost"])
        bound, named = keymap_entry(b"\\x18a")
        print(json.dumps({
            "detected": state.detected, "bound": state.bound,
            "init_count": state.init_count,
            "have_entry": bool(bound), "same_function": bound == named,
            "resolved_nonnull": all(v for v in state.resolved.values()),
        }))
    """)
    out = run_py(script, clean_subprocess_env(tmp_path))
    assert out == {"detected": True, "bound": True, "init_count": 0,
                   "have_entry": True, "same_function": True,
                   "resolved_nonnull": True}


def test_watcher_attaches_when_host_imports_editor_later(tmp_path):
    script = KEYMAP_ORACLE + textwrap.dedent("""\
        import json, sys
        state = attach.on_load(argv=["testhost"])
        before = (state.detected, state.bound, state.watching,
                  "readline" in sys.modules, attach._loaded_library_path())
        import readline
        bound, named = keymap_entry(b"\\x18a")
        print(json.dumps({
            "before": before,
            "detected": state.detected, "bound": state.bound,
            "watcher_gone": not any(isinstance(f, attach._ReadlineImportWatcher)
                                    for f in sys.meta_path),
            "have_entry": bool(bound) and bound == named,
            "init_count": state.init_count,
        }))
    """)
    out = run_py(script, clean_subprocess_env(tmp_path))
    # before the host imports the editor nothing is touched or loaded
    assert out["before"] == [False, False, True, False, None]
    assert out["detected"] and out["bound"] and out["watcher_gone"]
    assert out["have_entry"] is True
    assert out["init_count"] == 0


def test_on_load_is_idempotent(tmp_path):
    script = textwrap.dedent("""\
        import json, readline, sys
        import ai_cli.attach as attach
        first = attach.on_load(argv=["testhost"])
        second = attach.on_load(argv=["other"])
        print(json.dumps({
            "same_state": first is second,
            "bound": second.bound,
            "watchers": sum(isinstance(f, attach._ReadlineImportWatcher)
                            for f in sys.meta_path),
        }))
    """)
    out = run_py(script, clean_subprocess_env(tmp_path))
    assert out == {"same_state": True, "bound": True, "watchers": 0}


def test_configured_binding_overrides_default(tmp_path):
    config = tmp_path / "cfg.ini"
    config.write_text("[binding]\nkey = ctrl-g\n")
    env = clean_subprocess_env(tmp_path)
    env["AI_CLI_CONFIG"] = str(config)
    script = KEYMAP_ORACLE + textwrap.dedent("""\
        import json, readline
        state = attach.on_load(argv=["testhost"])
        at_default, _ = keymap_entry(b"\\x18a")
        at_ctrl_g, named = keymap_entry(b"\\x07")
        print(json.dumps({
            "bound": state.bound,
            "ctrl_g_bound": bool(at_ctrl_g) and at_ctrl_g == named,
            "default_unbound": at_default != named,
        }))
    """)
    out = run_py(script, env)
    assert out == {"bound": True, "ctrl_g_bound": True, "default_unbound": True}


def test_host_without_editor_stays_untouched(tmp_path):
    script = textwrap.dedent("""\
        import json, sys
        import ai_cli.attach as attach
        state = attach.on_load(argv=["pager"])
        print(json.dumps({
            "detected": state.detected, "bound": state.bound,
            "resolved": state.resolved, "init_count": state.init_count,
            "editor_loaded": attach._loaded_library_path() is not None,
            "readline_imported": "readline" in sys.modules,
        }))
    """)
    out = run_py(script, clean_subprocess_env(tmp_path))
    assert out == {"detected": False, "bound": False, "resolved": {},
                   "init_count": 0, "editor_loaded": False,
                   "readline_imported": False}


def test_missing_symbol_means_absent_and_inert(tmp_path):
    # A mapped editor library that lacks a required symbol must be treated
    # exactly like no editor at all.
    script = textwrap.dedent("""\
        import json, readline
        import ai_cli.attach as attach
        attach.REQUIRED_FUNCTIONS = attach.REQUIRED_FUNCTIONS + ("rl_no_such_entry",)
        state = attach.on_load(argv=["testhost"])
        print(json.dumps({
            "absent": attach.detect_abi() is None,
            "detected": state.detected, "bound": state.bound,
            "resolved": state.resolved, "init_count": state.init_count,
        }))
    """)
    out = run_py(script, clean_subprocess_env(tmp_path))
    assert out == {"absent": True, "detected": False, "bound": False,
                   "resolved": {}, "init_count": 0}


def test_on_load_survives_broken_config(tmp_path):
    config = tmp_path / "cfg.ini"
    config.write_text("[general]\ntemperature = lava\n")
    env = clean_subprocess_env(tmp_path)
    env["AI_CLI_CONFIG"] = str(config)
    script = textwrap.dedent("""\
        import json, readline
        import ai_cli.attach as attach
        state = attach.on_load(argv=["testhost"])
        print(json.dumps({"detected": state.detected, "bound": state.bound}))
    """)
    out = run_py(script, env)
    assert out == {"detected": True, "bound": True}
