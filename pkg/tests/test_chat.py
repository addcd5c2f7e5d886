import random

import pytest

import wire_fixtures as wf
from ai_cli.chat import (ChatMessage, FAILED_MARK, PromptContext, Role,
                         assemble, harvest_history, standing_instructions,
                         system_prompt)
from ai_cli.config import ProgramProfile


def bash_profile(**kwargs):
    defaults = dict(program="bash", system_prompt=wf.BASH_SYSTEM_PROMPT,
                    exchanges=(wf.CANNED_EXCHANGE,))
    defaults.update(kwargs)
    return ProgramProfile(**defaults)


# --- roles and messages ------------------------------------------------------

def test_role_serialized_forms():
    assert [r.value for r in Role] == ["system", "user", "assistant"]


# --- system prompt -----------------------------------------------------------

def test_bash_system_prompt_contains_standard_sentence():
    content = system_prompt(bash_profile()).content
    assert "executable commands" in content
    assert "bash" in content


def test_empty_profile_prompt_yields_exactly_standing_instructions():
    profile = ProgramProfile(program="x", system_prompt="")
    assert system_prompt(profile).content == standing_instructions("#")


def test_gdb_profile_names_gdb():
    profile = ProgramProfile(
        program="gdb", system_prompt="You assist with gdb sessions.")
    message = system_prompt(profile)
    assert message.role is Role.SYSTEM
    assert "gdb" in message.content


def test_standing_instructions_carry_the_comment_leader():
    profile = ProgramProfile(program="sql", system_prompt="s", comment="--")
    assert "--" in system_prompt(profile).content


def test_profile_can_suppress_standing_instructions():
    profile = bash_profile(instructions="")
    assert system_prompt(profile).content == wf.BASH_SYSTEM_PROMPT


def test_profile_can_override_standing_instructions():
    profile = bash_profile(instructions="Only reply in uppercase.")
    content = system_prompt(profile).content
    assert content.endswith("Only reply in uppercase.")
    assert standing_instructions("#") not in content


# --- harvest_history ---------------------------------------------------------

def test_harvest_empty_history():
    assert harvest_history([], 3) == []


def test_harvest_takes_suffix():
    assert harvest_history(["a", "b", "c", "d"], 2) == ["c", "d"]


def test_harvest_drops_empty_lines():
    assert harvest_history(["ls", "", "uptime"], 5) == ["ls", "uptime"]


def test_harvest_drops_failed_prompt_entries():
    raw = ["ls", FAILED_MARK + "how do I frobnicate?", "pwd"]
    assert harvest_history(raw, 5) == ["ls", "pwd"]


def test_harvest_limit_zero():
    assert harvest_history(["a", "b"], 0) == []


# --- assemble ----------------------------------------------------------------

def test_assemble_matches_reference_request_messages():
    profile = bash_profile(instructions="")
    messages = assemble(PromptContext(profile=profile, history=(),
                                      live_prompt=wf.LIVE_PROMPT), 3)
    got = [{"role": m.role.value, "content": m.content} for m in messages]
    assert got == wf.REQUEST_OBJECT["messages"]


def test_assemble_minimal_case_is_system_then_user():
    profile = ProgramProfile(program="x")
    messages = assemble(PromptContext(profile=profile, history=(),
                                      live_prompt="hello"), 3)
    assert [m.role for m in messages] == [Role.SYSTEM, Role.USER]
    assert messages[-1].content == "hello"


def test_assemble_length_formula():
    profile = ProgramProfile(
        program="x", exchanges=(("a", "b"), ("c", "d"), ("e", "f")))
    history = ("h1", "h2", "h3", "h4", "h5")
    messages = assemble(PromptContext(profile=profile, history=history,
                                      live_prompt="go"), 3)
    # 1 + 2*3 + min(3, 5) + 1
    assert len(messages) == 11
    assert [m.content for m in messages[7:10]] == ["h3", "h4", "h5"]


def test_assemble_rejects_blank_prompt():
    profile = ProgramProfile(program="x")
    with pytest.raises(ValueError):
        assemble(PromptContext(profile=profile, history=(), live_prompt="  \n"), 3)


def test_assemble_is_deterministic():
    profile = bash_profile()
    ctx = PromptContext(profile=profile, history=("ls",), live_prompt="why?")
    assert assemble(ctx, 3) == assemble(ctx, 3)


def random_context(rng: random.Random):
    exchanges = tuple(
        (f"q{i}-{rng.randrange(100)}", f"a{i}-{rng.randrange(100)}")
        for i in range(rng.randrange(0, 4)))
    profile = ProgramProfile(program=rng.choice(["bash", "gdb", "bc"]),
                             system_prompt=rng.choice(["", "Assist."]),
                             exchanges=exchanges)
    history = tuple(f"cmd-{rng.randrange(1000)}"
                    for _ in range(rng.randrange(0, 8)))
    prompt = f"prompt-{rng.randrange(1000)}"
    return PromptContext(profile=profile, history=history,
                         live_prompt=prompt), rng.randrange(0, 6)


def test_assemble_ordering_properties_random():
    rng = random.Random(7)
    for _ in range(200):
        ctx, limit = random_context(rng)
        messages = assemble(ctx, limit)
        n = len(ctx.profile.exchanges)
        kept = min(limit, len(ctx.history))
        assert len(messages) == 1 + 2 * n + kept + 1
        assert messages[0].role is Role.SYSTEM
        assert messages[-1].role is Role.USER
        assert messages[-1].content == ctx.live_prompt
        for i in range(1, len(messages) - 1):
            if messages[i].role is Role.ASSISTANT:
                assert messages[i + 1].role is not Role.ASSISTANT
        # canned pairs alternate user/assistant and appear verbatim
        for i, (user, assistant) in enumerate(ctx.profile.exchanges):
            assert messages[1 + 2 * i] == ChatMessage(Role.USER, user)
            assert messages[2 + 2 * i] == ChatMessage(Role.ASSISTANT, assistant)
        # history lines enter verbatim, oldest first
        if kept:
            tail = [m.content for m in messages[1 + 2 * n:-1]]
            assert tail == list(ctx.history[-kept:])
