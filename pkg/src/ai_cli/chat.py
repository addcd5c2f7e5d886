"""Prompt assembly: turn a profile, history, and live prompt into messages.

The message list sent to the model is always, in order: one system
message, the profile's canned exchanges (multi-shot priming), the most
recent previously typed commands as user messages, and the live prompt as
the final user message.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import ProgramProfile

# Prefix marking a history entry as a natural-language prompt that failed;
# such entries never re-enter the conversation context.
FAILED_MARK = "\x00"


class Role(enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str


@dataclass(frozen=True)
class PromptContext:
    """Everything one model call is built from."""

    profile: ProgramProfile
    history: tuple[str, ...]
    live_prompt: str


def standing_instructions(comment_leader: str = "#") -> str:
    """The instruction text appended to every system prompt by default."""
    return (
        "Reply with a single executable command and nothing else:"
        " no explanations and no formatting."
        " If the answer is plain text rather than a command, write every"
        f" line as a comment starting with {comment_leader} so that"
        " nothing you reply can be executed by accident."
    )


def system_prompt(profile: ProgramProfile) -> ChatMessage:
    """The system message for a profile: its prompt plus standing instructions.

    A profile may override the standing instructions; an empty override
    suppresses them entirely.
    """
    instructions = profile.instructions
    if instructions is None:
        instructions = standing_instructions(profile.comment)
    parts = [part for part in (profile.system_prompt, instructions) if part]
    return ChatMessage(role=Role.SYSTEM, content=" ".join(parts))


def harvest_history(raw: Iterable[str], limit: int) -> list[str]:
    """Keep the last ``limit`` usable history lines, oldest first.

    Empty lines and entries marked as failed prompts are dropped.
    """
    kept = [line for line in raw
            if line.strip() and not line.startswith(FAILED_MARK)]
    if limit <= 0:
        return []
    return kept[-limit:]


def assemble(ctx: PromptContext, history_limit: int) -> list[ChatMessage]:
    """Build the full message list for one request.

    The result always has 1 + 2 * len(exchanges) + min(history_limit,
    len(history)) + 1 messages; contents are taken verbatim.  History must
    already be filtered (see harvest_history).  Raises ValueError on a
    blank live prompt.
    """
    if not ctx.live_prompt.strip():
        raise ValueError("live prompt is empty")
    messages = [system_prompt(ctx.profile)]
    for user, assistant in ctx.profile.exchanges:
        messages.append(ChatMessage(role=Role.USER, content=user))
        messages.append(ChatMessage(role=Role.ASSISTANT, content=assistant))
    limit = max(0, history_limit)
    recent: Sequence[str] = ctx.history[-limit:] if limit else ()
    messages.extend(ChatMessage(role=Role.USER, content=line) for line in recent)
    messages.append(ChatMessage(role=Role.USER, content=ctx.live_prompt))
    return messages
