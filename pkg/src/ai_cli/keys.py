"""Key sequence parsing: human-readable binding strings to wire bytes.

A binding string is a whitespace-separated list of keystrokes, each either
``ctrl-<c>`` or a single printable character.  "ctrl-x a" becomes the two
bytes 0x18 0x61, exactly what the line editor's keymap consumes.
"""

from __future__ import annotations

from dataclasses import dataclass


class KeyParseError(ValueError):
    """Raised for a binding string that does not denote a key sequence."""


@dataclass(frozen=True)
class KeySequence:
    """A key binding in both human form ("ctrl-x a") and wire form (b"\\x18a")."""

    human: str
    wire: bytes


def parse_key_sequence(text: str) -> KeySequence:
    """Parse a binding string, case-insensitively, into a KeySequence.

    ``ctrl-<c>`` maps to ``ord(c) & 0x1F``; a bare printable character maps
    to itself (letters are lowercased).  Raises KeyParseError otherwise.
    """
    tokens = text.split()
    if not tokens:
        raise KeyParseError("empty key sequence")
    wire = bytearray()
    canonical = []
    for token in tokens:
        lowered = token.lower()
        if lowered.startswith("ctrl-"):
            rest = lowered[len("ctrl-"):]
            if len(rest) != 1 or not rest.isprintable() or rest == " ":
                raise KeyParseError(f"bad keystroke {token!r}: expected ctrl-<char>")
            wire.append(ord(rest.upper()) & 0x1F)
            canonical.append(f"ctrl-{rest}")
        elif len(lowered) == 1 and lowered.isprintable() and lowered != " ":
            wire.append(ord(lowered))
            canonical.append(lowered)
        else:
            raise KeyParseError(f"bad keystroke {token!r}")
    return KeySequence(human=" ".join(canonical), wire=bytes(wire))
