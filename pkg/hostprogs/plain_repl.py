#!/usr/bin/env python3
"""Minimal line-editing host: reads lines through the editor, echoes them.

Keeps no history (auto-history is switched off), so it exercises the
editor ABI with an empty history list.
"""

import readline
import sys

readline.set_auto_history(False)


def main():
    while True:
        try:
            line = input("> ")
        except EOFError:
            break
        print(f"echo: {line}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
