#!/usr/bin/env python3
"""Host that reads raw standard input and never loads any line editor.

Used as the inertness control: with the shim preloaded its behavior must
be byte-identical to a run without it.
"""

import sys


def main():
    while True:
        sys.stdout.write("> ")
        sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        print(f"echo: {line.rstrip(chr(10))}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
