#!/usr/bin/env python3
"""Line-editing host that records every accepted line in the editor history.

The interposition tests type commands here and then check that the shim
forwards them as conversation context.
"""

import readline  # noqa: F401  (loads the editor; auto-history stays on)
import sys


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
