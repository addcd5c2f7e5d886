"""nl2cmd: translate one natural-language request into a command.

Standalone front-end over the same config, prompt-assembly, and backend
machinery the shim uses, with no host interposition.  Standard output
carries exactly the command (one trailing newline) so `$(nl2cmd ...)`
composes; everything else goes to standard error.

Exit codes: 0 success, 2 usage/config error, 3 missing API key,
4 backend error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional

from . import backend, chat
from . import config as config_mod

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_KEY = 3
EXIT_BACKEND = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nl2cmd",
        description="Translate a natural-language request into an executable"
                    " command for a given program.",
        epilog="The prompt is taken from the positional arguments, joined by"
               " single spaces, or from standard input if none are given.",
    )
    parser.add_argument("--program", default="bash",
                        help="target program the command is for (default: bash)")
    parser.add_argument("--context", action="append", default=[],
                        metavar="LINE",
                        help="a previously typed command to include as context;"
                             " repeatable")
    parser.add_argument("--model", help="override the configured model")
    parser.add_argument("--temperature", type=float,
                        help="override the configured sampling temperature")
    parser.add_argument("--endpoint", help="override the completions endpoint URL")
    parser.add_argument("--config", metavar="FILE",
                        help="extra config file, applied above all others")
    parser.add_argument("--cost", action="store_true",
                        help="print token usage and cost to standard error")
    parser.add_argument("prompt", nargs="*",
                        help="the natural-language request")
    return parser


def _read_prompt(args: argparse.Namespace) -> str:
    if args.prompt:
        return " ".join(args.prompt).strip()
    return sys.stdin.read().strip()


def run(args: argparse.Namespace) -> int:
    prompt = _read_prompt(args)
    if not prompt:
        print("nl2cmd: empty prompt", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return EXIT_CONFIG

    try:
        config = config_mod.load_config(
            extra_file=args.config,
            on_warning=lambda w: print(f"nl2cmd: warning: {w}", file=sys.stderr))
        overrides = {}
        if args.model is not None:
            overrides["model"] = args.model
        if args.temperature is not None:
            overrides["temperature"] = args.temperature
        if args.endpoint is not None:
            overrides["endpoint_url"] = args.endpoint
        if overrides:
            # Same range validation as any config layer.
            config = dataclasses.replace(config, **overrides)
    except config_mod.ConfigError as exc:
        print(f"nl2cmd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    profile = config_mod.profile_for(config, args.program)
    history = chat.harvest_history(args.context, config.history_context)
    messages = chat.assemble(
        chat.PromptContext(profile=profile, history=tuple(history),
                           live_prompt=prompt),
        config.history_context)
    request = backend.ChatRequest(model=config.model,
                                  temperature=config.temperature,
                                  messages=tuple(messages))
    ledger = backend.UsageLedger.for_config(config)
    try:
        response = backend.complete(config, request, ledger=ledger)
    except backend.ApiKeyMissing as exc:
        print(f"nl2cmd: {exc}", file=sys.stderr)
        return EXIT_NO_KEY
    except backend.BackendError as exc:
        print(f"nl2cmd: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    print(response.content)
    if args.cost:
        usage = ledger.total
        cost = backend.estimate_cost(ledger)
        print(f"nl2cmd: tokens prompt={usage.prompt_tokens}"
              f" completion={usage.completion_tokens}"
              f" total={usage.total_tokens} cost=${cost:.7f}",
              file=sys.stderr)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
