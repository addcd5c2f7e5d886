"""ai-cli: natural-language command help for interactive command-line tools.

The package has two faces:

* ``ai_cli.attach`` hooks the GNU Readline ABI of the running process and
  binds a hotkey (Ctrl-X A by default) that replaces the natural-language
  text in the editing buffer with an executable command obtained from an
  OpenAI-compatible completions endpoint.
* ``ai_cli.nl2cmd`` is a standalone CLI that does the same translation
  without touching any host process.

``ai_cli.testkit`` provides the offline test infrastructure: a mock
completions server and a pseudo-terminal harness.
"""

__version__ = "0.1.0"
