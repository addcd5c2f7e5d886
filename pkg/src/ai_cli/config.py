"""Layered configuration: locate, parse, and merge INI-style config files.

Search order (ascending precedence): the bundled default file, the
system-wide file, the per-user file, a file in the current directory, and
finally a file named by the AI_CLI_CONFIG environment variable.  Later
layers win key by key; per-program prompt profiles replace wholesale.

File dialect: ``[section]`` headers, ``key = value`` lines, full-line
``#`` comments, and multi-line values via a trailing backslash (the
continuation line is appended after a newline, verbatim).  There is no
quoting or escaping, so values may freely contain ``#`` and ``=``.

Sections: ``[general]`` for model parameters, ``[binding]`` for the
hotkey, ``[auth]`` for the API key, and one ``[prompt-<program>]`` per
host program (``system``, ``instructions``, ``comment`` and numbered
``user-N`` / ``assistant-N`` keys for the canned exchanges).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional

from .keys import KeyParseError, KeySequence, parse_key_sequence

ENV_CONFIG_FILE = "AI_CLI_CONFIG"
ENV_API_KEY = "AI_CLI_API_KEY"

SYSTEM_CONFIG_PATH = Path("/etc/ai-cli/config.ini")
USER_CONFIG_RELPATH = Path("ai-cli") / "config.ini"
CWD_CONFIG_NAME = ".ai-cli.ini"

# Canned exchanges allowed per profile.
MAX_EXCHANGES = 3

DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_TEMPERATURE = 0.7
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_BINDING = "ctrl-x a"
DEFAULT_HISTORY_CONTEXT = 3
DEFAULT_TIMEOUT_MS = 30000
DEFAULT_PRICE_PER_1K_PROMPT = 0.0015
DEFAULT_PRICE_PER_1K_COMPLETION = 0.002
DEFAULT_COMMENT_LEADER = "#"

FALLBACK_SYSTEM_TEMPLATE = (
    "You are an assistant who provides executable commands"
    " for the {program} command-line interface."
)


class ConfigError(Exception):
    """Configuration file problem: bad syntax, bad value, or bad structure."""

    def __init__(self, message: str, line: Optional[int] = None,
                 path: Optional[Path] = None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ConfigSource:
    """One configuration file on disk; higher precedence overrides lower."""

    path: Path
    precedence: int


@dataclass(frozen=True)
class ProgramProfile:
    """Per-program prompt material: system prompt plus canned exchanges.

    ``exchanges`` is an ordered tuple of (user, assistant) pairs, so the
    strict user/assistant alternation is structural.  ``instructions``
    overrides the standing instruction text appended to the system prompt;
    None means the default text, "" suppresses it.
    """

    program: str
    system_prompt: str = ""
    exchanges: tuple[tuple[str, str], ...] = ()
    comment: str = DEFAULT_COMMENT_LEADER
    instructions: Optional[str] = None

    def __post_init__(self):
        if len(self.exchanges) > MAX_EXCHANGES:
            raise ValueError(
                f"profile {self.program!r} has {len(self.exchanges)} exchanges;"
                f" the maximum is {MAX_EXCHANGES}"
            )


@dataclass
class PartialConfig:
    """The keys one file defines; None means "not set here"."""

    model: Optional[str] = None
    temperature: Optional[float] = None
    api_key: Optional[str] = None
    endpoint_url: Optional[str] = None
    key_binding: Optional[KeySequence] = None
    history_context: Optional[int] = None
    timeout_ms: Optional[int] = None
    price_per_1k_prompt: Optional[float] = None
    price_per_1k_completion: Optional[float] = None
    log_file: Optional[str] = None
    profiles: dict[str, ProgramProfile] = field(default_factory=dict)
    # Unknown (section, key) -> value pairs, retained so newer configs
    # degrade gracefully; each one also produces a warning.
    unknown: dict[tuple[str, str], str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Config:
    """The effective configuration after merging all layers."""

    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    api_key: Optional[str] = None
    endpoint_url: str = DEFAULT_ENDPOINT
    key_binding: KeySequence = field(
        default_factory=lambda: parse_key_sequence(DEFAULT_BINDING))
    history_context: int = DEFAULT_HISTORY_CONTEXT
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    price_per_1k_prompt: float = DEFAULT_PRICE_PER_1K_PROMPT
    price_per_1k_completion: float = DEFAULT_PRICE_PER_1K_COMPLETION
    log_file: Optional[str] = None
    profiles: dict[str, ProgramProfile] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature {self.temperature} outside [0, 2]")
        if self.history_context < 0:
            raise ConfigError("history_context must be >= 0")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be > 0")
        if self.price_per_1k_prompt < 0 or self.price_per_1k_completion < 0:
            raise ConfigError("token prices must be >= 0")

    def as_layer(self) -> PartialConfig:
        """This configuration expressed as a (fully populated) layer."""
        return PartialConfig(
            model=self.model,
            temperature=self.temperature,
            api_key=self.api_key,
            endpoint_url=self.endpoint_url,
            key_binding=self.key_binding,
            history_context=self.history_context,
            timeout_ms=self.timeout_ms,
            price_per_1k_prompt=self.price_per_1k_prompt,
            price_per_1k_completion=self.price_per_1k_completion,
            log_file=self.log_file,
            profiles=dict(self.profiles),
        )


def bundled_default_path() -> Path:
    return Path(__file__).with_name("default.ini")


def user_config_path(env: Mapping[str, str]) -> Optional[Path]:
    base = env.get("XDG_CONFIG_HOME")
    if base:
        return Path(base) / USER_CONFIG_RELPATH
    home = env.get("HOME")
    if home:
        return Path(home) / ".config" / USER_CONFIG_RELPATH
    return None


def locate_sources(env: Mapping[str, str], cwd: Path | str) -> list[ConfigSource]:
    """Return existing config files in ascending precedence order.

    Missing files are skipped silently; the precedence rank reflects the
    file's fixed slot in the search order, so ranks are unique.
    """
    candidates: list[Optional[Path]] = [
        bundled_default_path(),
        SYSTEM_CONFIG_PATH,
        user_config_path(env),
        Path(cwd) / CWD_CONFIG_NAME,
    ]
    override = env.get(ENV_CONFIG_FILE)
    candidates.append(Path(override) if override else None)
    sources = []
    for rank, path in enumerate(candidates):
        if path is not None and path.is_file():
            sources.append(ConfigSource(path=path, precedence=rank))
    return sources


# --- low-level INI reading -------------------------------------------------

@dataclass(frozen=True)
class IniItem:
    key: str
    value: str
    line: int


@dataclass(frozen=True)
class IniSection:
    name: str
    line: int
    items: tuple[IniItem, ...]


def read_ini(text: str) -> list[IniSection]:
    """Split INI text into sections, resolving backslash continuations.

    Raises ConfigError with the offending line number on malformed input.
    """
    sections: list[IniSection] = []
    name: Optional[str] = None
    section_line = 0
    items: list[IniItem] = []

    def flush():
        if name is not None:
            sections.append(IniSection(name, section_line, tuple(items)))

    lines = text.split("\n")
    i = 0
    while i < len(lines):
        lineno = i + 1
        raw = lines[i]
        i += 1
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigError(f"malformed section header {stripped!r}", lineno)
            flush()
            name = stripped[1:-1].strip()
            section_line = lineno
            items = []
            continue
        if "=" not in raw:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        if name is None:
            raise ConfigError(f"key {stripped!r} appears before any [section]", lineno)
        key, _, value = raw.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno)
        value = value.strip()
        # Trailing backslash: value continues on the next physical line,
        # joined with a newline, continuation kept verbatim.
        while value.endswith("\\"):
            if i >= len(lines):
                raise ConfigError("dangling line continuation", i)
            value = value[:-1] + "\n" + lines[i]
            i += 1
        items.append(IniItem(key, value, lineno))
    flush()
    return sections


def serialize_source(partial: PartialConfig) -> str:
    """Write a layer in the canonical form read_ini/parse_source accept.

    Inverse of parse_source for well-formed layers (values must not have
    leading/trailing whitespace on any line nor end a line with ``\\``).
    """
    def emit(key: str, value: str) -> str:
        return f"{key} = " + value.replace("\n", "\\\n")

    out: list[str] = []
    general = [
        ("model", partial.model),
        ("temperature", partial.temperature),
        ("endpoint", partial.endpoint_url),
        ("history_context", partial.history_context),
        ("timeout_ms", partial.timeout_ms),
        ("price_per_1k_prompt", partial.price_per_1k_prompt),
        ("price_per_1k_completion", partial.price_per_1k_completion),
        ("log_file", partial.log_file),
    ]
    if any(v is not None for _, v in general):
        out.append("[general]")
        out.extend(emit(k, str(v)) for k, v in general if v is not None)
    if partial.key_binding is not None:
        out.append("[binding]")
        out.append(emit("key", partial.key_binding.human))
    if partial.api_key is not None:
        out.append("[auth]")
        out.append(emit("api_key", partial.api_key))
    for program in sorted(partial.profiles):
        profile = partial.profiles[program]
        out.append(f"[prompt-{program}]")
        out.append(emit("system", profile.system_prompt))
        if profile.instructions is not None:
            out.append(emit("instructions", profile.instructions))
        out.append(emit("comment", profile.comment))
        for n, (user, assistant) in enumerate(profile.exchanges, start=1):
            out.append(emit(f"user-{n}", user))
            out.append(emit(f"assistant-{n}", assistant))
    return "\n".join(out) + ("\n" if out else "")


# --- schema-level parsing ---------------------------------------------------

def _parse_float(item: IniItem, lo: float, hi: float) -> float:
    try:
        value = float(item.value)
    except ValueError:
        raise ConfigError(f"{item.key}: not a number: {item.value!r}", item.line)
    if not lo <= value <= hi:
        raise ConfigError(f"{item.key}: {value} outside [{lo:g}, {hi:g}]", item.line)
    return value


def _parse_int(item: IniItem, minimum: int) -> int:
    try:
        value = int(item.value)
    except ValueError:
        raise ConfigError(f"{item.key}: not an integer: {item.value!r}", item.line)
    if value < minimum:
        raise ConfigError(f"{item.key}: {value} is below {minimum}", item.line)
    return value


def _parse_general(partial: PartialConfig, section: IniSection):
    for item in section.items:
        if item.key == "model":
            partial.model = item.value
        elif item.key == "temperature":
            partial.temperature = _parse_float(item, 0.0, 2.0)
        elif item.key == "endpoint":
            if not item.value.startswith(("http://", "https://")):
                raise ConfigError(
                    f"endpoint must be an absolute http(s) URL: {item.value!r}",
                    item.line)
            partial.endpoint_url = item.value
        elif item.key == "history_context":
            partial.history_context = _parse_int(item, 0)
        elif item.key == "timeout_ms":
            partial.timeout_ms = _parse_int(item, 1)
        elif item.key == "price_per_1k_prompt":
            partial.price_per_1k_prompt = _parse_float(item, 0.0, float("inf"))
        elif item.key == "price_per_1k_completion":
            partial.price_per_1k_completion = _parse_float(item, 0.0, float("inf"))
        elif item.key == "log_file":
            partial.log_file = item.value
        else:
            _note_unknown(partial, section, item)


def _parse_profile(partial: PartialConfig, section: IniSection,
                   max_exchanges: int):
    program = section.name[len("prompt-"):]
    if not program:
        raise ConfigError("empty program name in [prompt-] section", section.line)
    system = ""
    comment = DEFAULT_COMMENT_LEADER
    instructions: Optional[str] = None
    users: dict[int, IniItem] = {}
    assistants: dict[int, IniItem] = {}
    for item in section.items:
        if item.key == "system":
            system = item.value
        elif item.key == "comment":
            comment = item.value
        elif item.key == "instructions":
            instructions = item.value
        elif item.key.startswith(("user-", "assistant-")):
            role, _, num = item.key.partition("-")
            if not num.isdigit() or int(num) < 1:
                raise ConfigError(f"bad exchange key {item.key!r}", item.line)
            (users if role == "user" else assistants)[int(num)] = item
        else:
            _note_unknown(partial, section, item)

    count = len(users)
    if count > max_exchanges:
        raise ConfigError(
            f"profile {program!r} defines {count} exchanges;"
            f" the maximum is {max_exchanges}", section.line)
    if set(users) != set(range(1, count + 1)):
        raise ConfigError(
            f"profile {program!r}: user-N keys must be numbered 1..{count}"
            " without gaps", section.line)
    if set(assistants) != set(users):
        raise ConfigError(
            f"profile {program!r}: every user-N needs a matching assistant-N",
            section.line)
    exchanges = tuple(
        (users[n].value, assistants[n].value) for n in range(1, count + 1))
    partial.profiles[program] = ProgramProfile(
        program=program, system_prompt=system, exchanges=exchanges,
        comment=comment, instructions=instructions)


def _note_unknown(partial: PartialConfig, section: IniSection, item: IniItem):
    partial.unknown[(section.name, item.key)] = item.value
    partial.warnings.append(
        f"line {item.line}: unknown key {item.key!r} in [{section.name}]")


def parse_source(text: str, max_exchanges: int = MAX_EXCHANGES) -> PartialConfig:
    """Parse one file's content into the keys it defines.

    Unknown keys and sections are retained and warned about rather than
    rejected; syntax and value errors raise ConfigError with a line number.
    """
    partial = PartialConfig()
    for section in read_ini(text):
        if section.name == "general":
            _parse_general(partial, section)
        elif section.name == "binding":
            for item in section.items:
                if item.key == "key":
                    try:
                        partial.key_binding = parse_key_sequence(item.value)
                    except KeyParseError as exc:
                        raise ConfigError(str(exc), item.line)
                else:
                    _note_unknown(partial, section, item)
        elif section.name == "auth":
            for item in section.items:
                if item.key == "api_key":
                    partial.api_key = item.value
                else:
                    _note_unknown(partial, section, item)
        elif section.name.startswith("prompt-"):
            _parse_profile(partial, section, max_exchanges)
        else:
            for item in section.items:
                _note_unknown(partial, section, item)
            if not section.items:
                partial.warnings.append(
                    f"line {section.line}: unknown section [{section.name}]")
    return partial


_SCALAR_FIELDS = (
    "model", "temperature", "api_key", "endpoint_url", "key_binding",
    "history_context", "timeout_ms", "price_per_1k_prompt",
    "price_per_1k_completion", "log_file",
)


def merge(layers: Iterable[PartialConfig]) -> Config:
    """Merge layers (ascending precedence) onto the documented defaults.

    Scalar keys are last-writer-wins; a later layer's profile replaces an
    earlier profile for the same program wholesale.
    """
    values: dict[str, object] = {}
    profiles: dict[str, ProgramProfile] = {}
    for layer in layers:
        for name in _SCALAR_FIELDS:
            value = getattr(layer, name)
            if value is not None:
                values[name] = value
        profiles.update(layer.profiles)
    return Config(profiles=profiles, **values)


def profile_for(config: Config, program: str) -> ProgramProfile:
    """The configured profile for ``program``, or a generic fallback.

    The fallback's system prompt names the program in the standard
    assistant sentence and carries no canned exchanges.
    """
    found = config.profiles.get(program)
    if found is not None:
        return found
    return ProgramProfile(
        program=program,
        system_prompt=FALLBACK_SYSTEM_TEMPLATE.format(program=program),
    )


def load_config(env: Optional[Mapping[str, str]] = None,
                cwd: Path | str | None = None,
                extra_file: Path | str | None = None,
                on_warning: Optional[Callable[[str], None]] = None) -> Config:
    """Locate, parse, and merge every applicable config file.

    ``extra_file`` (e.g. from a CLI flag) is parsed last, above the
    environment override.  A missing api_key falls back to AI_CLI_API_KEY.
    """
    if env is None:
        env = os.environ
    if cwd is None:
        cwd = Path.cwd()
    sources = locate_sources(env, cwd)
    paths = [source.path for source in sources]
    if extra_file is not None:
        extra = Path(extra_file)
        if not extra.is_file():
            raise ConfigError("config file not found", path=extra)
        paths.append(extra)
    layers = []
    for path in paths:
        try:
            layer = parse_source(path.read_text())
        except ConfigError as exc:
            raise ConfigError(str(exc), path=path) from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path=path) from exc
        if on_warning:
            for warning in layer.warnings:
                on_warning(f"{path}: {warning}")
        layers.append(layer)
    config = merge(layers)
    if config.api_key is None and env.get(ENV_API_KEY):
        config = replace(config, api_key=env[ENV_API_KEY])
    return config
