import sys
import textwrap
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ai_cli import config as config_mod


@pytest.fixture
def isolated_config(monkeypatch, tmp_path):
    """Keep tests away from any real system or user configuration."""
    monkeypatch.setattr(config_mod, "SYSTEM_CONFIG_PATH",
                        tmp_path / "etc" / "config.ini")
    env = {"HOME": str(tmp_path / "home")}
    (tmp_path / "home").mkdir()
    return env


@pytest.fixture
def write_config(tmp_path):
    """Write a config file and return its path."""
    def _write(text, name="config.ini"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(text))
        return path
    return _write
