import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hostutil import host


@pytest.fixture(scope="session")
def seccomp_supported() -> bool:
    probe = subprocess.run([sys.executable, host("seccomp_repl.py")],
                           input=b"", capture_output=True, timeout=30)
    return probe.returncode == 0


@pytest.fixture
def mock_config(tmp_path):
    """Write a config file pointing the shim at a given mock server."""
    def _write(mock, extra=""):
        path = tmp_path / "host-config.ini"
        path.write_text(f"[general]\nendpoint = {mock.endpoint}\n" + extra)
        return str(path)
    return _write
