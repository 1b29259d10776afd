import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

SCENARIOS = ROOT / "assets" / "scenarios"


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


@pytest.fixture
def sync_document() -> dict:
    """Decoded config_a_sync.json, safe to mutate."""
    return json.loads((SCENARIOS / "config_a_sync.json").read_text(encoding="utf-8"))


@pytest.fixture
def two_node_document() -> dict:
    return json.loads((SCENARIOS / "two_node.json").read_text(encoding="utf-8"))


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario document to a temporary file and return its path."""
    def write(document, name="scenario.json") -> str:
        path = tmp_path / name
        text = document if isinstance(document, str) else json.dumps(document)
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


@pytest.fixture
def history_db(tmp_path) -> str:
    return str(tmp_path / "history.db")
