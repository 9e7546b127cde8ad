from __future__ import annotations

import json
from pathlib import Path

import pytest

from agents_room.scratchpad import AgentLabel, Scratchpad, ScratchpadEntry, scratchpad_init

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
FIXTURES = HERE / "fixtures"

TASK = "Write a story about a lighthouse keeper who finds a message in a bottle."

# Section bodies used by the golden prompt files, in plan+write call order.
LIGHTHOUSE = {
    AgentLabel.CONFLICT: "Mara wants to answer the message before the storm season closes the harbor.",
    AgentLabel.CHARACTER: "- Mara: quiet, sixty, keeps a logbook of every ship.",
    AgentLabel.SETTING: "A rocky island off the coast of Maine, in 1962.",
    AgentLabel.PLOT: "- Mara finds the bottle.\n- She rows to the mainland.",
    AgentLabel.EXPOSITION: "Mara found the bottle at dawn.",
    AgentLabel.RISING_ACTION: "She rowed out before the tide turned.",
    AgentLabel.CLIMAX: "The storm broke over the bay.",
    AgentLabel.FALLING_ACTION: "By morning the sea was flat again.",
}


def lighthouse_pad(upto: int) -> Scratchpad:
    """Task plus the first ``upto`` sections of the lighthouse fixture."""
    s = scratchpad_init(TASK)
    for label in list(LIGHTHOUSE)[:upto]:
        s = s.append(ScratchpadEntry(label, LIGHTHOUSE[label]))
    return s


def golden(name: str) -> str:
    text = (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")
    assert text.endswith("\n")
    return text[:-1]


def sample_stories() -> list[dict]:
    with open(FIXTURES / "sample_stories.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@pytest.fixture
def stories() -> list[dict]:
    return sample_stories()


@pytest.fixture(autouse=True)
def _no_ambient_config(monkeypatch):
    for var in ("AGENTS_ROOM_CONFIG", "AGENTS_ROOM_TEMPLATE_DIR", "AGENTS_ROOM_SEED", "AGENTS_ROOM_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)
