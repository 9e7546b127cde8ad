from __future__ import annotations

import pytest

from agents_room.errors import AgentAlreadyRan, MissingTask, TemplateError
from agents_room.prompts import (
    AGENTS,
    E2E_AGENT,
    AgentKind,
    fill,
    identifiers_phrase,
    identify_agent,
    load_template,
    render_agent_prompt,
)
from agents_room.scratchpad import (
    PLANNING_LABELS,
    WRITING_LABELS,
    AgentLabel,
    Scratchpad,
    ScratchpadEntry,
    scratchpad_init,
)

from conftest import LIGHTHOUSE, TASK, golden, lighthouse_pad

# agent -> number of fixture sections present when it runs
GOLDEN_CASES = [
    (AgentLabel.CONFLICT, 0),
    (AgentLabel.CHARACTER, 1),
    (AgentLabel.SETTING, 2),
    (AgentLabel.PLOT, 3),
    (AgentLabel.EXPOSITION, 4),
    (AgentLabel.RISING_ACTION, 5),
    (AgentLabel.CLIMAX, 6),
    (AgentLabel.FALLING_ACTION, 7),
    (AgentLabel.RESOLUTION, 8),
    (AgentLabel.FINALIZER, 4),
]


@pytest.mark.parametrize("label,upto", GOLDEN_CASES, ids=[c[0].name for c in GOLDEN_CASES])
def test_agent_prompt_matches_golden(label, upto):
    prompt = render_agent_prompt(AGENTS[label], lighthouse_pad(upto))
    assert prompt == golden(label.name.lower())


def test_agent_table():
    assert {a.kind for a in AGENTS.values()} == {AgentKind.PLANNING, AgentKind.WRITING}
    assert [l for l, a in AGENTS.items() if a.kind is AgentKind.PLANNING] == list(PLANNING_LABELS)
    assert set(WRITING_LABELS) < set(AGENTS)
    assert AGENTS[AgentLabel.FINALIZER].kind is AgentKind.WRITING


def test_flat_identifiers():
    s = lighthouse_pad(2)
    assert identifiers_phrase(s) == "a Creative Writing Task, the Central Conflict, and the Character Descriptions"
    assert identifiers_phrase(scratchpad_init("T")) == "a Creative Writing Task"
    assert identifiers_phrase(lighthouse_pad(1)) == "a Creative Writing Task and the Central Conflict"


def test_gold_identifiers():
    s = scratchpad_init("T").append(ScratchpadEntry(AgentLabel.GOLD_RESPONSE, "story"))
    assert identifiers_phrase(s) == "a Creative Writing Task and a User-Written Response"


def test_grouped_identifiers():
    assert identifiers_phrase(lighthouse_pad(7), "grouped") == (
        "a Creative Writing Task, the Content Plan (Central Conflict, Character Descriptions, "
        "Setting, Key Plot Points), and the Previous Parts of the Story (Exposition, Rising Action, Climax)"
    )


def test_write_variant_prompt_has_no_content_plan():
    prompt = render_agent_prompt(AGENTS[AgentLabel.EXPOSITION], scratchpad_init(TASK))
    assert prompt.startswith("Given a Creative Writing Task, continue the story by writing the Exposition part.\n\n")
    assert "Begin your portion" not in prompt
    assert "Do not end the story." in prompt


def test_e2e_prompt_is_the_raw_task():
    assert render_agent_prompt(E2E_AGENT, scratchpad_init(TASK)) == TASK


def test_agent_cannot_run_twice():
    with pytest.raises(AgentAlreadyRan):
        render_agent_prompt(AGENTS[AgentLabel.CONFLICT], lighthouse_pad(1))


def test_missing_task():
    with pytest.raises(MissingTask):
        render_agent_prompt(AGENTS[AgentLabel.CONFLICT], Scratchpad())


def test_fill_is_single_pass():
    assert fill("<scratchpad>|<section>", {"scratchpad": "<section>", "section": "S"}) == "<section>|S"
    assert fill("<unknown>", {}) == "<unknown>"


def test_unknown_template():
    with pytest.raises(TemplateError):
        load_template("no_such_template")


def test_template_dir_override(tmp_path):
    (tmp_path / "plot.txt").write_text("PLOT for <identifiers>\n\n<scratchpad>\n", encoding="utf-8")
    prompt = render_agent_prompt(AGENTS[AgentLabel.PLOT], scratchpad_init("T"), tmp_path)
    assert prompt == "PLOT for a Creative Writing Task\n\n[Creative Writing Task]\nT"
    # files not present in the override fall back to the packaged ones
    assert load_template("setting", tmp_path) == load_template("setting")


def test_template_dir_from_environment(tmp_path, monkeypatch):
    (tmp_path / "e2e.txt").write_text("TASK: <task>", encoding="utf-8")
    monkeypatch.setenv("AGENTS_ROOM_TEMPLATE_DIR", str(tmp_path))
    assert render_agent_prompt(E2E_AGENT, scratchpad_init("T")) == "TASK: T"


@pytest.mark.parametrize("label,upto", GOLDEN_CASES, ids=[c[0].name for c in GOLDEN_CASES])
def test_identify_agent_recovers_label(label, upto):
    assert identify_agent(render_agent_prompt(AGENTS[label], lighthouse_pad(upto))) is label


def test_identify_agent_on_raw_task():
    assert identify_agent(TASK) is None


def test_fixture_covers_all_sections():
    assert list(LIGHTHOUSE) == list(PLANNING_LABELS + WRITING_LABELS[:-1])
