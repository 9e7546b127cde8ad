from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agents_room.backends import EchoBackend, Generation, ScriptedBackend
from agents_room.errors import BackendUnavailable, ForeignEntry, MissingTask, RoutingError, StepFailed
from agents_room.orchestrator import (
    SEQUENCES,
    OrchestratorConfig,
    Variant,
    agent_for,
    load_trace,
    next_agent,
    run,
    run_to_dir,
    write_run,
)
from agents_room.prompts import render_agent_prompt
from agents_room.scratchpad import (
    PLANNING_LABELS,
    WRITING_LABELS,
    AgentLabel,
    Scratchpad,
    ScratchpadEntry,
    parse_scratchpad,
    scratchpad_init,
)

from conftest import TASK, lighthouse_pad

PLAN_WRITE_ORDER = [
    "CONFLICT", "CHARACTER", "SETTING", "PLOT",
    "EXPOSITION", "RISING_ACTION", "CLIMAX", "FALLING_ACTION", "RESOLUTION",
]  # fmt: skip


def _fill(s: Scratchpad, labels) -> Scratchpad:
    for label in labels:
        s = s.append(ScratchpadEntry(label, f"text {label.name}"))
    return s


def test_next_agent_table():
    task = scratchpad_init("T")
    assert next_agent(task, Variant.PLAN_WRITE) is AgentLabel.CONFLICT
    assert next_agent(_fill(task, PLANNING_LABELS + WRITING_LABELS), Variant.PLAN_WRITE) is None
    assert next_agent(_fill(task, PLANNING_LABELS), Variant.PLAN) is AgentLabel.FINALIZER
    assert next_agent(task, Variant.WRITE) is AgentLabel.EXPOSITION
    assert next_agent(task, Variant.E2E) is AgentLabel.FINALIZER


def test_next_agent_foreign_entry():
    with pytest.raises(ForeignEntry):
        next_agent(lighthouse_pad(1), Variant.WRITE)


def test_next_agent_needs_task():
    with pytest.raises(MissingTask):
        next_agent(Scratchpad(), Variant.PLAN)


@given(st.sampled_from(list(Variant)), st.integers(0, 9))
def test_next_agent_walks_the_sequence(variant, k):
    sequence = SEQUENCES[variant]
    s = _fill(scratchpad_init("T"), sequence[: min(k, len(sequence))])
    expected = sequence[k] if k < len(sequence) else None
    assert next_agent(s, variant) is expected
    # pure: same input, same answer
    assert next_agent(s, variant) is expected


def test_plan_write_run_with_scripted_mock():
    trace = run(TASK, OrchestratorConfig(), ScriptedBackend())
    assert [step.label.name for step in trace.steps] == PLAN_WRITE_ORDER
    assert trace.story == (
        "out:EXPOSITION\n\nout:RISING_ACTION\n\nout:CLIMAX\n\nout:FALLING_ACTION\n\nout:RESOLUTION"
    )
    assert len(trace.final_scratchpad) == 10
    assert not trace.budget_exhausted
    for label in PLANNING_LABELS:
        assert f"out:{label.name}" not in trace.story
        assert trace.final_scratchpad.get(label) == f"out:{label.name}"


def test_step_budget():
    trace = run(TASK, OrchestratorConfig(max_steps=3), ScriptedBackend())
    assert [step.label for step in trace.steps] == list(PLANNING_LABELS[:3])
    assert trace.story == ""
    assert trace.budget_exhausted


def test_e2e_with_echo():
    trace = run(TASK, OrchestratorConfig(variant=Variant.E2E), EchoBackend())
    assert len(trace.steps) == 1
    assert trace.steps[0].prompt == TASK
    assert trace.story == TASK


def test_plan_variant_ends_with_finalizer():
    trace = run(TASK, OrchestratorConfig(variant=Variant.PLAN), ScriptedBackend())
    assert trace.labels == PLANNING_LABELS + (AgentLabel.FINALIZER,)
    assert trace.story == "out:FINALIZER"


@pytest.mark.parametrize("variant", list(Variant))
def test_prompts_are_replayable(variant):
    trace = run(TASK, OrchestratorConfig(variant=variant), ScriptedBackend())
    s = scratchpad_init(TASK)
    for step in trace.steps:
        assert step.prompt == render_agent_prompt(agent_for(step.label, variant), s)
        s = s.append(ScratchpadEntry(step.label, step.output))
    assert s == trace.final_scratchpad
    writing = [st.output for st in trace.steps if st.label in WRITING_LABELS + (AgentLabel.FINALIZER,)]
    assert trace.story == "\n\n".join(writing)


def test_routing_per_agent():
    backends = {
        "default": ScriptedBackend(name="zs"),
        "ft": ScriptedBackend({"CLIMAX": "tuned climax"}, name="ft"),
    }
    config = OrchestratorConfig(routing={"CLIMAX": "ft"})
    trace = run(TASK, config, backends)
    by_label = {step.label: step for step in trace.steps}
    assert by_label[AgentLabel.CLIMAX].backend == "ft"
    assert by_label[AgentLabel.CLIMAX].output == "tuned climax"
    assert by_label[AgentLabel.PLOT].backend == "zs"


def test_unroutable_label_fails_before_any_call():
    calls = []

    class Recorder:
        name = "rec"

        def generate(self, request):
            calls.append(request)
            return Generation("x", 0, 1)

    with pytest.raises(RoutingError):
        run(TASK, OrchestratorConfig(routing={"CLIMAX": "missing"}), {"default": Recorder()})
    assert calls == []


class _FailAt:
    name = "flaky"

    def __init__(self, label: str):
        self.label = label
        self.inner = ScriptedBackend()

    def generate(self, request):
        if f"writing the {self.label} part" in request.prompt:
            raise BackendUnavailable("down")
        return self.inner.generate(request)


def test_failure_carries_partial_trace(tmp_path):
    with pytest.raises(StepFailed) as info:
        run_to_dir(TASK, OrchestratorConfig(), _FailAt("Climax"), tmp_path / "run")
    exc = info.value
    assert exc.label == "CLIMAX" and exc.step == 6
    assert len(exc.partial.steps) == 6
    assert len(load_trace(tmp_path / "run")) == 6
    assert isinstance(exc.__cause__, BackendUnavailable)


def test_written_run_layout(tmp_path):
    trace = run(TASK, OrchestratorConfig(), ScriptedBackend())
    out = write_run(trace, tmp_path / "t1" / "plan-write")
    assert sorted(p.name for p in out.iterdir()) == ["scratchpad.txt", "story.txt", "timings.json", "trace.jsonl"]
    records = load_trace(out)
    assert [r["label"] for r in records] == PLAN_WRITE_ORDER
    assert parse_scratchpad((out / "scratchpad.txt").read_text()) == trace.final_scratchpad
    assert (out / "story.txt").read_text() == trace.story + "\n"
    assert json.loads((out / "timings.json").read_text())["steps"] == 9


def test_reruns_are_byte_identical(tmp_path):
    ticks = itertools.count()
    for name in ("a", "b"):
        trace = run(TASK, OrchestratorConfig(seed=3), ScriptedBackend(), clock=lambda: next(ticks) * 0.37)
        write_run(trace, tmp_path / name)
    for file in ("trace.jsonl", "scratchpad.txt", "story.txt"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()


def test_variant_parse():
    assert Variant.parse("plan+write") is Variant.PLAN_WRITE
    assert Variant.parse("PLAN_WRITE") is Variant.PLAN_WRITE
    with pytest.raises(ValueError):
        Variant.parse("plan+write2")


def test_config_validation():
    with pytest.raises(ValueError):
        OrchestratorConfig(max_steps=0)
