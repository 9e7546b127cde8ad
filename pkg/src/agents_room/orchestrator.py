"""Deterministic orchestrator.

The orchestrator is a lookup table: for each variant, a fixed agent sequence;
the next agent is the first one whose section is missing from the scratchpad.
:func:`run` drives that table against a backend, appending every output to
the scratchpad and every writing-agent output to the story.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .backends import Backend, GenerationRequest, DEFAULT_MAX_OUTPUT_TOKENS
from .errors import AgentsRoomError, ForeignEntry, MissingTask, RoutingError, StepFailed
from .prompts import AGENTS, E2E_AGENT, AgentKind, AgentSpec, render_agent_prompt
from .scratchpad import (
    PLANNING_LABELS,
    WRITING_LABELS,
    AgentLabel,
    Scratchpad,
    ScratchpadEntry,
    normalize_text,
    render_scratchpad,
    scratchpad_init,
)

logger = logging.getLogger(__name__)

STORY_SEPARATOR = "\n\n"
DEFAULT_MAX_STEPS = 16


class Variant(enum.Enum):
    E2E = "e2e"
    PLAN = "plan"
    WRITE = "write"
    PLAN_WRITE = "plan-write"

    @classmethod
    def parse(cls, text: str) -> Variant:
        key = text.strip().lower().replace("_", "-").replace("+", "-")
        for variant in cls:
            if variant.value == key:
                return variant
        raise ValueError(f"unknown variant {text!r}")


SEQUENCES: dict[Variant, tuple[AgentLabel, ...]] = {
    Variant.E2E: (AgentLabel.FINALIZER,),
    Variant.PLAN: PLANNING_LABELS + (AgentLabel.FINALIZER,),
    Variant.WRITE: WRITING_LABELS,
    Variant.PLAN_WRITE: PLANNING_LABELS + WRITING_LABELS,
}


def agent_for(label: AgentLabel, variant: Variant) -> AgentSpec:
    if variant is Variant.E2E and label is AgentLabel.FINALIZER:
        return E2E_AGENT
    return AGENTS[label]


def next_agent(s: Scratchpad, variant: Variant) -> AgentLabel | None:
    """Next label to run, or ``None`` when the variant's sequence is done."""
    if not s.entries or s.entries[0].label is not AgentLabel.TASK:
        raise MissingTask("scratchpad must begin with the writing task")
    sequence = SEQUENCES[variant]
    allowed = set(sequence) | {AgentLabel.TASK}
    for label in s.labels:
        if label not in allowed:
            raise ForeignEntry(f"{label.name} is not part of the {variant.value} variant")
    for label in sequence:
        if label not in s:
            return label
    return None


@dataclass(frozen=True)
class OrchestratorConfig:
    variant: Variant = Variant.PLAN_WRITE
    max_steps: int = DEFAULT_MAX_STEPS
    # label name -> backend name; "default" covers unlisted labels
    routing: Mapping[str, str] = field(default_factory=dict)
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperature: float = 1.0
    seed: int | None = None
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    def route(self, label: AgentLabel) -> str:
        return self.routing.get(label.name, self.routing.get("default", "default"))


@dataclass(frozen=True)
class StepRecord:
    index: int
    label: AgentLabel
    prompt: str
    output: str
    wall_ms: float = 0.0
    backend: str = ""
    input_tokens: int = 0
    output_tokens: int = 0

    def to_json(self) -> dict:
        # wall time is kept out of the persisted trace so reruns are byte-identical
        return {
            "index": self.index,
            "label": self.label.name,
            "backend": self.backend,
            "prompt": self.prompt,
            "output": self.output,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }


@dataclass(frozen=True)
class RunTrace:
    task: str
    variant: Variant
    steps: tuple[StepRecord, ...]
    final_scratchpad: Scratchpad
    story: str
    budget_exhausted: bool = False

    @property
    def labels(self) -> tuple[AgentLabel, ...]:
        return tuple(step.label for step in self.steps)


def _resolve(backends: Backend | Mapping[str, Backend], config: OrchestratorConfig, label: AgentLabel) -> Backend:
    if not isinstance(backends, Mapping):
        return backends
    name = config.route(label)
    try:
        return backends[name]
    except KeyError:
        raise RoutingError(f"no backend named {name!r} for agent {label.name}") from None


def run(
    task: str,
    config: OrchestratorConfig,
    backends: Backend | Mapping[str, Backend],
    *,
    clock: Callable[[], float] = time.perf_counter,
) -> RunTrace:
    """Generate one story.

    ``backends`` is either one backend for every agent or a mapping of backend
    names resolved through ``config.routing``. Backend failures are re-raised
    as :class:`StepFailed` carrying the partial trace.
    """
    s = scratchpad_init(task)
    sequence = SEQUENCES[config.variant]
    resolved = {label: _resolve(backends, config, label) for label in sequence}

    steps: list[StepRecord] = []
    sections: list[str] = []

    def trace(exhausted: bool = False) -> RunTrace:
        return RunTrace(
            task=s.task,
            variant=config.variant,
            steps=tuple(steps),
            final_scratchpad=s,
            story=STORY_SEPARATOR.join(sections),
            budget_exhausted=exhausted,
        )

    while True:
        label = next_agent(s, config.variant)
        if label is None:
            return trace()
        if len(steps) >= config.max_steps:
            logger.warning("step budget of %d exhausted before %s", config.max_steps, label.name)
            return trace(exhausted=True)

        agent = agent_for(label, config.variant)
        backend = resolved[label]
        prompt = render_agent_prompt(agent, s, config.template_dir)
        started = clock()
        try:
            request = GenerationRequest.for_prompt(
                prompt,
                max_output_tokens=config.max_output_tokens,
                temperature=config.temperature,
                seed=config.seed,
            )
            generation = backend.generate(request)
            output = normalize_text(generation.text)
            s = s.append(ScratchpadEntry(label, output))
        except AgentsRoomError as exc:
            raise StepFailed(
                f"step {len(steps)} ({label.name}) failed: {exc}",
                step=len(steps),
                label=label.name,
                partial=trace(),
            ) from exc
        elapsed = (clock() - started) * 1000.0
        steps.append(
            StepRecord(
                index=len(steps),
                label=label,
                prompt=prompt,
                output=output,
                wall_ms=elapsed,
                backend=getattr(backend, "name", ""),
                input_tokens=generation.input_tokens,
                output_tokens=generation.output_tokens,
            )
        )
        if agent.kind is AgentKind.WRITING:
            sections.append(output)
        logger.info("step %d: %s (%.0f ms)", len(steps) - 1, label.name, elapsed)


def write_run(trace: RunTrace, directory: str | os.PathLike) -> Path:
    """Persist ``trace.jsonl``, ``scratchpad.txt``, ``story.txt`` and
    ``timings.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for step in trace.steps:
            fh.write(json.dumps(step.to_json(), ensure_ascii=False) + "\n")
    (out / "scratchpad.txt").write_text(render_scratchpad(trace.final_scratchpad) + "\n", encoding="utf-8")
    (out / "story.txt").write_text(trace.story + "\n" if trace.story else "", encoding="utf-8")
    meta = {
        "variant": trace.variant.value,
        "steps": len(trace.steps),
        "budget_exhausted": trace.budget_exhausted,
        "wall_ms": [round(step.wall_ms, 3) for step in trace.steps],
    }
    (out / "timings.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return out


def run_to_dir(
    task: str,
    config: OrchestratorConfig,
    backends: Backend | Mapping[str, Backend],
    directory: str | os.PathLike,
) -> RunTrace:
    """:func:`run`, writing the trace (partial on failure) to ``directory``."""
    try:
        trace = run(task, config, backends)
    except StepFailed as exc:
        if exc.partial is not None:
            write_run(exc.partial, directory)
        raise
    write_run(trace, directory)
    return trace


def load_trace(directory: str | os.PathLike) -> list[dict]:
    with open(Path(directory) / "trace.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
