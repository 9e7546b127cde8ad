"""Distilled backtranslation: per-agent training data from gold stories.

A teacher model is asked for the four plans of a gold story (planning
templates over a task + gold-story scratchpad) and for the first sentence of
each narrative section. The sentences are located in the story, turned into
contiguous spans, and every agent gets one (input, target) pair per story,
with inputs rendered exactly as at inference time.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backends import Backend, GenerationRequest
from .errors import (
    AgentsRoomError,
    AnchorNotFound,
    EmptyStory,
    IncompletePlans,
    MissingSection,
    NonMonotonicAnchors,
    NotAPlanningAgent,
)
from .prompts import AGENTS, fill, load_template, render_agent_prompt
from .scratchpad import (
    PLANNING_LABELS,
    WRITING_LABELS,
    AgentLabel,
    Scratchpad,
    ScratchpadEntry,
    normalize_text,
    scratchpad_init,
)

logger = logging.getLogger(__name__)

PLANNING_CONTEXTS = ("task-only", "teacher-forced")


@dataclass(frozen=True)
class GoldExample:
    id: str
    prompt: str
    story: str
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError(f"{self.id}: empty prompt")
        if not self.story.strip():
            raise EmptyStory(f"{self.id}: empty story")


@dataclass(frozen=True)
class SectionSplit:
    """Five (label, start, end) character spans tiling the story."""

    spans: tuple[tuple[AgentLabel, int, int], ...]

    def __post_init__(self) -> None:
        labels = tuple(label for label, _, _ in self.spans)
        if labels != WRITING_LABELS:
            raise ValueError("spans must cover the five narrative sections in order")
        if self.spans[0][1] != 0:
            raise ValueError("first span must start at 0")
        for (_, _, end), (_, start, _) in zip(self.spans, self.spans[1:]):
            if end != start:
                raise ValueError("spans must be contiguous")
        for _, start, end in self.spans:
            if start >= end:
                raise ValueError("spans must be nonempty")

    def texts(self, story: str) -> dict[AgentLabel, str]:
        if self.spans[-1][2] != len(story):
            raise ValueError("split does not cover this story")
        return {label: story[start:end] for label, start, end in self.spans}


@dataclass(frozen=True)
class AgentTrainingExample:
    id: str
    agent: AgentLabel
    input: str
    target: str

    def to_json(self) -> dict:
        return {"id": self.id, "input": self.input, "target": self.target}


# -- teacher prompts ---------------------------------------------------------


def gold_scratchpad(gold: GoldExample) -> Scratchpad:
    return scratchpad_init(gold.prompt).append(
        ScratchpadEntry(AgentLabel.GOLD_RESPONSE, gold.story)
    )


def build_planning_target_prompt(
    agent: AgentLabel, gold: GoldExample, template_dir: str | None = None
) -> str:
    if agent not in PLANNING_LABELS:
        raise NotAPlanningAgent(f"{agent.name} is not a planning agent")
    return render_agent_prompt(AGENTS[agent], gold_scratchpad(gold), template_dir)


def build_story_split_prompt(gold: GoldExample, template_dir: str | None = None) -> str:
    story = normalize_text(gold.story)
    if not story:
        raise EmptyStory(f"{gold.id}: empty story")
    return fill(load_template("story_split", template_dir), {"story": story})


# -- split parsing -----------------------------------------------------------

_SECTION_HEADER = re.compile(
    r"\[\s*(exposition|rising action|climax|falling action|resolution)\s*\]", re.IGNORECASE
)
_LEAD = " \t:：-–—*_>#"
_QUOTES = "\"'“”‘’«»"


def _squash(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to one space, keeping an index map back."""
    chars: list[str] = []
    index: list[int] = []
    in_space = False
    for i, ch in enumerate(text):
        if ch.isspace():
            if in_space:
                continue
            chars.append(" ")
            in_space = True
        else:
            chars.append(ch)
            in_space = False
        index.append(i)
    return "".join(chars), index


def _candidates(line: str) -> list[str]:
    line = line.strip().strip(_LEAD).strip()
    out = [line]
    if len(line) >= 2 and line[0] in _QUOTES and line[-1] in _QUOTES:
        out.append(line[1:-1].strip())
    out.append(line.strip(_QUOTES).strip())
    return [c for i, c in enumerate(out) if c and c not in out[:i]]


def _find(anchor: str, story: str, squashed: tuple[str, list[int]], start: int) -> int | None:
    pos = story.find(anchor, start)
    if pos >= 0:
        return pos
    norm, index = squashed
    target = " ".join(anchor.split())
    norm_start = next((k for k, i in enumerate(index) if i >= start), len(norm))
    pos = norm.find(target, norm_start)
    if pos >= 0:
        return index[pos]
    return None


def _extract_anchors(teacher_output: str) -> dict[AgentLabel, str]:
    matches = list(_SECTION_HEADER.finditer(teacher_output))
    anchors: dict[AgentLabel, str] = {}
    for k, match in enumerate(matches):
        label = AgentLabel(match.group(1).title())
        if label in anchors:
            continue
        end = matches[k + 1].start() if k + 1 < len(matches) else len(teacher_output)
        body = teacher_output[match.end() : end]
        lines = [ln for ln in body.split("\n") if ln.strip().strip(_LEAD).strip()]
        if lines:
            anchors[label] = lines[0]
    return anchors


def parse_split_response(teacher_output: str, story: str) -> SectionSplit:
    """Turn the teacher's five quoted first sentences into covering spans.

    Each sentence is matched exactly first, then with whitespace runs
    collapsed. The exposition span always starts at offset 0.
    """
    if not teacher_output.strip():
        raise MissingSection("teacher output is empty")
    anchors = _extract_anchors(teacher_output)
    missing = [label.header for label in WRITING_LABELS if label not in anchors]
    if missing:
        raise MissingSection(f"missing sections: {', '.join(missing)}")

    squashed = _squash(story)
    positions: list[int] = []
    previous = -1
    for label in WRITING_LABELS:
        candidates = _candidates(anchors[label])
        pos = None
        for candidate in candidates:
            pos = _find(candidate, story, squashed, previous + 1)
            if pos is not None:
                break
        if pos is None:
            if any(_find(c, story, squashed, 0) is not None for c in candidates):
                raise NonMonotonicAnchors(
                    f"{label.header} anchor occurs before the {WRITING_LABELS[len(positions) - 1].header} anchor"
                )
            raise AnchorNotFound(f"{label.header} anchor not found: {candidates[0][:80]!r}")
        positions.append(pos)
        previous = pos

    starts = [0] + positions[1:]
    ends = starts[1:] + [len(story)]
    return SectionSplit(tuple(zip(WRITING_LABELS, starts, ends)))


# -- emission ----------------------------------------------------------------


def emit_training_examples(
    gold: GoldExample,
    plans: Mapping[AgentLabel, str],
    split: SectionSplit,
    *,
    planning_context: str = "task-only",
    template_dir: str | None = None,
) -> list[AgentTrainingExample]:
    """Nine examples: four planning, then five writing, in call order.

    Planning inputs see the task plus the teacher's earlier plans
    (``teacher-forced``) or the task alone (``task-only``). Writing inputs see
    the task, all four plans and the gold text of earlier sections.
    """
    missing = [label.name for label in PLANNING_LABELS if not (plans.get(label) or "").strip()]
    if missing:
        raise IncompletePlans(f"{gold.id}: missing plans for {', '.join(missing)}")
    if planning_context not in PLANNING_CONTEXTS:
        raise ValueError(f"planning_context must be one of {PLANNING_CONTEXTS}")

    examples: list[AgentTrainingExample] = []
    task_only = scratchpad_init(gold.prompt)
    s = task_only
    for label in PLANNING_LABELS:
        context = s if planning_context == "teacher-forced" else task_only
        entry = ScratchpadEntry(label, plans[label])
        examples.append(
            AgentTrainingExample(
                gold.id, label, render_agent_prompt(AGENTS[label], context, template_dir), entry.text
            )
        )
        s = s.append(entry)

    sections = split.texts(gold.story)
    for label in WRITING_LABELS:
        entry = ScratchpadEntry(label, sections[label])
        examples.append(
            AgentTrainingExample(
                gold.id, label, render_agent_prompt(AGENTS[label], s, template_dir), entry.text
            )
        )
        s = s.append(entry)
    return examples


def synthesize(
    gold: GoldExample,
    teacher: Backend,
    *,
    planning_context: str = "task-only",
    template_dir: str | None = None,
    temperature: float = 1.0,
    seed: int | None = None,
) -> tuple[list[AgentTrainingExample], dict]:
    """Query the teacher for one gold example; returns examples and the raw
    teacher outputs (kept for the reject log)."""
    raw: dict[str, str] = {}
    plans: dict[AgentLabel, str] = {}
    for label in PLANNING_LABELS:
        prompt = build_planning_target_prompt(label, gold, template_dir)
        text = teacher.generate(
            GenerationRequest(prompt, temperature=temperature, seed=seed)
        ).text
        raw[label.name] = text
        plans[label] = text
    prompt = build_story_split_prompt(gold, template_dir)
    raw["SPLIT"] = teacher.generate(GenerationRequest(prompt, temperature=temperature, seed=seed)).text
    try:
        split = parse_split_response(raw["SPLIT"], gold.story)
        examples = emit_training_examples(
            gold, plans, split, planning_context=planning_context, template_dir=template_dir
        )
    except AgentsRoomError as exc:
        exc.teacher_outputs = raw
        raise
    return examples, raw


def write_training_files(
    examples: Iterable[AgentTrainingExample],
    rejects: Sequence[dict],
    out_dir: str | os.PathLike,
) -> dict[str, int]:
    """Write ``<agent>.jsonl`` per agent plus ``rejects.jsonl``; returns
    record counts per file stem."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_agent: dict[AgentLabel, list[AgentTrainingExample]] = {
        label: [] for label in PLANNING_LABELS + WRITING_LABELS
    }
    for example in examples:
        by_agent[example.agent].append(example)
    counts = {}
    for label, items in by_agent.items():
        stem = label.name.lower()
        with open(out / f"{stem}.jsonl", "w", encoding="utf-8") as fh:
            for example in items:
                fh.write(json.dumps(example.to_json(), ensure_ascii=False) + "\n")
        counts[stem] = len(items)
    with open(out / "rejects.jsonl", "w", encoding="utf-8") as fh:
        for reject in rejects:
            fh.write(json.dumps(reject, ensure_ascii=False) + "\n")
    counts["rejects"] = len(rejects)
    return counts


def synthesize_all(
    golds: Sequence[GoldExample],
    teacher: Backend,
    out_dir: str | os.PathLike,
    *,
    parallel: int = 1,
    **kwargs,
) -> dict[str, int]:
    from concurrent.futures import ThreadPoolExecutor

    def one(gold: GoldExample):
        try:
            return synthesize(gold, teacher, **kwargs), None
        except AgentsRoomError as exc:
            logger.warning("%s rejected: %s", gold.id, exc)
            reject = {"id": gold.id, "reason": type(exc).__name__, "detail": str(exc)}
            if hasattr(exc, "teacher_outputs"):
                reject["teacher_outputs"] = exc.teacher_outputs
            return None, reject

    with ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
        results = list(pool.map(one, golds))

    examples: list[AgentTrainingExample] = []
    rejects: list[dict] = []
    for result, reject in results:
        if reject is not None:
            rejects.append(reject)
        else:
            examples.extend(result[0])
    return write_training_files(examples, rejects, out_dir)
