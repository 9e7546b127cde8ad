"""Agent specifications and prompt rendering.

Each agent owns one plain-text template under ``templates/``. Templates use
``<identifiers>``, ``<section>`` and ``<scratchpad>`` placeholders. Writing
templates also carry ``<continuation>`` and ``<not_last>`` paragraphs that are
replaced by the matching ``clause_*.txt`` text or dropped, depending on the
scratchpad.
"""

from __future__ import annotations

import enum
import functools
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import AgentAlreadyRan, MissingTask, TemplateError
from .scratchpad import (
    PLANNING_LABELS,
    WRITING_LABELS,
    AgentLabel,
    Scratchpad,
    render_scratchpad,
)

TEMPLATE_DIR_ENV = "AGENTS_ROOM_TEMPLATE_DIR"


class AgentKind(enum.Enum):
    PLANNING = "planning"
    WRITING = "writing"


@dataclass(frozen=True)
class AgentSpec:
    label: AgentLabel
    kind: AgentKind
    template: str
    backend_route: str = "default"

    @property
    def name(self) -> str:
        return self.label.name


AGENTS: dict[AgentLabel, AgentSpec] = {
    label: AgentSpec(label, AgentKind.PLANNING, label.name.lower())
    for label in PLANNING_LABELS
}
AGENTS.update(
    {
        label: AgentSpec(label, AgentKind.WRITING, label.name.lower())
        for label in WRITING_LABELS + (AgentLabel.FINALIZER,)
    }
)

# Single-call baseline: the raw task is the whole prompt; its output lands
# under the finalizer's header.
E2E_AGENT = AgentSpec(AgentLabel.FINALIZER, AgentKind.WRITING, "e2e")

_LAST_SECTIONS = frozenset({AgentLabel.RESOLUTION, AgentLabel.FINALIZER})
_PLACEHOLDER = re.compile(r"<(identifiers|section|scratchpad|task|story a|story b|story)>")
_CLAUSES = {"<continuation>": "clause_continuation", "<not_last>": "clause_not_last"}


# -- templates ---------------------------------------------------------------


def _default_template_dir() -> str | None:
    return os.environ.get(TEMPLATE_DIR_ENV) or None


@functools.lru_cache(maxsize=None)
def _read_template(name: str, template_dir: str | None) -> str:
    if template_dir is not None:
        override = Path(template_dir) / f"{name}.txt"
        if override.is_file():
            text = override.read_text(encoding="utf-8")
            return text[:-1] if text.endswith("\n") else text
    try:
        resource = resources.files("agents_room").joinpath("templates").joinpath(f"{name}.txt")
        text = resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateError(f"no template named {name!r}") from None
    return text[:-1] if text.endswith("\n") else text


def load_template(name: str, template_dir: str | os.PathLike | None = None) -> str:
    """Template text without its final newline; ``template_dir`` files
    shadow the packaged ones."""
    if template_dir is None:
        template_dir = _default_template_dir()
    return _read_template(name, None if template_dir is None else str(template_dir))


def fill(template: str, values: Mapping[str, str]) -> str:
    """Single-pass placeholder substitution; inserted text is never rescanned."""

    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            return match.group(0)
        return values[key]

    return _PLACEHOLDER.sub(sub, template)


# -- identifiers -------------------------------------------------------------


def _join(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _article(label: AgentLabel) -> str:
    if label in (AgentLabel.TASK, AgentLabel.GOLD_RESPONSE):
        return "a"
    return "the"


def identifiers_phrase(s: Scratchpad, style: str = "flat") -> str:
    """English list of the sections present in ``s``.

    ``flat`` names every section; ``grouped`` folds planning sections into
    "the Content Plan (...)" and story sections into "the Previous Parts of
    the Story (...)".
    """
    if not s.entries:
        raise MissingTask("scratchpad is empty")
    if style == "flat":
        return _join([f"{_article(e.label)} {e.label.header}" for e in s.entries])
    if style != "grouped":
        raise ValueError(f"unknown identifiers style {style!r}")

    items: list[str] = []
    plans = [e.label.header for e in s.entries if e.label in PLANNING_LABELS]
    parts = [
        e.label.header
        for e in s.entries
        if e.label in WRITING_LABELS or e.label is AgentLabel.FINALIZER
    ]
    for entry in s.entries:
        if entry.label in (AgentLabel.TASK, AgentLabel.GOLD_RESPONSE):
            items.append(f"a {entry.label.header}")
    if plans:
        items.append(f"the Content Plan ({', '.join(plans)})")
    if parts:
        items.append(f"the Previous Parts of the Story ({', '.join(parts)})")
    return _join(items)


# -- rendering ---------------------------------------------------------------


def _has_written_sections(s: Scratchpad) -> bool:
    return any(
        label in WRITING_LABELS or label is AgentLabel.FINALIZER for label in s.labels
    )


def render_agent_prompt(
    agent: AgentSpec,
    s: Scratchpad,
    template_dir: str | os.PathLike | None = None,
) -> str:
    if not s.entries or s.entries[0].label is not AgentLabel.TASK:
        raise MissingTask("scratchpad must begin with the writing task")
    if agent.label in s:
        raise AgentAlreadyRan(f"{agent.name} already has a scratchpad section")

    template = load_template(agent.template, template_dir)
    if agent.template == "e2e":
        return fill(template, {"task": s.task})

    if agent.kind is AgentKind.WRITING:
        wanted = {
            "<continuation>": _has_written_sections(s),
            "<not_last>": agent.label not in _LAST_SECTIONS,
        }
        paragraphs = []
        for paragraph in template.split("\n\n"):
            key = paragraph.strip()
            if key in _CLAUSES:
                if wanted[key]:
                    paragraphs.append(load_template(_CLAUSES[key], template_dir))
                continue
            paragraphs.append(paragraph)
        template = "\n\n".join(paragraphs)
        style = "grouped"
    else:
        style = "flat"

    return fill(
        template,
        {
            "identifiers": identifiers_phrase(s, style),
            "section": agent.label.header,
            "scratchpad": render_scratchpad(s),
        },
    )


_INSTRUCTION_PATTERNS: tuple[tuple[re.Pattern, AgentLabel | None], ...] = (
    (re.compile(r"describe the central conflict"), AgentLabel.CONFLICT),
    (re.compile(r"describe the characters"), AgentLabel.CHARACTER),
    (re.compile(r"describe the setting"), AgentLabel.SETTING),
    (re.compile(r"describe the key plot points"), AgentLabel.PLOT),
    (re.compile(r"write a story using the information below"), AgentLabel.FINALIZER),
    (re.compile(r"continue the story by writing the (.+?) part"), None),
)


def identify_agent(prompt: str) -> AgentLabel | None:
    """Best-effort guess of which agent a rendered prompt was built for.

    Looks for the agent's instruction sentence in the preamble (the text
    before the embedded scratchpad); falls back to the first planning or
    writing header missing from the embedded scratchpad.
    """
    head, sep, tail = prompt.partition(AgentLabel.TASK.header_line)
    for pattern, label in _INSTRUCTION_PATTERNS:
        match = pattern.search(head)
        if not match:
            continue
        if label is not None:
            return label
        try:
            return AgentLabel(match.group(1))
        except ValueError:
            break
    if not sep:
        return None
    present = {line for line in tail.split("\n") if line.startswith("[")}
    for label in PLANNING_LABELS + WRITING_LABELS:
        if label.header_line not in present:
            return label
    return None
