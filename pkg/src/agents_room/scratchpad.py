"""Scratchpad: the append-only, label-keyed state shared by all agents.

The text form is a sequence of sections, each a bracketed header line
followed by the section body, separated by exactly one blank line::

    [Creative Writing Task]
    Write a story about ...

    [Central Conflict]
    ...
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterator

from .errors import (
    DuplicateLabel,
    EmptyEntry,
    EmptyScratchpad,
    EmptyTask,
    HeaderCollision,
    MissingTask,
    ScratchpadError,
    UnknownHeader,
)

SECTION_SEPARATOR = "\n\n"


class AgentLabel(enum.Enum):
    """Section labels; the value is the canonical header text."""

    TASK = "Creative Writing Task"
    CONFLICT = "Central Conflict"
    CHARACTER = "Character Descriptions"
    SETTING = "Setting"
    PLOT = "Key Plot Points"
    EXPOSITION = "Exposition"
    RISING_ACTION = "Rising Action"
    CLIMAX = "Climax"
    FALLING_ACTION = "Falling Action"
    RESOLUTION = "Resolution"
    FINALIZER = "Final Story"
    GOLD_RESPONSE = "User-Written Response"

    @property
    def header(self) -> str:
        return self.value

    @property
    def header_line(self) -> str:
        return f"[{self.value}]"

    @classmethod
    def from_header(cls, header: str) -> AgentLabel:
        try:
            return cls(header)
        except ValueError:
            raise UnknownHeader(f"unknown section header [{header}]") from None

    @classmethod
    def from_name(cls, name: str) -> AgentLabel:
        """Case/dash-insensitive lookup by enum name (``rising-action`` works)."""
        key = name.strip().upper().replace("-", "_").replace(" ", "_")
        try:
            return cls[key]
        except KeyError:
            raise KeyError(f"unknown agent label {name!r}") from None


PLANNING_LABELS = (
    AgentLabel.CONFLICT,
    AgentLabel.CHARACTER,
    AgentLabel.SETTING,
    AgentLabel.PLOT,
)
WRITING_LABELS = (
    AgentLabel.EXPOSITION,
    AgentLabel.RISING_ACTION,
    AgentLabel.CLIMAX,
    AgentLabel.FALLING_ACTION,
    AgentLabel.RESOLUTION,
)

_HEADER_LINES = {label.header_line: label for label in AgentLabel}
_BRACKETED = re.compile(r"^\[(.+)\]$")


def normalize_text(text: str) -> str:
    """Canonical entry text: LF newlines, no trailing whitespace per line,
    no leading or trailing blank lines."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in text.split("\n")).strip("\n")


@dataclass(frozen=True)
class ScratchpadEntry:
    label: AgentLabel
    text: str

    def __post_init__(self) -> None:
        text = normalize_text(self.text)
        if not text.strip():
            raise EmptyEntry(f"empty text for section {self.label.name}")
        for line in text.split("\n"):
            if line in _HEADER_LINES:
                raise HeaderCollision(
                    f"{self.label.name} text contains the header line {line!r}"
                )
        object.__setattr__(self, "text", text)


@dataclass(frozen=True)
class Scratchpad:
    """Immutable scratchpad; :meth:`append` returns a new value."""

    entries: tuple[ScratchpadEntry, ...] = ()

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if entries and entries[0].label is not AgentLabel.TASK:
            raise MissingTask("first scratchpad section must be the writing task")
        seen: set[AgentLabel] = set()
        for entry in entries:
            if entry.label in seen:
                raise DuplicateLabel(f"label {entry.label.name} appears twice")
            seen.add(entry.label)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ScratchpadEntry]:
        return iter(self.entries)

    def __contains__(self, label: object) -> bool:
        return any(entry.label is label for entry in self.entries)

    @property
    def labels(self) -> tuple[AgentLabel, ...]:
        return tuple(entry.label for entry in self.entries)

    @property
    def task(self) -> str:
        if not self.entries:
            raise EmptyScratchpad("scratchpad is empty")
        return self.entries[0].text

    def get(self, label: AgentLabel) -> str | None:
        for entry in self.entries:
            if entry.label is label:
                return entry.text
        return None

    def append(self, entry: ScratchpadEntry) -> Scratchpad:
        if entry.label in self:
            raise DuplicateLabel(f"label {entry.label.name} already present")
        return Scratchpad(self.entries + (entry,))

    def render(self) -> str:
        return render_scratchpad(self)


def scratchpad_init(task: str) -> Scratchpad:
    if not task or not task.strip():
        raise EmptyTask("writing task is empty")
    return Scratchpad((ScratchpadEntry(AgentLabel.TASK, task),))


def scratchpad_append(s: Scratchpad, entry: ScratchpadEntry) -> Scratchpad:
    return s.append(entry)


def render_scratchpad(s: Scratchpad) -> str:
    if not s.entries:
        raise EmptyScratchpad("cannot render an empty scratchpad")
    return SECTION_SEPARATOR.join(
        f"{entry.label.header_line}\n{entry.text}" for entry in s.entries
    )


def parse_scratchpad(text: str) -> Scratchpad:
    """Inverse of :func:`render_scratchpad`.

    Only lines exactly equal to a canonical header line start a section; any
    other bracketed line inside a section is body text.
    """
    lines = normalize_text(text).split("\n")
    first = lines[0]
    if first not in _HEADER_LINES:
        match = _BRACKETED.match(first)
        if match:
            raise UnknownHeader(f"unknown section header {first!r}")
        raise ScratchpadError("scratchpad text must begin with a section header")

    sections: list[tuple[AgentLabel, list[str]]] = []
    for line in lines:
        label = _HEADER_LINES.get(line)
        if label is not None:
            sections.append((label, []))
        else:
            sections[-1][1].append(line)

    if sections[0][0] is not AgentLabel.TASK:
        raise MissingTask("first scratchpad section must be the writing task")
    entries = []
    for label, body in sections:
        entries.append(ScratchpadEntry(label, "\n".join(body)))
    return Scratchpad(tuple(entries))
