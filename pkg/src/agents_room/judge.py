"""Pairwise LLM-judge harness: prompts, verdict parsing, scheduling, wins."""

from __future__ import annotations

import enum
import json
import logging
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backends import Backend, GenerationRequest
from .errors import (
    AgentsRoomError,
    EmptyStory,
    MalformedVerdict,
    PairMismatch,
    TooFewSystems,
    UnknownSystem,
)
from .prompts import fill, load_template

logger = logging.getLogger(__name__)


class Dimension(enum.Enum):
    PLOT = "Plot"
    CREATIVITY = "Creativity"
    DEVELOPMENT = "Development"
    LANGUAGE_USE = "Language Use"
    OVERALL = "Overall"

    @classmethod
    def parse(cls, text: str) -> Dimension:
        key = text.strip().lower().replace("-", " ").replace("_", " ")
        for dim in cls:
            if dim.value.lower() == key:
                return dim
        raise ValueError(f"unknown dimension {text!r}")

    @property
    def slug(self) -> str:
        return self.value.lower().replace(" ", "-")


class Choice(enum.Enum):
    A = "A"
    B = "B"
    SAME = "Same"


@dataclass(frozen=True)
class PairTask:
    prompt_id: str
    system_i: str
    system_j: str
    # system shown as Story A
    presentation: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.system_i == self.system_j:
            raise ValueError("a pair needs two different systems")
        if self.presentation not in (self.system_i, self.system_j):
            raise ValueError("presentation must name one of the pair's systems")

    @property
    def system_a(self) -> str:
        return self.presentation

    @property
    def system_b(self) -> str:
        return self.system_j if self.presentation == self.system_i else self.system_i

    @property
    def task_id(self) -> str:
        return f"{self.prompt_id}|{self.system_i}|{self.system_j}"

    @property
    def pair_key(self) -> tuple[str, frozenset[str]]:
        return self.prompt_id, frozenset((self.system_i, self.system_j))

    def flipped(self) -> PairTask:
        return PairTask(self.prompt_id, self.system_i, self.system_j, self.system_b, self.seed)

    def winner(self, choice: Choice) -> str | None:
        if choice is Choice.A:
            return self.system_a
        if choice is Choice.B:
            return self.system_b
        return None

    def to_json(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "system_i": self.system_i,
            "system_j": self.system_j,
            "presentation": self.presentation,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> PairTask:
        return cls(
            str(data["prompt_id"]),
            data["system_i"],
            data["system_j"],
            data["presentation"],
            int(data.get("seed", 0)),
        )


@dataclass(frozen=True)
class PairwiseVerdict:
    choices: Mapping[Dimension, Choice]
    raw: str = ""

    def __post_init__(self) -> None:
        missing = [d.value for d in Dimension if d not in self.choices]
        if missing:
            raise MalformedVerdict(f"verdict lacks {', '.join(missing)}")

    def __getitem__(self, dim: Dimension) -> Choice:
        return self.choices[dim]

    def to_json(self) -> dict:
        return {d.value: self.choices[d].value for d in Dimension}

    @classmethod
    def from_json(cls, data: Mapping, raw: str = "") -> PairwiseVerdict:
        return cls({Dimension(k): Choice(v) for k, v in data.items()}, raw)


# -- prompt and parsing ------------------------------------------------------


def build_judge_prompt(story_a: str, story_b: str, template_dir: str | None = None) -> str:
    if not story_a.strip() or not story_b.strip():
        raise EmptyStory("both stories must be nonempty")
    return fill(
        load_template("judge", template_dir),
        {"story a": story_a.strip(), "story b": story_b.strip()},
    )


_CONCLUSION = re.compile(r"based on my assessment", re.IGNORECASE)
_EMPHASIS = re.compile(r"[*_`#|&\\]")
_LINE = re.compile(
    r"^\s*(?:[-•>]\s*)?(plot|creativity|development|language\s+use|overall)\s*:?\s*"
    r"\[?\s*(?:story\s+)?(about the same|same|a|b)\b(?!\s+or\b)(?:\s*\]|\s*[.!,;:(-].*|\s*)$",
    re.IGNORECASE,
)


def _scan(block: str) -> dict[Dimension, Choice]:
    found: dict[Dimension, Choice] = {}
    for line in block.splitlines():
        match = _LINE.match(_EMPHASIS.sub(" ", line))
        if not match:
            continue
        dim = Dimension.parse(" ".join(match.group(1).split()))
        word = match.group(2).lower()
        choice = Choice.A if word == "a" else Choice.B if word == "b" else Choice.SAME
        # last mention wins inside a block
        found[dim] = choice
    return found


def parse_verdict(judge_output: str) -> PairwiseVerdict:
    """Extract the per-dimension choices from a judge's answer.

    Reads the last "Based on my assessment" block, tolerating emphasis marks,
    bullets and table separators; without such a block, the whole output is
    scanned.
    """
    if not judge_output or not judge_output.strip():
        raise MalformedVerdict("judge output is empty")
    starts = [m.start() for m in _CONCLUSION.finditer(judge_output)]
    block = judge_output[starts[-1] :] if starts else judge_output
    found = _scan(block)
    missing = [d.value for d in Dimension if d not in found]
    if missing:
        raise MalformedVerdict(f"no choice found for {', '.join(missing)}")
    return PairwiseVerdict(found, judge_output)


# -- scheduling and accumulation ---------------------------------------------


def schedule_pairs(systems: Sequence[str], prompt_ids: Sequence[str], seed: int = 0) -> list[PairTask]:
    """Every unordered system pair once per prompt; a seeded coin decides
    which system is shown first."""
    systems = list(systems)
    if len(systems) < 2 or len(set(systems)) != len(systems):
        raise TooFewSystems("need at least two distinct systems")
    if not prompt_ids:
        raise ValueError("need at least one prompt")
    rng = random.Random(seed)
    tasks = []
    for prompt_id in prompt_ids:
        for i in range(len(systems)):
            for j in range(i + 1, len(systems)):
                first = systems[i] if rng.random() < 0.5 else systems[j]
                tasks.append(PairTask(str(prompt_id), systems[i], systems[j], first, rng.getrandbits(31)))
    return tasks


@dataclass
class WinsMatrix:
    """``wins[i, j]``: how often ``systems[i]`` beat ``systems[j]``."""

    systems: tuple[str, ...]
    wins: np.ndarray
    dimension: Dimension | None = None

    def __post_init__(self) -> None:
        self.systems = tuple(self.systems)
        self.wins = np.asarray(self.wins, dtype=float)
        n = len(self.systems)
        if self.wins.shape != (n, n):
            raise ValueError(f"wins must be {n}x{n}")
        if (self.wins < 0).any():
            raise ValueError("wins must be nonnegative")
        if np.any(np.diag(self.wins) != 0):
            raise ValueError("wins diagonal must be zero")

    def index(self, system: str) -> int:
        try:
            return self.systems.index(system)
        except ValueError:
            raise UnknownSystem(system) from None


def accumulate_wins(
    records: Iterable[tuple[PairTask, PairwiseVerdict]],
    dimension: Dimension,
    tie_policy: str = "half",
    systems: Sequence[str] | None = None,
) -> WinsMatrix:
    """Wins matrix for one dimension. ``Same`` adds 0.5 to both cells under
    ``half`` and nothing under ``drop``. Without ``systems`` the names are
    collected from the records and sorted."""
    if tie_policy not in ("half", "drop"):
        raise ValueError("tie_policy must be 'half' or 'drop'")
    records = list(records)
    if systems is None:
        systems = sorted({s for task, _ in records for s in (task.system_i, task.system_j)})
    matrix = WinsMatrix(tuple(systems), np.zeros((len(systems), len(systems))), dimension)
    for task, verdict in records:
        i = matrix.index(task.system_i)
        j = matrix.index(task.system_j)
        winner = task.winner(verdict[dimension])
        if winner is None:
            if tie_policy == "half":
                matrix.wins[i, j] += 0.5
                matrix.wins[j, i] += 0.5
        elif winner == task.system_i:
            matrix.wins[i, j] += 1.0
        else:
            matrix.wins[j, i] += 1.0
    return matrix


def consistency_rate(
    first: Iterable[tuple[PairTask, PairwiseVerdict]],
    second: Iterable[tuple[PairTask, PairwiseVerdict]],
    dimension: Dimension,
) -> float:
    """Share of pairs whose preferred system survives the order swap."""
    one = {task.pair_key: (task, verdict) for task, verdict in first}
    two = {task.pair_key: (task, verdict) for task, verdict in second}
    if not one or one.keys() != two.keys():
        raise PairMismatch("the two runs must cover the same, nonempty set of pairs")
    agree = 0
    for key, (task1, verdict1) in one.items():
        task2, verdict2 = two[key]
        if task1.system_a != task2.system_b:
            raise PairMismatch(f"pair {task1.task_id} was not shown in swapped order")
        if task1.winner(verdict1[dimension]) == task2.winner(verdict2[dimension]):
            agree += 1
    return agree / len(one)


# -- running a judge ---------------------------------------------------------


@dataclass(frozen=True)
class VerdictRecord:
    task: PairTask
    raw: str
    verdict: PairwiseVerdict | None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "task_id": self.task.task_id,
            "task": self.task.to_json(),
            "raw": self.raw,
            "verdict": None if self.verdict is None else self.verdict.to_json(),
            "error": self.error,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> VerdictRecord:
        verdict = data.get("verdict")
        return cls(
            PairTask.from_json(data["task"]),
            data.get("raw", ""),
            None if verdict is None else PairwiseVerdict.from_json(verdict, data.get("raw", "")),
            data.get("error"),
        )


def judge_pairs(
    tasks: Sequence[PairTask],
    stories: Mapping[tuple[str, str], str],
    judge: Backend,
    *,
    parallel: int = 1,
    temperature: float = 1.0,
    template_dir: str | None = None,
) -> list[VerdictRecord]:
    """Run the judge on every task; ``stories`` maps (system, prompt_id) to
    text. Failures are recorded, not raised. Output is sorted by task id."""

    def one(task: PairTask) -> VerdictRecord:
        raw = ""
        try:
            prompt = build_judge_prompt(
                stories[(task.system_a, task.prompt_id)],
                stories[(task.system_b, task.prompt_id)],
                template_dir,
            )
            raw = judge.generate(GenerationRequest(prompt, temperature=temperature, seed=task.seed)).text
            return VerdictRecord(task, raw, parse_verdict(raw))
        except (AgentsRoomError, KeyError) as exc:
            logger.warning("%s: %s", task.task_id, exc)
            return VerdictRecord(task, raw, None, f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=max(1, parallel)) as pool:
        records = list(pool.map(one, tasks))
    return sorted(records, key=lambda r: r.task.task_id)


def write_verdicts(records: Iterable[VerdictRecord], path: str | os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")


def read_verdicts(path: str | os.PathLike) -> list[VerdictRecord]:
    with open(path, encoding="utf-8") as fh:
        return [VerdictRecord.from_json(json.loads(line)) for line in fh if line.strip()]


def usable(records: Iterable[VerdictRecord]) -> list[tuple[PairTask, PairwiseVerdict]]:
    return [(r.task, r.verdict) for r in records if r.verdict is not None]
