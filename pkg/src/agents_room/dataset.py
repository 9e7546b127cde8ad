"""Loading prompt/story datasets from JSON Lines and summarizing them."""

from __future__ import annotations

import json
import logging
import os
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyDataset, MalformedRecord, MissingField, UnknownSplit
from .metrics import word_tokens

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
DATASET_ENV = "AGENTS_ROOM_DATASET"

# Built-in renames; a caller's field_map is applied first and wins.
DEFAULT_FIELD_MAP: dict[str, str] = {
    "inputs": "prompt",
    "input": "prompt",
    "writing_prompt": "prompt",
    "targets": "story",
    "target": "story",
    "response": "story",
    "example_id": "id",
    "validation": "valid",
}


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    prompt: str
    story: str
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise UnknownSplit(f"unknown split {self.split!r}")
        if not self.prompt.strip():
            raise MissingField(f"{self.id}: empty prompt")
        if not self.story.strip():
            raise MissingField(f"{self.id}: empty story")

    def to_json(self) -> dict:
        return asdict(self)


def _rename(value: str, field_map: Mapping[str, str]) -> str:
    if value in field_map:
        return field_map[value]
    return DEFAULT_FIELD_MAP.get(value, value)


def _split_from_name(path: Path, field_map: Mapping[str, str]) -> str | None:
    stem = path.stem.lower()
    for part in reversed(stem.replace("-", "_").replace(".", "_").split("_")):
        split = _rename(part, field_map)
        if split in SPLITS:
            return split
    return None


def _load_file(path: Path, field_map: Mapping[str, str]) -> list[DatasetRecord]:
    default_split = _split_from_name(path, field_map)
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path.name}: invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(raw, dict):
                raise MalformedRecord(f"{path.name}: expected a JSON object", line=lineno)
            data = {_rename(k, field_map): v for k, v in raw.items()}
            for key in ("prompt", "story"):
                if not isinstance(data.get(key), str) or not data[key].strip():
                    raise MissingField(f"{path.name}: missing or empty {key!r}", line=lineno)
            split = data.get("split", default_split)
            if split is None:
                raise MissingField(f"{path.name}: no split field and none in the file name", line=lineno)
            split = _rename(str(split).lower(), field_map)
            if split not in SPLITS:
                raise UnknownSplit(f"{path.name}: unknown split {split!r}", line=lineno)
            record_id = str(data.get("id", f"{path.stem}-{lineno}"))
            records.append(DatasetRecord(record_id, data["prompt"], data["story"], split))
    return records


def load_dataset(
    path: str | os.PathLike, field_map: Mapping[str, str] | None = None
) -> list[DatasetRecord]:
    """Records from one JSON Lines file or every ``*.jsonl`` file in a
    directory (sorted by name). A record's split comes from its ``split``
    field or, failing that, from a split word in the file name.
    ``field_map`` renames both field names and split values.
    """
    field_map = dict(field_map or {})
    root = Path(path)
    if root.is_dir():
        files = sorted(root.glob("*.jsonl"))
        if not files:
            raise EmptyDataset(f"no .jsonl files in {root}")
    elif root.is_file():
        files = [root]
    else:
        raise FileNotFoundError(root)
    records: list[DatasetRecord] = []
    for file in files:
        records.extend(_load_file(file, field_map))
    counts = {s: sum(r.split == s for r in records) for s in SPLITS}
    logger.info("loaded %d records from %s: %s", len(records), root, counts)
    return records


def parse_field_map(text: str | None) -> dict[str, str]:
    """``"dev=valid,inputs=prompt"`` -> mapping."""
    out: dict[str, str] = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ValueError(f"bad field-map entry {item!r}; expected old=new")
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class SplitStats:
    count: int
    mean_input: float
    median_input: float
    mean_target: float
    median_target: float


def _stats(records: Sequence[DatasetRecord]) -> SplitStats:
    inputs = [len(word_tokens(r.prompt)) for r in records]
    targets = [len(word_tokens(r.story)) for r in records]
    return SplitStats(
        len(records),
        statistics.fmean(inputs),
        float(statistics.median(inputs)),
        statistics.fmean(targets),
        float(statistics.median(targets)),
    )


def corpus_stats(records: Iterable[DatasetRecord]) -> dict[str, SplitStats]:
    """Per-split and overall (``all``) token statistics; splits without
    records are omitted."""
    records = list(records)
    if not records:
        raise EmptyDataset("no records")
    out = {}
    for split in SPLITS:
        part = [r for r in records if r.split == split]
        if part:
            out[split] = _stats(part)
    out["all"] = _stats(records)
    return out


def stats_to_json(stats: Mapping[str, SplitStats]) -> dict:
    return {k: asdict(v) for k, v in stats.items()}


def format_stats(stats: Mapping[str, SplitStats], name: str = "dataset") -> str:
    counts = [str(stats[s].count) if s in stats else "0" for s in SPLITS]
    overall = stats["all"]
    header = f"{'Dataset':<20} {'#Train':>6} {'#Valid':>6} {'#Test':>6} {'Input':>7} {'Target':>7}"
    row = (
        f"{name:<20} {counts[0]:>6} {counts[1]:>6} {counts[2]:>6} "
        f"{overall.mean_input:>7.0f} {overall.mean_target:>7,.0f}"
    )
    return "\n".join([header, "-" * len(header), row])
