from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agents_room.dataset import (
    DatasetRecord,
    corpus_stats,
    format_stats,
    load_dataset,
    parse_field_map,
    stats_to_json,
)
from agents_room.errors import EmptyDataset, MalformedRecord, MissingField, UnknownSplit


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def test_load_single_file(tmp_path):
    path = _write(tmp_path / "data.jsonl", [{"id": "a", "prompt": "p", "story": "s", "split": "test"}])
    assert load_dataset(path) == [DatasetRecord("a", "p", "s", "test")]


def test_load_directory_takes_split_from_file_name(tmp_path):
    _write(tmp_path / "tell_me_a_story_train.jsonl", [{"inputs": "p1", "targets": "s1"}])
    _write(tmp_path / "tell_me_a_story_validation.jsonl", [{"inputs": "p2", "targets": "s2"}])
    (tmp_path / "notes.txt").write_text("ignored")
    records = load_dataset(tmp_path)
    assert [(r.split, r.prompt) for r in records] == [("train", "p1"), ("valid", "p2")]
    assert records[0].id == "tell_me_a_story_train-1"


def test_missing_field_reports_line(tmp_path):
    path = _write(tmp_path / "x.jsonl", [{"prompt": "p", "story": "s", "split": "test"}, {"prompt": "p", "split": "test"}])
    with pytest.raises(MissingField) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_field_map_renames_splits_and_keys(tmp_path):
    path = _write(tmp_path / "x.jsonl", [{"q": "p", "a": "s", "split": "dev"}])
    with pytest.raises(UnknownSplit):
        load_dataset(path, {"q": "prompt", "a": "story"})
    records = load_dataset(path, parse_field_map("dev=valid, q=prompt,a=story"))
    assert records[0].split == "valid" and records[0].story == "s"


def test_malformed_lines(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"prompt": "p", "story": "s", "split": "test"}\n\n{not json\n')
    with pytest.raises(MalformedRecord) as info:
        load_dataset(path)
    assert info.value.line == 3
    path.write_text("[1, 2]\n")
    with pytest.raises(MalformedRecord):
        load_dataset(path)
    no_split = _write(tmp_path / "plain.jsonl", [{"prompt": "p", "story": "s"}])
    with pytest.raises(MissingField):
        load_dataset(no_split)


def test_empty_and_absent(tmp_path):
    with pytest.raises(EmptyDataset):
        load_dataset(tmp_path)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.jsonl")
    with pytest.raises(EmptyDataset):
        corpus_stats([])


def test_parse_field_map_errors():
    assert parse_field_map(None) == {}
    with pytest.raises(ValueError):
        parse_field_map("dev")


def test_single_record_stats():
    stats = corpus_stats([DatasetRecord("a", "one two three", "a b c d e f g", "test")])
    assert set(stats) == {"test", "all"}
    assert (stats["test"].mean_input, stats["test"].mean_target) == (3.0, 7.0)
    assert (stats["all"].median_input, stats["all"].median_target) == (3.0, 7.0)
    assert json.loads(json.dumps(stats_to_json(stats)))["all"]["count"] == 1
    lines = format_stats(stats, "tiny").splitlines()
    assert lines[2].split() == ["tiny", "0", "0", "1", "3", "7"]


_RECORD = st.builds(
    DatasetRecord,
    st.uuids().map(str),
    st.lists(st.sampled_from(["fox", "sea", "a"]), min_size=1, max_size=8).map(" ".join),
    st.lists(st.sampled_from(["fox", "sea", "the"]), min_size=1, max_size=30).map(" ".join),
    st.sampled_from(["train", "valid", "test"]),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(_RECORD, min_size=1, max_size=10))
def test_duplicating_records_keeps_means(records):
    once, twice = corpus_stats(records), corpus_stats(records + records)
    for split, s in once.items():
        assert twice[split].count == 2 * s.count
        assert twice[split].mean_input == pytest.approx(s.mean_input)
        assert twice[split].mean_target == pytest.approx(s.mean_target)
        assert twice[split].median_target == s.median_target


@settings(max_examples=50, deadline=None)
@given(st.lists(_RECORD, min_size=1, max_size=10))
def test_load_is_idempotent(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("ds") / "d.jsonl"
    _write(path, [r.to_json() for r in records])
    first = load_dataset(path)
    assert first == records == load_dataset(path)
