from __future__ import annotations

import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agents_room.backends import Generation, ScriptedBackend
from agents_room.errors import EmptyStory, MalformedVerdict, PairMismatch, TooFewSystems, UnknownSystem
from agents_room.judge import (
    Choice,
    Dimension,
    PairTask,
    PairwiseVerdict,
    WinsMatrix,
    accumulate_wins,
    build_judge_prompt,
    consistency_rate,
    judge_pairs,
    parse_verdict,
    read_verdicts,
    schedule_pairs,
    usable,
    write_verdicts,
)

from conftest import FIXTURES, golden


def _verdict(**choices) -> PairwiseVerdict:
    out = {d: Choice.A for d in Dimension}
    for key, value in choices.items():
        out[Dimension.parse(key.replace("_", " "))] = Choice(value)
    return PairwiseVerdict(out)


def _block(choices: dict[Dimension, Choice]) -> str:
    lines = [f"{d.value}: {c.value}" for d, c in choices.items()]
    return "Based on my assessment, the better story for each dimension is:\n\n" + "\n".join(lines)


def test_judge_prompt_golden():
    prompt = build_judge_prompt("The keeper lit the lamp.\nIt burned all night.", "The bottle washed ashore.")
    assert prompt == golden("judge")


def test_judge_prompt_same_story_and_empty():
    assert "[Story A]\nx\n\n[Story B]\nx\n\n" in build_judge_prompt("x", "x")
    with pytest.raises(EmptyStory):
        build_judge_prompt("x", "  ")


def test_example_output_parses_to_all_a():
    text = (FIXTURES / "judge_example_output.txt").read_text(encoding="utf-8")
    verdict = parse_verdict(text)
    assert all(verdict[d] is Choice.A for d in Dimension)


def test_same_and_tolerant_formats():
    text = (
        "Long prose.\n\nBased on my assessment, the better story for each dimension is:\n"
        "| Plot: | **B** |\n- Creativity: [A]\nDevelopment: Same\n*Language Use:* About the same\nOverall: Story B."
    )
    v = parse_verdict(text)
    assert [v[d].value for d in Dimension] == ["B", "A", "Same", "Same", "B"]


def test_last_conclusion_block_wins():
    first = _block({d: Choice.A for d in Dimension})
    second = _block({d: Choice.B for d in Dimension})
    v = parse_verdict(first + "\n\nOn reflection:\n" + second)
    assert all(v[d] is Choice.B for d in Dimension)


def test_unfilled_template_is_malformed():
    with pytest.raises(MalformedVerdict):
        parse_verdict(golden("judge"))


def test_three_dimensions_is_malformed():
    with pytest.raises(MalformedVerdict):
        parse_verdict("Based on my assessment:\nPlot: A\nCreativity: B\nDevelopment: A")
    with pytest.raises(MalformedVerdict):
        parse_verdict("")


_CHOICES = st.fixed_dictionaries({d: st.sampled_from(list(Choice)) for d in Dimension})
_PROSE = st.text(alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Zs", "Nd")), max_size=200)


@settings(max_examples=200, deadline=None)
@given(_CHOICES, _PROSE, _PROSE)
def test_parse_injected_block(choices, before, after):
    v = parse_verdict(before + "\n\n" + _block(choices) + "\n\n" + after.replace("\n", " ") + "\n")
    assert dict(v.choices) == choices


def test_schedule_counts():
    systems = [f"s{k}" for k in range(9)]
    prompts = [f"p{k}" for k in range(55)]
    tasks = schedule_pairs(systems, prompts, seed=0)
    assert len(tasks) == 1980 == 55 * 9 * 8 // 2
    assert len(schedule_pairs(["a", "b"], ["p"], 0)) == 1
    with pytest.raises(TooFewSystems):
        schedule_pairs(["a"], ["p"], 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(1, 6), st.integers(0, 2**32))
def test_schedule_pair_coverage(n, m, seed):
    systems = [f"s{k}" for k in range(n)]
    prompts = [f"p{k}" for k in range(m)]
    tasks = schedule_pairs(systems, prompts, seed)
    by_pair = Counter(frozenset((t.system_i, t.system_j)) for t in tasks)
    assert len(by_pair) == n * (n - 1) // 2
    assert set(by_pair.values()) == {m}
    assert len({(t.prompt_id, frozenset((t.system_i, t.system_j))) for t in tasks}) == len(tasks)


def test_schedule_determinism():
    systems, prompts = list("abcde"), [str(k) for k in range(20)]
    one = schedule_pairs(systems, prompts, 5)
    assert one == schedule_pairs(systems, prompts, 5)
    other = schedule_pairs(systems, prompts, 6)
    assert [t.task_id for t in one] == [t.task_id for t in other]
    assert [t.presentation for t in one] != [t.presentation for t in other]


def test_pair_task_mapping():
    task = PairTask("p", "s1", "s2", presentation="s2")
    assert (task.system_a, task.system_b) == ("s2", "s1")
    assert task.winner(Choice.A) == "s2"
    assert task.flipped().system_a == "s1"
    assert PairTask.from_json(task.to_json()) == task
    with pytest.raises(ValueError):
        PairTask("p", "s1", "s1", "s1")


def test_accumulate_examples():
    task = PairTask("p", "s1", "s2", presentation="s1")
    w = accumulate_wins([(task, _verdict(plot="A"))], Dimension.PLOT)
    assert w.wins[w.index("s1"), w.index("s2")] == 1 and w.wins[w.index("s2"), w.index("s1")] == 0
    w = accumulate_wins([(task, _verdict(plot="Same"))], Dimension.PLOT, "half")
    assert w.wins.tolist() == [[0, 0.5], [0.5, 0]]
    w = accumulate_wins([(task, _verdict(plot="Same"))], Dimension.PLOT, "drop")
    assert not w.wins.any()
    # B shown first: an "A" answer is a win for s2
    flipped = task.flipped()
    w = accumulate_wins([(flipped, _verdict(plot="A"))], Dimension.PLOT)
    assert w.wins[w.index("s2"), w.index("s1")] == 1


def test_accumulate_unknown_system():
    task = PairTask("p", "s1", "s9", presentation="s1")
    with pytest.raises(UnknownSystem):
        accumulate_wins([(task, _verdict())], Dimension.PLOT, systems=["s1", "s2"])


def test_wins_matrix_validation():
    with pytest.raises(ValueError):
        WinsMatrix(("a", "b"), np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        WinsMatrix(("a", "b"), np.array([[0.0, -1.0], [0.0, 0.0]]))


def _swapped_runs(judge, n_pairs: int, seed: int = 0):
    systems = ["x", "y"]
    tasks = schedule_pairs(systems, [str(k) for k in range(n_pairs)], seed)
    first = [(t, judge(t)) for t in tasks]
    second = [(t.flipped(), judge(t.flipped())) for t in tasks]
    return first, second


def test_consistency_position_invariant_judge():
    # always prefers system x, wherever it is shown
    judge = lambda t: _verdict(overall="A" if t.system_a == "x" else "B")  # noqa: E731
    first, second = _swapped_runs(judge, 50)
    assert consistency_rate(first, second, Dimension.OVERALL) == 1.0


def test_consistency_always_a_judge():
    first, second = _swapped_runs(lambda t: _verdict(overall="A"), 50)
    assert consistency_rate(first, second, Dimension.OVERALL) == 0.0


def test_consistency_fair_coin():
    rng = random.Random(2024)
    judge = lambda t: _verdict(overall=rng.choice("AB"))  # noqa: E731
    first, second = _swapped_runs(judge, 10_000)
    assert abs(consistency_rate(first, second, Dimension.OVERALL) - 0.5) <= 0.02


def test_consistency_mismatch():
    first, second = _swapped_runs(lambda t: _verdict(), 5)
    with pytest.raises(PairMismatch):
        consistency_rate(first, second[:-1], Dimension.PLOT)
    with pytest.raises(PairMismatch):
        consistency_rate(first, first, Dimension.PLOT)


def test_judge_pairs_records_and_round_trip(tmp_path):
    reply = _block({d: Choice.B for d in Dimension})
    judge = ScriptedBackend({"JUDGE": reply}, name="judge")
    tasks = schedule_pairs(["a", "b", "c"], ["p1", "p2"], seed=1)
    stories = {(s, p): f"story {s} {p}" for s in "abc" for p in ("p1", "p2")}
    del stories[("c", "p2")]
    records = judge_pairs(tasks, stories, judge, parallel=3)
    assert [r.task.task_id for r in records] == sorted(t.task_id for t in tasks)
    failed = [r for r in records if r.verdict is None]
    assert len(failed) == 2 and all("KeyError" in r.error for r in failed)
    path = tmp_path / "v.jsonl"
    write_verdicts(records, path)
    again = read_verdicts(path)
    assert [r.to_json() for r in again] == [r.to_json() for r in records]
    assert len(usable(again)) == 4


def test_judge_pairs_survives_unparsable_output():
    class Rambler:
        name = "rambler"

        def generate(self, request):
            return Generation("I cannot decide.", 0, 3)

    tasks = schedule_pairs(["a", "b"], ["p"], 0)
    records = judge_pairs(tasks, {("a", "p"): "x", ("b", "p"): "y"}, Rambler())
    assert records[0].verdict is None and records[0].raw == "I cannot decide."
