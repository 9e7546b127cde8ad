"""Surface and reference-based story metrics.

Tokenization rules:

* words: whitespace split, leading/trailing punctuation stripped, tokens that
  are pure punctuation dropped; lowercased for unique-word, trigram and
  Rouge-L computations, raw for counts;
* sentences: end at ``.``, ``!`` or ``?`` (plus any closing quotes or
  brackets) followed by whitespace or end of text;
* paragraphs: maximal runs of non-blank lines.
"""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptyInput, EmptyStory, TooFewStories

ARTICLES = frozenset({"a", "an", "the"})
PRONOUNS = frozenset(
    {
        # personal
        "i", "you", "he", "she", "it", "we", "they",
        "me", "him", "her", "us", "them",
        # possessive
        "my", "your", "his", "its", "our", "their",
        "mine", "yours", "hers", "ours", "theirs",
        # demonstrative
        "this", "that", "these", "those",
    }
)  # fmt: skip
CLITICS = frozenset({"s", "m", "d", "ll", "re", "ve", "t"})

_PUNCT = string.punctuation + "“”‘’«»—–…"
_SENTENCE_END = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s|$)")
_APOSTROPHE = re.compile(r"['’]")


def word_tokens(text: str) -> list[str]:
    """Case-preserved word tokens."""
    out = []
    for raw in text.split():
        token = raw.strip(_PUNCT)
        if token:
            out.append(token)
    return out


def words(text: str) -> list[str]:
    """Lowercased word tokens."""
    return [t.lower() for t in word_tokens(text)]


def sentences(text: str) -> list[str]:
    out = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        chunk = text[start : match.end()].strip()
        if chunk:
            out.append(chunk)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def paragraphs(text: str) -> list[str]:
    out: list[str] = []
    current: list[str] = []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            out.append("\n".join(current))
            current = []
    if current:
        out.append("\n".join(current))
    return out


def first_word(sentence: str) -> str | None:
    """Lowercased first word with any clitic removed (``he's`` -> ``he``)."""
    tokens = words(sentence)
    if not tokens:
        return None
    head, *rest = _APOSTROPHE.split(tokens[0])
    if rest and len(rest) == 1 and rest[0] in CLITICS:
        return head
    return tokens[0]


def trigrams(tokens: Sequence[str]) -> list[tuple[str, str, str]]:
    return list(zip(tokens, tokens[1:], tokens[2:]))


@dataclass(frozen=True)
class TokenizedStory:
    raw: str
    words: tuple[str, ...]
    sentences: tuple[str, ...]
    paragraphs: tuple[str, ...]

    @classmethod
    def from_text(cls, raw: str) -> TokenizedStory:
        return cls(raw, tuple(words(raw)), tuple(sentences(raw)), tuple(paragraphs(raw)))

    @property
    def trigrams(self) -> list[tuple[str, str, str]]:
        return trigrams(self.words)


# -- repetition and overlap --------------------------------------------------


def intra_trigram_repetition(story: str | Sequence[str]) -> float:
    """100 * (1 - distinct / total) over word trigrams; 0 below three words."""
    tokens = words(story) if isinstance(story, str) else list(story)
    grams = trigrams(tokens)
    if not grams:
        return 0.0
    return 100.0 * (1.0 - len(set(grams)) / len(grams))


def inter_trigram_repetition(stories: Sequence[str | Sequence[str]]) -> float:
    """Mean over stories of the percentage of their distinct trigrams that
    occur in at least one other story. Stories without trigrams count as 0."""
    if len(stories) < 2:
        raise TooFewStories("inter-story repetition needs at least two stories")
    sets = [set(trigrams(words(s) if isinstance(s, str) else list(s))) for s in stories]
    # trigram -> number of stories containing it
    df: Counter = Counter()
    for grams in sets:
        df.update(grams)
    values = []
    for grams in sets:
        if not grams:
            values.append(0.0)
            continue
        shared = sum(1 for g in grams if df[g] > 1)
        values.append(100.0 * shared / len(grams))
    return math.fsum(values) / len(values)


def prompt_overlap(story: str, prompt: str) -> float:
    """Fraction of the story's trigram occurrences that are prompt trigrams."""
    if not story.strip():
        raise EmptyStory("story is empty")
    story_grams = trigrams(words(story))
    prompt_grams = set(trigrams(words(prompt)))
    if not story_grams or not prompt_grams:
        return 0.0
    return sum(1 for g in story_grams if g in prompt_grams) / len(story_grams)


# -- Rouge-L -----------------------------------------------------------------


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, bit-parallel over ``a``."""
    if not a or not b:
        return 0
    masks: dict[str, int] = {}
    for i, token in enumerate(a):
        masks[token] = masks.get(token, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for token in b:
        u = v & masks.get(token, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


@dataclass(frozen=True)
class RougeL:
    precision: float
    recall: float
    f1: float


def rouge_l(candidate: str, reference: str) -> RougeL:
    cand = words(candidate)
    ref = words(reference)
    if not cand or not ref:
        raise EmptyInput("rouge_l needs two nonempty texts")
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return RougeL(0.0, 0.0, 0.0)
    p = lcs / len(cand)
    r = lcs / len(ref)
    return RougeL(p, r, 2 * p * r / (p + r))


# -- per-story and corpus reports ----------------------------------------------


@dataclass
class SurfaceMetrics:
    words: int
    paragraphs: int
    sentences: int
    article_start: float
    pronoun_start: float
    unique_words: float
    intra_rep: float
    prompt_overlap: float
    rouge_l_f: float | None = None
    bert_score: float | None = None
    # raw counts so token- or type-based conventions can be recomputed
    trigrams_total: int = 0
    trigrams_distinct: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def compute_surface_metrics(
    story: str, prompt: str = "", reference: str | None = None
) -> SurfaceMetrics:
    if not story or not story.strip():
        raise EmptyStory("story is empty")
    tok = TokenizedStory.from_text(story)
    firsts = [first_word(s) for s in tok.sentences]
    n_sent = len(tok.sentences)
    grams = tok.trigrams
    n_words = len(tok.words)
    return SurfaceMetrics(
        words=n_words,
        paragraphs=len(tok.paragraphs),
        sentences=n_sent,
        article_start=100.0 * sum(w in ARTICLES for w in firsts) / n_sent if n_sent else 0.0,
        pronoun_start=100.0 * sum(w in PRONOUNS for w in firsts) / n_sent if n_sent else 0.0,
        unique_words=100.0 * len(set(tok.words)) / n_words if n_words else 0.0,
        intra_rep=intra_trigram_repetition(tok.words),
        prompt_overlap=prompt_overlap(story, prompt) if prompt else 0.0,
        rouge_l_f=rouge_l(story, reference).f1 if reference else None,
        trigrams_total=len(grams),
        trigrams_distinct=len(set(grams)),
    )


MEAN_FIELDS = (
    "words",
    "paragraphs",
    "sentences",
    "article_start",
    "pronoun_start",
    "unique_words",
    "intra_rep",
    "prompt_overlap",
    "rouge_l_f",
    "bert_score",
)


@dataclass
class SystemReport:
    system: str
    stories: dict[str, SurfaceMetrics]
    means: dict[str, float | None]
    inter_rep: float | None

    def to_json(self) -> dict:
        return {
            "system": self.system,
            "means": self.means,
            "inter_rep": self.inter_rep,
            "stories": {k: v.to_json() for k, v in self.stories.items()},
        }


@dataclass
class CorpusReport:
    systems: list[SystemReport] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"systems": [s.to_json() for s in self.systems]}


def _means(metrics: Iterable[SurfaceMetrics]) -> dict[str, float | None]:
    metrics = list(metrics)
    out: dict[str, float | None] = {}
    for name in MEAN_FIELDS:
        values = [getattr(m, name) for m in metrics if getattr(m, name) is not None]
        out[name] = math.fsum(values) / len(values) if values else None
    return out


def system_report(
    system: str,
    stories: Mapping[str, str],
    prompts: Mapping[str, str] | None = None,
    references: Mapping[str, str] | None = None,
) -> SystemReport:
    """Metrics for one system; ``stories`` maps story id to text. Ids are
    processed in sorted order so the report is deterministic."""
    prompts = prompts or {}
    references = references or {}
    per_story = {
        sid: compute_surface_metrics(stories[sid], prompts.get(sid, ""), references.get(sid))
        for sid in sorted(stories)
    }
    inter = (
        inter_trigram_repetition([stories[sid] for sid in sorted(stories)])
        if len(stories) >= 2
        else None
    )
    return SystemReport(system, per_story, _means(per_story.values()), inter)


TABLE_COLUMNS = (
    ("#words", "words", "{:,.0f}"),
    ("#para", "paragraphs", "{:.2f}"),
    ("Article", "article_start", "{:.2f}"),
    ("Pro", "pronoun_start", "{:.2f}"),
    ("Unique", "unique_words", "{:.2f}"),
    ("Intra", "intra_rep", "{:.2f}"),
    ("Inter", None, "{:.2f}"),
    ("Overlap", "prompt_overlap", "{:.4f}"),
    ("Rouge", "rouge_l_f", "{:.2f}"),
    ("BertSc", "bert_score", "{:.4f}"),
)


def format_table(report: CorpusReport) -> str:
    """Plain-text table, one row per system. Rouge-L is shown as a
    percentage; missing values print as ``---``."""
    header = ["Models"] + [name for name, _, _ in TABLE_COLUMNS]
    rows = [header]
    for sys_report in report.systems:
        row = [sys_report.system]
        for name, key, fmt in TABLE_COLUMNS:
            value = sys_report.inter_rep if key is None else sys_report.means.get(key)
            if value is not None and key == "rouge_l_f":
                value *= 100.0
            row.append("---" if value is None else fmt.format(value))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)
