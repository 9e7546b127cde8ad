"""File-only figures for the ``metrics`` and ``rank`` reports."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CorpusReport  # noqa: E402
from .ranking import StrengthVector  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "agents-room",
}
# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def plot_strengths(strengths: StrengthVector, path: str | os.PathLike, title: str = "") -> None:
    ranked = strengths.ranked()
    names = [name for _, name, _ in ranked]
    values = [value for _, _, value in ranked]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 0.35 * len(names) + 1.2))
        ax.barh(range(len(names)), values, color="#4c72b0")
        ax.set_yticks(range(len(names)), names)
        ax.invert_yaxis()
        ax.set_xlabel("Bradley-Terry strength")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)


PLOTTED_FIELDS: Sequence[tuple[str, str]] = (
    ("article_start", "Article start (%)"),
    ("pronoun_start", "Pronoun start (%)"),
    ("unique_words", "Unique words (%)"),
    ("intra_rep", "Intra repetition"),
)


def plot_surface_metrics(report: CorpusReport, path: str | os.PathLike) -> None:
    """One small panel per metric, one bar per system."""
    systems = [s.system for s in report.systems]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(PLOTTED_FIELDS) + 1, figsize=(12.0, 3.0))
        panels = [("words", "Words")] + list(PLOTTED_FIELDS)
        for ax, (key, label) in zip(axes, panels):
            values = [s.means.get(key) or 0.0 for s in report.systems]
            ax.bar(range(len(systems)), values, color="#55a868")
            ax.set_xticks(range(len(systems)), systems, rotation=45, ha="right")
            ax.set_title(label)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
