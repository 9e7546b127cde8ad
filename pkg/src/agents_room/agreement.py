"""Rater agreement and rater-to-item assignment."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Hashable, Sequence

from .errors import InsufficientCapacity, RaggedTable

logger = logging.getLogger(__name__)


def fleiss_kappa(ratings: Sequence[Sequence[Hashable]]) -> float:
    """Fleiss' kappa for an item x rater table of category labels.

    Every item must carry the same number (>= 2) of ratings. When chance
    agreement is already perfect (a single category used throughout) the
    value is defined as 1.0.
    """
    if not ratings:
        raise RaggedTable("no items")
    n = len(ratings[0])
    if n < 2:
        raise RaggedTable("need at least two raters per item")
    if any(len(row) != n for row in ratings):
        raise RaggedTable("every item needs the same number of ratings")

    counts = [Counter(row) for row in ratings]
    items = len(ratings)
    p_items = [(sum(c * c for c in cnt.values()) - n) / (n * (n - 1)) for cnt in counts]
    p_bar = sum(p_items) / items
    totals: Counter = Counter()
    for cnt in counts:
        totals.update(cnt)
    p_e = sum((v / (items * n)) ** 2 for v in totals.values())
    if p_e == 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def latin_square_assign(
    raters: Sequence[str],
    items: Sequence[tuple[str, str]],
    per_rater_cap: int,
) -> dict[str, list[str]]:
    """Assign ``(item_id, prompt_id)`` items to raters.

    Items are grouped by prompt and dealt out cyclically, so a prompt's items
    land on distinct raters and loads differ by at most one. Raises
    InsufficientCapacity when some prompt has more items than there are
    raters, or the total exceeds ``len(raters) * per_rater_cap``.
    """
    raters = list(raters)
    if not raters or len(set(raters)) != len(raters):
        raise ValueError("raters must be a nonempty list of distinct names")
    if per_rater_cap < 1:
        raise ValueError("per_rater_cap must be positive")
    ids = [item_id for item_id, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("item ids must be unique")

    groups: dict[str, list[str]] = {}
    for item_id, prompt_id in items:
        groups.setdefault(prompt_id, []).append(item_id)
    for prompt_id, members in groups.items():
        if len(members) > len(raters):
            raise InsufficientCapacity(
                f"prompt {prompt_id!r} has {len(members)} items but only {len(raters)} raters"
            )
    if len(items) > len(raters) * per_rater_cap:
        raise InsufficientCapacity(
            f"{len(items)} items exceed capacity {len(raters)} x {per_rater_cap}"
        )

    assignment: dict[str, list[str]] = {r: [] for r in raters}
    k = 0
    for members in groups.values():
        for item_id in members:
            assignment[raters[k % len(raters)]].append(item_id)
            k += 1
    return assignment
