"""Bradley-Terry strengths from a wins matrix, and Spearman's rho."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DisconnectedGraph, LengthMismatch, NotConverged
from .judge import WinsMatrix

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class StrengthVector:
    systems: tuple[str, ...]
    strengths: np.ndarray
    iterations: int = 0

    def __post_init__(self) -> None:
        if np.any(self.strengths <= 0):
            raise ValueError("strengths must be strictly positive")
        if abs(float(self.strengths.sum()) - 1.0) > 1e-9:
            raise ValueError("strengths must sum to 1")

    def as_dict(self) -> dict[str, float]:
        return {s: float(p) for s, p in zip(self.systems, self.strengths)}

    def ranked(self) -> list[tuple[int, str, float]]:
        """(rank, system, strength), strongest first; ties keep input order."""
        order = sorted(range(len(self.systems)), key=lambda k: (-self.strengths[k], k))
        return [(r + 1, self.systems[k], float(self.strengths[k])) for r, k in enumerate(order)]

    def to_json(self) -> str:
        rows = [{"rank": r, "system": s, "strength": p} for r, s, p in self.ranked()]
        return json.dumps({"iterations": self.iterations, "strengths": rows}, indent=2)


def _strongly_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]

    def reach(adj: np.ndarray) -> int:
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen)

    return reach(adjacency) == n and reach(adjacency.T) == n


def fit_bradley_terry(
    W: WinsMatrix,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> StrengthVector:
    """Maximum-likelihood Bradley-Terry strengths by minorization-maximization.

    ``epsilon`` is added to every off-diagonal cell before fitting. The update
    is ``p_i <- W_i / sum_j n_ij / (p_i + p_j)`` with ``W_i`` the total wins of
    ``i`` and ``n_ij`` the comparisons between ``i`` and ``j``, followed by
    renormalization to sum 1, until the largest relative change is below
    ``tol``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    wins = np.array(W.wins, dtype=float)
    n = wins.shape[0]
    if n < 2:
        raise ValueError("need at least two systems")
    wins += epsilon * (1.0 - np.eye(n))
    # The MLE exists iff every system beats and is beaten along some chain.
    if not _strongly_connected(wins > 0):
        raise DisconnectedGraph(
            "comparison graph is not strongly connected; use epsilon > 0"
        )

    games = wins + wins.T
    total_wins = wins.sum(axis=1)
    p = np.full(n, 1.0 / n)
    for iteration in range(1, max_iter + 1):
        denom = (games / (p[:, None] + p[None, :])).sum(axis=1)
        new = total_wins / denom
        new /= new.sum()
        change = float(np.max(np.abs(new - p) / p))
        p = new
        if change < tol:
            return StrengthVector(W.systems, p, iteration)
    raise NotConverged(f"no convergence after {max_iter} iterations (last change {change:.3g})")


def _average_ranks(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    k = 0
    while k < len(x):
        m = k
        while m + 1 < len(x) and x[order[m + 1]] == x[order[k]]:
            m += 1
        ranks[order[k : m + 1]] = (k + m) / 2.0 + 1.0
        k = m + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks; NaN if either side is constant."""
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least two observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    norm = math.sqrt(float((dx * dx).sum()) * float((dy * dy).sum()))
    if norm == 0:
        return float("nan")
    return float((dx * dy).sum()) / norm
