"""Node orderings, their linear scores, and best-first k-best search.

A DAG factors into a total ordering of the nodes plus a choice of edges
compatible with it.  This module owns the ordering half: permutations, the
linear objective that scores an ordering against a per-node score vector,
the sorting oracle that maximizes it, and a best-first search that emits the
k highest-scoring orderings by expanding adjacent transpositions.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Permutation",
    "Frontier",
    "score",
    "sort_oracle",
    "adjacent_transpose",
    "top_k",
    "enumerate_all",
    "MAX_ENUMERATION_NODES",
]

# 9! = 362880 permutations is the largest exhaustive sweep we allow.
MAX_ENUMERATION_NODES = 9


@dataclass(frozen=True)
class Permutation:
    """Total ordering of ``d`` nodes.

    ``order[p]`` is the node placed at (0-based) position ``p``.  Ranks are
    1-based: the node at the front has rank 1, so ``rank()[order[p]] == p + 1``.
    """

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(
                f"order must be a permutation of 0..{len(self.order) - 1}, got {self.order!r}"
            )

    @property
    def d(self) -> int:
        return len(self.order)

    @classmethod
    def identity(cls, d: int) -> "Permutation":
        return cls(tuple(range(d)))

    @classmethod
    def from_rank(cls, rank) -> "Permutation":
        """Build from a 1-based rank vector, where ``rank[i]`` is node i's position."""
        rank = [int(r) for r in rank]
        order = [-1] * len(rank)
        for node, r in enumerate(rank):
            if not 1 <= r <= len(rank) or order[r - 1] != -1:
                raise ValueError(f"not a 1-based rank vector: {rank!r}")
            order[r - 1] = node
        return cls(tuple(order))

    def rank(self) -> np.ndarray:
        """1-based positions indexed by node."""
        return _rank_of(self.order)

    def inverse(self) -> "Permutation":
        return Permutation(tuple(int(r) - 1 for r in _rank_of(self.order)))

    def reversed(self) -> "Permutation":
        return Permutation(self.order[::-1])


def _rank_of(order) -> np.ndarray:
    r = np.empty(len(order), dtype=np.int64)
    r[np.asarray(order, dtype=np.int64)] = np.arange(1, len(order) + 1)
    return r


def _score_order(theta: list, order: tuple) -> float:
    # Sequential sum keeps scores bit-identical between top_k and enumerate_all.
    s = 0.0
    for pos, node in enumerate(order, start=1):
        s += theta[node] * pos
    return s


def _check_theta(theta, d: int | None = None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ValueError(f"theta must be a vector, got shape {theta.shape}")
    if d is not None and theta.shape[0] != d:
        raise ValueError(f"dimension mismatch: theta has {theta.shape[0]} entries, expected {d}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    return theta


def score(theta, sigma: Permutation) -> float:
    """Linear ordering objective: sum of ``theta[i]`` times the rank of node i."""
    theta = _check_theta(theta, sigma.d)
    return _score_order(theta.tolist(), sigma.order)


def sort_oracle(theta) -> Permutation:
    """The ordering that maximizes :func:`score`.

    Nodes sorted by ascending value get ascending ranks; ties break by
    ascending node index, so the result is deterministic.
    """
    theta = _check_theta(theta)
    return Permutation(tuple(int(i) for i in np.argsort(theta, kind="stable")))


def adjacent_transpose(sigma: Permutation, j: int) -> Permutation:
    """Swap the nodes at 1-based positions ``j`` and ``j + 1``."""
    if not 1 <= j <= sigma.d - 1:
        raise ValueError(f"position must be in 1..{sigma.d - 1}, got {j}")
    o = list(sigma.order)
    o[j - 1], o[j] = o[j], o[j - 1]
    return Permutation(tuple(o))


class Frontier:
    """Best-first search state over orderings.

    Every candidate is one adjacent transposition away from an already-emitted
    ordering (except the initial 1-best).  Extraction is deterministic:
    highest score first, ties broken by lexicographically smallest order.
    """

    def __init__(self, theta):
        theta = _check_theta(theta)
        self._theta = theta.tolist()
        self._heap: list[tuple[float, tuple[int, ...]]] = []
        self._seen: set[tuple[int, ...]] = set()
        self.emitted: list[tuple[Permutation, float]] = []
        self.max_candidates = 0
        self.push(tuple(int(i) for i in np.argsort(theta, kind="stable")))

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, order: tuple[int, ...]) -> None:
        if order not in self._seen:
            self._seen.add(order)
            heapq.heappush(self._heap, (-_score_order(self._theta, order), order))
            self.max_candidates = max(self.max_candidates, len(self._heap))

    def pop_best(self) -> tuple[Permutation, float]:
        """Emit the best unemitted candidate and enqueue its neighbors."""
        neg, order = heapq.heappop(self._heap)
        result = (Permutation(order), -neg)
        self.emitted.append(result)
        o = list(order)
        for p in range(len(o) - 1):
            o[p], o[p + 1] = o[p + 1], o[p]
            self.push(tuple(o))
            o[p], o[p + 1] = o[p + 1], o[p]
        return result


def top_k(theta, k: int) -> list[tuple[Permutation, float]]:
    """The ``k`` highest-scoring orderings with scores in non-increasing order.

    No ordering outside the returned list scores strictly higher than the last
    entry.  Raises ValueError when ``k`` exceeds d!.
    """
    theta = _check_theta(theta)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > math.factorial(theta.shape[0]):
        raise ValueError(
            f"insufficient permutations: k={k} exceeds {theta.shape[0]}! "
            f"= {math.factorial(theta.shape[0])}"
        )
    frontier = Frontier(theta)
    while len(frontier.emitted) < k:
        frontier.pop_best()
    return list(frontier.emitted)


def enumerate_all(theta) -> list[tuple[Permutation, float]]:
    """Score every ordering; exhaustive reference for validating :func:`top_k`."""
    theta = _check_theta(theta)
    d = theta.shape[0]
    if d > MAX_ENUMERATION_NODES:
        raise ValueError(
            f"refusing to enumerate {d}! orderings (limit d <= {MAX_ENUMERATION_NODES})"
        )
    tl = theta.tolist()
    return [
        (Permutation(order), _score_order(tl, order))
        for order in itertools.permutations(range(d))
    ]
