"""Graph-recovery metrics and ordering-sensitivity diagnostics."""

from __future__ import annotations

import warnings

import numpy as np

from .perms import Permutation, sort_oracle
from .sem import is_acyclic

__all__ = [
    "LooseBoundWarning",
    "shd",
    "sid",
    "f1",
    "complete_dag_shd",
    "segment_crossings",
    "stable_interval",
]


class LooseBoundWarning(UserWarning):
    """Ties make the reported crossing count an upper bound only."""


def _check_adjacency(A, name: str = "adjacency") -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.isin(A, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    if np.any(np.diag(A) != 0):
        raise ValueError(f"{name} must have a zero diagonal")
    return A.astype(np.int64)


def _check_pair(est, truth) -> tuple[np.ndarray, np.ndarray]:
    E = _check_adjacency(est, "est")
    T = _check_adjacency(truth, "truth")
    if E.shape != T.shape:
        raise ValueError(f"graph sizes differ: {E.shape[0]} vs {T.shape[0]}")
    return E, T


def shd(est, truth) -> int:
    """Structural Hamming distance with unit reversal cost.

    Counted over unordered node pairs: a pair contributes 1 whenever its edge
    pattern (absent, forward, backward, both) differs between the graphs, so
    a reversed edge costs 1, not 2.
    """
    E, T = _check_pair(est, truth)
    iu = np.triu_indices(E.shape[0], k=1)
    return int(np.sum((E[iu] != T[iu]) | (E.T[iu] != T.T[iu])))


def f1(est, truth) -> float:
    """F1 over directed edge presence; two empty graphs count as a perfect match."""
    E, T = _check_pair(est, truth)
    tp = int(np.sum((E == 1) & (T == 1)))
    fp = int(np.sum((E == 1) & (T == 0)))
    fn = int(np.sum((E == 0) & (T == 1)))
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def _descendants(A: np.ndarray) -> np.ndarray:
    """D[i, j] true iff j is reachable from i (every node reaches itself)."""
    d = A.shape[0]
    D = np.eye(d, dtype=bool)
    children = [np.flatnonzero(A[v]) for v in range(d)]
    for i in range(d):
        stack = [i]
        while stack:
            v = stack.pop()
            for c in children[v]:
                if not D[i, c]:
                    D[i, c] = True
                    stack.append(int(c))
    return D


def _reachable(children, parents, src: int, given: frozenset, removed: frozenset) -> set:
    """Nodes connected to ``src`` by an active trail given ``given``.

    Standard two-phase reachability: ancestors of the conditioning set first,
    then a traversal over (node, direction) states.  ``removed`` is a set of
    (parent, child) edges to ignore.
    """
    anc = set(given)
    stack = list(given)
    while stack:
        v = stack.pop()
        for p in parents[v]:
            if (p, v) not in removed and p not in anc:
                anc.add(p)
                stack.append(p)
    reach: set = set()
    visited: set = set()
    agenda: list[tuple[int, bool]] = [(src, True)]  # True: entered from a child
    while agenda:
        node, up = agenda.pop()
        if (node, up) in visited:
            continue
        visited.add((node, up))
        if node not in given and node != src:
            reach.add(node)
        if up:
            if node not in given:
                for p in parents[node]:
                    if (p, node) not in removed:
                        agenda.append((p, True))
                for c in children[node]:
                    if (node, c) not in removed:
                        agenda.append((c, False))
        else:
            if node not in given:
                for c in children[node]:
                    if (node, c) not in removed:
                        agenda.append((c, False))
            if node in anc:  # collider opened by the conditioning set
                for p in parents[node]:
                    if (p, node) not in removed:
                        agenda.append((p, True))
    return reach


def sid(est, truth) -> int:
    """Structural intervention distance.

    Counts ordered pairs (i, j) whose cause-effect estimate, obtained from
    ``est`` by adjusting for est-parents of i, is not valid for ``truth``.
    Validity of the parent set as an adjustment set follows the generalized
    adjustment criterion: it must avoid descendants of causal-path nodes, and
    it must block i from j in the graph with i's causal-path edges removed.
    A claimed parent j is valid exactly when truth has no directed path i -> j.
    """
    E, T = _check_pair(est, truth)
    if not is_acyclic(E):
        raise ValueError("est must be acyclic")
    if not is_acyclic(T):
        raise ValueError("truth must be acyclic")
    d = T.shape[0]
    D = _descendants(T)
    children = [list(map(int, np.flatnonzero(T[v]))) for v in range(d)]
    parents = [list(map(int, np.flatnonzero(T[:, v]))) for v in range(d)]
    count = 0
    for i in range(d):
        Z = frozenset(map(int, np.flatnonzero(E[:, i])))
        for j in range(d):
            if j == i:
                continue
            if j in Z:
                count += bool(D[i, j])
                continue
            causal_nodes = np.flatnonzero(D[i] & D[:, j])
            causal_nodes = causal_nodes[causal_nodes != i]
            removed = frozenset()
            if causal_nodes.size:
                forbidden = D[causal_nodes].any(axis=0)
                if any(forbidden[z] for z in Z):
                    count += 1
                    continue
                removed = frozenset((i, int(v)) for v in causal_nodes if T[i, v])
            if j in _reachable(children, parents, i, Z, removed):
                count += 1
    return count


def complete_dag_shd(sigma1: Permutation, sigma2: Permutation) -> int:
    """SHD between the complete DAGs of two orderings.

    Complete DAGs differ only by edge reversals, so this is exactly the number
    of discordant node pairs between the two rank vectors.
    """
    if sigma1.d != sigma2.d:
        raise ValueError("orderings must have the same node count")
    r1 = sigma1.rank()
    r2 = sigma2.rank()
    iu = np.triu_indices(sigma1.d, k=1)
    g1 = (r1[:, None] - r1[None, :])[iu]
    g2 = (r2[:, None] - r2[None, :])[iu]
    return int(np.sum(g1 * g2 < 0))


def segment_crossings(theta1, theta2) -> int:
    """Equal-coordinate hyperplanes crossed by the segment between two score vectors.

    Counts pairs i < j whose coordinate gap changes sign between the
    endpoints.  If either endpoint has ties the count is only an upper bound
    and a :class:`LooseBoundWarning` is emitted.
    """
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    if t1.shape != t2.shape or t1.ndim != 1:
        raise ValueError("theta vectors must share one dimension")
    iu = np.triu_indices(t1.shape[0], k=1)
    g1 = (t1[:, None] - t1[None, :])[iu]
    g2 = (t2[:, None] - t2[None, :])[iu]
    if np.any(g1 == 0) or np.any(g2 == 0):
        warnings.warn("ties present; crossing count may be loose", LooseBoundWarning)
    return int(np.sum(g1 * g2 < 0))


def stable_interval(theta, i: int) -> tuple[float, float]:
    """Open interval of perturbations of ``theta[i]`` preserving the sorted ordering.

    The node ranked first may decrease without bound and the node ranked last
    may increase without bound; interior nodes are boxed by the gaps to their
    sorted neighbors.  Raises on ties, where the interval degenerates.
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    if not 0 <= i < d:
        raise ValueError(f"node {i} out of range")
    srt = np.sort(theta)
    if np.any(np.diff(srt) == 0):
        raise ValueError("theta has ties; the stable interval is degenerate")
    pos = int(sort_oracle(theta).rank()[i])
    lo = -np.inf if pos == 1 else float(srt[pos - 2] - theta[i])
    hi = np.inf if pos == d else float(srt[pos] - theta[i])
    return (lo, hi)
