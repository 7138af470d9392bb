"""Sparse probability distributions over node orderings.

Two differentiable relaxations of the ordering argmax, each returning a small
weighted set of orderings instead of a single winner:

* :func:`topk_sparsemax` projects the scores of the k best orderings onto the
  probability simplex; the projection's exact zeros prune the support.
* :func:`sparsemap` runs an active-set method whose marginal rank vector is
  the Euclidean projection of ``theta / tau`` onto the permutahedron, so the
  support is a face of that polytope (at most d + 1 orderings at convergence).

Both come with an analytic backward pass mapping a loss per supported
ordering to a gradient in the score vector.  The gradient is exact wherever
the support is locally constant; at support-change boundaries it is the
one-sided gradient of the support actually computed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perms import Permutation, _check_theta, _score_order, sort_oracle, top_k

__all__ = [
    "TOPK_SPARSEMAX",
    "SPARSEMAP",
    "SparseOrderDistribution",
    "MarginalPoint",
    "simplex_project",
    "topk_sparsemax",
    "sparsemap",
    "marginal",
    "backward_theta",
]

TOPK_SPARSEMAX = "topk_sparsemax"
SPARSEMAP = "sparsemap"

# Weights at or below this are treated as the exact zeros of the projection.
PRUNE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class SparseOrderDistribution:
    """Probability weights over a small support of orderings."""

    support: tuple[Permutation, ...]
    alpha: np.ndarray
    tau: float
    kind: str
    converged: bool = True

    def __post_init__(self):
        if self.kind not in (TOPK_SPARSEMAX, SPARSEMAP):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not self.support:
            raise ValueError("support must be non-empty")
        alpha = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        if alpha.shape != (len(self.support),):
            raise ValueError("alpha and support lengths differ")
        if np.any(alpha < 0):
            raise ValueError("alpha must be non-negative")
        if abs(float(alpha.sum()) - 1.0) > 1e-9:
            raise ValueError(f"alpha must sum to 1, got {alpha.sum()!r}")
        if len({p.order for p in self.support}) != len(self.support):
            raise ValueError("support orderings must be pairwise distinct")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def d(self) -> int:
        return self.support[0].d

    def mode(self) -> Permutation:
        """Highest-probability ordering (first maximizer on ties)."""
        return self.support[int(np.argmax(self.alpha))]


@dataclass(frozen=True, eq=False)
class MarginalPoint:
    """A point inside the permutahedron: an expected rank vector."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        d = mu.shape[0]
        if abs(float(mu.sum()) - d * (d + 1) / 2) > 1e-6:
            raise ValueError("marginal must sum to d(d+1)/2")
        # Majorization by (d, d-1, ..., 1): partial sums of the sorted vector
        # cannot exceed those of the vertex profile.
        top = np.cumsum(np.sort(mu)[::-1])
        cap = np.cumsum(np.arange(d, 0, -1))
        if np.any(top > cap + 1e-6):
            raise ValueError("marginal lies outside the permutahedron")

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def simplex_project(s) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort + threshold)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("expected a non-empty vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("entries must be finite")
    u = np.sort(s)[::-1]
    cssv = np.cumsum(u) - 1.0
    idx = np.arange(1, s.size + 1)
    rho = int(np.nonzero(u - cssv / idx > 0)[0][-1])
    return np.maximum(s - cssv[rho] / (rho + 1.0), 0.0)


def topk_sparsemax(theta, k: int, tau: float = 1.0) -> SparseOrderDistribution:
    """Sparsemax over the k highest-scoring orderings.

    The support is the k-best set from :func:`daguerro.perms.top_k`; weights
    are the simplex projection of ``scores / tau`` with exact zeros dropped.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    ranked = top_k(theta, k)
    scores = np.array([s for _, s in ranked], dtype=float)
    alpha = simplex_project(scores / tau)
    keep = alpha > PRUNE_EPS
    support = tuple(p for (p, _), kp in zip(ranked, keep) if kp)
    return SparseOrderDistribution(support, alpha[keep], float(tau), TOPK_SPARSEMAX)


def sparsemap(
    theta,
    tau: float = 1.0,
    max_iter: int = 100,
    init: Permutation | None = None,
    tol: float = 1e-8,
) -> SparseOrderDistribution:
    """Active-set solution of the regularized ordering problem.

    Each iteration sorts the residual direction to propose a new ordering and
    re-solves the restricted QP over the current support.  At convergence the
    weighted rank vector equals the Euclidean projection of ``theta / tau``
    onto the permutahedron.  ``init`` warm-starts the active set; on hitting
    ``max_iter`` the best iterate is returned with ``converged=False``.
    """
    theta = _check_theta(theta)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    eta = theta / tau
    first = init if init is not None else sort_oracle(eta)
    if first.d != theta.shape[0]:
        raise ValueError("init permutation has the wrong dimension")
    orders: list[tuple[int, ...]] = [first.order]
    ranks: list[np.ndarray] = [first.rank().astype(float)]
    alpha = np.array([1.0])
    converged = False
    for _ in range(max_iter):
        M = np.stack(ranks, axis=1)
        s = M.shape[1]
        # Restricted QP over the current support, equality constraint only:
        #   [0  1^T] [t]     [1      ]
        #   [1  M'M] [a]  =  [M' eta ]
        kkt = np.zeros((s + 1, s + 1))
        kkt[0, 1:] = 1.0
        kkt[1:, 0] = 1.0
        kkt[1:, 1:] = M.T @ M
        rhs = np.concatenate(([1.0], M.T @ eta))
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        t, cand = float(sol[0]), sol[1:]
        if cand.min() < -PRUNE_EPS:
            # Walk toward the equality solution until the first weight hits
            # zero, then drop that ordering from the support.
            neg = cand < 0
            gamma = float(np.min(alpha[neg] / (alpha[neg] - cand[neg])))
            alpha = np.clip((1.0 - gamma) * alpha + gamma * cand, 0.0, None)
            keep = alpha > PRUNE_EPS
            if keep.all():
                keep[int(np.argmin(alpha))] = False
            orders = [o for o, kp in zip(orders, keep) if kp]
            ranks = [r for r, kp in zip(ranks, keep) if kp]
            alpha = alpha[keep]
            alpha = alpha / alpha.sum()
            continue
        alpha = np.clip(cand, 0.0, None)
        mu = M @ alpha
        resid = eta - mu
        best = sort_oracle(resid)
        # All active orderings score exactly t against the residual; nothing
        # scoring higher means no structure violates optimality.
        if _score_order(resid.tolist(), best.order) - t <= tol or best.order in orders:
            converged = True
            break
        orders.append(best.order)
        ranks.append(best.rank().astype(float))
        alpha = np.append(alpha, 0.0)
    keep = alpha > PRUNE_EPS
    support = tuple(Permutation(o) for o, kp in zip(orders, keep) if kp)
    alpha = alpha[keep]
    alpha = alpha / alpha.sum()
    return SparseOrderDistribution(support, alpha, float(tau), SPARSEMAP, converged)


def marginal(dist: SparseOrderDistribution) -> MarginalPoint:
    """Expected rank vector of the distribution."""
    mu = np.zeros(dist.d)
    for a, p in zip(dist.alpha, dist.support):
        mu += a * p.rank()
    return MarginalPoint(mu)


def backward_theta(dist: SparseOrderDistribution, loss_per_perm) -> np.ndarray:
    """Gradient in theta of the expected loss under the distribution.

    ``loss_per_perm`` must align with ``dist.support``.  For top-k sparsemax
    the Jacobian of the simplex projection centers the losses over the
    support; for the active-set operator the restricted QP is differentiated
    implicitly over the final support.
    """
    L = np.asarray(loss_per_perm, dtype=float)
    if L.shape != (len(dist.support),):
        raise ValueError(
            f"loss_per_perm has {L.shape} entries, support has {len(dist.support)}"
        )
    if not np.all(np.isfinite(L)):
        raise ValueError("losses must be finite")
    d = dist.d
    s = len(dist.support)
    if s == 1:
        return np.zeros(d)
    R = np.stack([p.rank().astype(float) for p in dist.support], axis=1)
    if dist.kind == TOPK_SPARSEMAX:
        return R @ (L - L.mean()) / dist.tau
    Z = R.T @ R
    ones = np.ones(s)
    try:
        ZiL = np.linalg.solve(Z, L)
        Zi1 = np.linalg.solve(Z, ones)
    except np.linalg.LinAlgError:
        Zp = np.linalg.pinv(Z)
        ZiL = Zp @ L
        Zi1 = Zp @ ones
    coef = ZiL - Zi1 * (ZiL.sum() / Zi1.sum())
    return R @ coef / dist.tau
