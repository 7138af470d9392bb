"""Structural-equation layer: masked linear predictors and sparse edge fits.

An ordering induces an acyclic edge mask (all edges point from earlier to
later nodes).  Given data and a mask, two estimators prune the complete DAG
down to a sparse one:

* a gated linear model trained by straight-through gradients on Bernoulli
  gate probabilities (an approximate L0 penalty), and
* a least-angle-regression path whose candidate supports are refit by OLS and
  scored with the Bayesian Information Criterion.

Every graph produced here is acyclic by construction: weights can only be
nonzero where the mask allows them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sklearn.linear_model import lars_path

from .errors import DataError, NumericError
from .perms import Permutation

__all__ = [
    "LINEAR_L0",
    "LARS",
    "Dataset",
    "EdgeMask",
    "EdgeParameters",
    "FinalGraph",
    "PerfectFitWarning",
    "is_acyclic",
    "topological_order",
    "standardize",
    "predict",
    "loss_ev_gaussian",
    "loss_mse",
    "fit_l0",
    "finalize_l0",
    "fit_lars",
]

LINEAR_L0 = "linear_l0"
LARS = "lars"


class PerfectFitWarning(UserWarning):
    """Residuals vanished; the log-likelihood score is unbounded below."""


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, Dataset):
        return X.X
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {X.shape}")
    return X


def is_acyclic(A) -> bool:
    """Kahn's algorithm on a binary adjacency matrix."""
    A = np.asarray(A) != 0
    d = A.shape[0]
    indeg = A.sum(axis=0).astype(int)
    stack = [v for v in range(d) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for c in np.flatnonzero(A[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(int(c))
    return seen == d


def topological_order(A) -> list[int]:
    """Any topological order of an acyclic adjacency matrix (raises if cyclic)."""
    A = np.asarray(A) != 0
    d = A.shape[0]
    indeg = A.sum(axis=0).astype(int)
    stack = sorted((v for v in range(d) if indeg[v] == 0), reverse=True)
    out: list[int] = []
    while stack:
        v = stack.pop()
        out.append(v)
        for c in np.flatnonzero(A[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(int(c))
    if len(out) != d:
        raise ValueError("graph contains a directed cycle")
    return out


def standardize(X) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns map to zero."""
    X = _as_matrix(X)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    return (X - mu) / sd


@dataclass
class Dataset:
    """Observation matrix with optional names and ground-truth adjacency."""

    X: np.ndarray
    names: list[str] | None = None
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] < 1 or self.X.shape[1] < 2:
            raise DataError(f"X must be n x d with n >= 1, d >= 2; got shape {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise DataError("X contains non-finite values")
        if self.names is not None and len(self.names) != self.d:
            raise DataError(f"{len(self.names)} names for {self.d} columns")
        if self.truth is not None:
            truth = np.asarray(self.truth)
            if truth.shape != (self.d, self.d):
                raise DataError(f"truth must be {self.d} x {self.d}, got {truth.shape}")
            if not np.isin(truth, (0, 1)).all():
                raise DataError("truth adjacency must be binary")
            if np.any(np.diag(truth) != 0):
                raise DataError("truth adjacency must have a zero diagonal")
            if not is_acyclic(truth):
                raise DataError("truth adjacency contains a directed cycle")
            self.truth = truth.astype(np.int64)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Allowed-edge structure of an ordering: i may point at j iff i comes first.

    The identity ordering yields the strictly upper triangular all-ones mask;
    any ordering's mask is acyclic by construction.
    """

    sigma: Permutation

    @cached_property
    def matrix(self) -> np.ndarray:
        r = self.sigma.rank()
        m = r[:, None] < r[None, :]
        m.setflags(write=False)
        return m

    @property
    def d(self) -> int:
        return self.sigma.d

    def column(self, j: int) -> np.ndarray:
        return self.matrix[:, j]


@dataclass
class EdgeParameters:
    """Fitted per-column weights and (for the gated model) gate probabilities."""

    W_hat: np.ndarray
    Pi: np.ndarray
    estimator_kind: str = LINEAR_L0
    loss_history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True, eq=False)
class FinalGraph:
    """A finished estimate: binary adjacency plus matching weights."""

    A: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A)
        W = np.asarray(self.W, dtype=float)
        if A.shape != W.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A and W must be square matrices of the same shape")
        if not np.isin(A, (0, 1)).all():
            raise ValueError("A must be binary")
        if np.any((A == 0) & (W != 0)):
            raise ValueError("W must vanish wherever A is zero")
        if not is_acyclic(A):
            raise ValueError("adjacency contains a directed cycle")
        object.__setattr__(self, "A", A.astype(np.int64))
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def edges(self) -> int:
        return int(self.A.sum())


def predict(X, W, mask: EdgeMask, j: int) -> np.ndarray:
    """Masked linear prediction of column ``j`` from its allowed parents."""
    Xm = _as_matrix(X)
    W = np.asarray(W, dtype=float)
    if W.shape != (Xm.shape[1], Xm.shape[1]) or mask.d != Xm.shape[1]:
        raise ValueError("weight/mask shapes do not match the data")
    if not 0 <= j < Xm.shape[1]:
        raise ValueError(f"column {j} out of range")
    return Xm @ (W[:, j] * mask.matrix[:, j])


def _total_sq_residual(Xm: np.ndarray, W_eff: np.ndarray) -> float:
    R = Xm - Xm @ W_eff
    return float(np.sum(R * R))


def loss_ev_gaussian(X, W, mask: EdgeMask) -> float:
    """Equal-variance Gaussian likelihood score: (d/2) log of the total squared residual.

    The hard acyclic mask zeroes the usual log-determinant correction, leaving
    the residual term alone.  A perfect fit returns -inf with a warning.
    """
    Xm = _as_matrix(X)
    total = _total_sq_residual(Xm, np.asarray(W, dtype=float) * mask.matrix)
    d = Xm.shape[1]
    if total < 1e-300:
        warnings.warn("residuals vanished; returning -inf", PerfectFitWarning)
        return float("-inf")
    return 0.5 * d * math.log(total)


def loss_mse(X, W, mask: EdgeMask) -> float:
    """Total squared residual divided by the sample count."""
    Xm = _as_matrix(X)
    return _total_sq_residual(Xm, np.asarray(W, dtype=float) * mask.matrix) / Xm.shape[0]


def _ev_loss_from_total(total: float, d: int) -> float:
    if total < 1e-300:
        return float("-inf")
    return 0.5 * d * math.log(total)


def fit_l0(
    X,
    mask: EdgeMask,
    lam: float,
    lr: float = 0.01,
    epochs: int = 1000,
    seed: int = 0,
    l2: float = 0.0,
    init: EdgeParameters | None = None,
    stop_tol: float = 1e-5,
    stop_window: int = 50,
) -> EdgeParameters:
    """Gated linear fit with a one-sample straight-through gradient estimator.

    Per column, minimizes the expected squared error under Bernoulli(pi)
    gates plus ``lam`` times the sum of gate probabilities.  Gates are sampled
    binary on the forward pass; the backward pass treats them as identity.
    Gate probabilities stay clipped to [0, 1].  Gate randomness is drawn from
    per-column generators derived from ``seed``, so results do not depend on
    column scheduling.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    Xm = _as_matrix(X)
    n, d = Xm.shape
    if mask.d != d:
        raise ValueError("mask dimension does not match data")
    M = mask.matrix.astype(float)
    if init is not None:
        W = np.array(init.W_hat, dtype=float) * M
        Pi = np.clip(np.array(init.Pi, dtype=float), 0.0, 1.0) * M
    else:
        W = np.zeros((d, d))
        Pi = 0.5 * M
    rngs = [np.random.default_rng((int(seed), j)) for j in range(d)]
    S = Xm.T @ Xm
    tr_s = float(np.trace(S))
    history: list[float] = []
    for epoch in range(epochs):
        U = np.column_stack([rng.random(d) for rng in rngs])
        Z = ((U < Pi) & (M > 0)).astype(float)
        W_eff = W * Z
        G = (2.0 / n) * (S @ W_eff - S)
        if not np.all(np.isfinite(G)):
            raise NumericError(f"non-finite gradient at epoch {epoch} (lr too large?)")
        g_pi = G * W + lam
        W = W - lr * (G * Z + 2.0 * l2 * W)
        W *= M
        Pi = np.clip(Pi - lr * g_pi, 0.0, 1.0) * M
        if not np.all(np.isfinite(W)):
            raise NumericError(f"non-finite weights at epoch {epoch} (lr too large?)")
        W_map = W * (Pi > 0.5)
        total = tr_s - 2.0 * float(np.sum(W_map * S)) + float(np.sum(W_map * (S @ W_map)))
        history.append(_ev_loss_from_total(max(total, 0.0), d))
        if history[-1] == float("-inf"):
            break
        if len(history) > stop_window:
            prev = history[-stop_window - 1]
            if prev - history[-1] < stop_tol * max(1.0, abs(prev)):
                break
    return EdgeParameters(W, Pi, LINEAR_L0, loss_history=history)


def finalize_l0(params: EdgeParameters, mask: EdgeMask) -> FinalGraph:
    """Threshold gates at 1/2 into a hard graph.

    A gate probability of exactly 1/2 maps to an absent edge (the sparser
    choice of the step-function boundary).
    """
    if params.estimator_kind != LINEAR_L0:
        raise ValueError("finalize_l0 expects gated-linear parameters")
    A = (mask.matrix & (params.Pi > 0.5)).astype(np.int64)
    return FinalGraph(A, params.W_hat * A)


def _lars_bic_column(Xp: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    """Parent weights for one column: LARS path supports, OLS refit, BIC pick.

    Coefficients at the path knots are shrunk, which makes likelihood-based
    criteria over-select; refitting each candidate support by OLS restores the
    usual BIC false-positive behavior.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, _, coefs = lars_path(Xp, y, method="lasso")
    log_n = math.log(n)
    best_bic = math.inf
    best_w = np.zeros(Xp.shape[1])
    seen: set[tuple[int, ...]] = set()
    for col in range(coefs.shape[1]):
        sup = tuple(int(i) for i in np.flatnonzero(coefs[:, col]))
        if sup in seen:
            continue
        seen.add(sup)
        if sup:
            sel = np.array(sup)
            w_ols, *_ = np.linalg.lstsq(Xp[:, sel], y, rcond=None)
            rss = float(np.sum((y - Xp[:, sel] @ w_ols) ** 2))
        else:
            w_ols = None
            rss = float(np.sum(y * y))
        bic = n * math.log(max(rss, 1e-300) / n) + len(sup) * log_n
        if bic < best_bic:
            best_bic = bic
            best_w = np.zeros(Xp.shape[1])
            if sup:
                best_w[list(sup)] = w_ols
    return best_w


def fit_lars(X, mask: EdgeMask, model_selection: str = "bic") -> FinalGraph:
    """Per-column parent selection along the least-angle path.

    Candidate supports are the distinct active sets on the lasso path over
    the allowed predecessors; each is refit by OLS and the BIC-minimal one
    keeps its coefficients.  Deterministic given data and mask; zero-variance
    predictors are dropped and a rank-deficient block simply truncates the
    path.
    """
    if model_selection != "bic":
        raise ValueError(f"unsupported model selection {model_selection!r}")
    Xm = _as_matrix(X)
    n, d = Xm.shape
    if mask.d != d:
        raise ValueError("mask dimension does not match data")
    W = np.zeros((d, d))
    col_sd = Xm.std(axis=0)
    for j in range(d):
        allowed = np.flatnonzero(mask.matrix[:, j] & (col_sd > 0))
        if allowed.size == 0 or col_sd[j] == 0:
            continue
        W[allowed, j] = _lars_bic_column(Xm[:, allowed], Xm[:, j], n)
    A = (W != 0).astype(np.int64)
    return FinalGraph(A, W)
