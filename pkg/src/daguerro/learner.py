"""Training loops joining the ordering distribution with the edge estimators.

Two regimes share the same outer signal: a sparse distribution over orderings
is computed from the score vector, a loss is obtained per supported ordering,
and the analytic backward pass of the sparse operator turns those losses into
a score-vector gradient.

* joint: one shared set of gated-linear edge parameters is updated together
  with the scores, so every step is a stochastic gradient step on both.
* bilevel: each supported ordering gets its own inner fit (gated-linear or
  least-angle), solved once and cached; the outer update consumes only the
  achieved losses, never inner derivatives, so the inner solver may be
  non-differentiable.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import sparse_ops
from .errors import ConfigError, NumericError
from .perms import Permutation, sort_oracle
from .sem import (
    LARS,
    LINEAR_L0,
    Dataset,
    EdgeMask,
    EdgeParameters,
    FinalGraph,
    PerfectFitWarning,
    finalize_l0,
    fit_l0,
    fit_lars,
    is_acyclic,
    loss_ev_gaussian,
    loss_mse,
    standardize,
)
from .sparse_ops import SparseOrderDistribution, backward_theta, sparsemap, topk_sparsemax

__all__ = [
    "JOINT",
    "BILEVEL",
    "ZEROS",
    "VARIANCES",
    "EV_GAUSSIAN",
    "MSE",
    "LearnerConfig",
    "TraceRecord",
    "TrainTrace",
    "FitResult",
    "init_theta",
    "fit_joint",
    "fit_bilevel",
    "extract_final",
    "fit",
    "postprocess_threshold",
]

JOINT = "joint"
BILEVEL = "bilevel"
ZEROS = "zeros"
VARIANCES = "variances"
EV_GAUSSIAN = "ev_gaussian"
MSE = "mse"

EARLY_STOP_TOL = 1e-5
EARLY_STOP_WINDOW = 100


@dataclass
class LearnerConfig:
    """Everything a training run needs besides the data."""

    operator: str = sparse_ops.TOPK_SPARSEMAX
    k_or_iters: int = 100
    tau: float = 1.0
    lam: float = 0.01
    l2_theta: float = 5e-4
    l2_phi: float = 5e-4
    lr_outer: float = 0.05
    lr_inner: float = 0.01
    max_outer: int = 5000
    max_inner: int = 1000
    estimator: str = LINEAR_L0
    regime: str = BILEVEL
    theta_init: str = VARIANCES
    loss: str = EV_GAUSSIAN
    seed: int = 0
    trace_support: bool = False

    def __post_init__(self):
        if self.operator not in (sparse_ops.TOPK_SPARSEMAX, sparse_ops.SPARSEMAP):
            raise ConfigError(f"unknown operator {self.operator!r}")
        if self.estimator not in (LINEAR_L0, LARS):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.regime not in (JOINT, BILEVEL):
            raise ConfigError(f"unknown regime {self.regime!r}")
        if self.theta_init not in (ZEROS, VARIANCES):
            raise ConfigError(f"unknown theta_init {self.theta_init!r}")
        if self.loss not in (EV_GAUSSIAN, MSE):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.regime == JOINT and self.estimator != LINEAR_L0:
            raise ConfigError("joint training needs a differentiable estimator (linear_l0)")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.lr_outer <= 0 or self.lr_inner <= 0:
            raise ConfigError("learning rates must be positive")
        if self.k_or_iters < 1 or self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("iteration counts must be at least 1")
        if self.lam < 0 or self.l2_theta < 0 or self.l2_phi < 0:
            raise ConfigError("regularization strengths must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class TraceRecord:
    iteration: int
    loss: float
    support_size: int
    mode_order: tuple[int, ...]
    theta_hash: str
    support_orders: tuple[tuple[int, ...], ...] | None = None

    def to_dict(self) -> dict:
        rec = {
            "iteration": self.iteration,
            "loss": self.loss,
            "support_size": self.support_size,
            "mode_order": list(self.mode_order),
            "theta_hash": self.theta_hash,
        }
        if self.support_orders is not None:
            rec["support_orders"] = [list(o) for o in self.support_orders]
        return rec


@dataclass
class TrainTrace:
    """Per-iteration records of a training run."""

    records: list[TraceRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else float("nan")

    def hash(self) -> str:
        payload = json.dumps(
            [r.to_dict() for r in self.records] + [self.stop_reason], sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_dict()) + "\n")


@dataclass
class FitResult:
    """Learned state handed to :func:`extract_final`."""

    theta: np.ndarray
    trace: TrainTrace
    config: LearnerConfig
    params: EdgeParameters | None = None
    per_perm: dict[Permutation, FinalGraph] | None = None
    inner_fits: dict | None = field(default=None, repr=False)


def _as_matrix(X) -> np.ndarray:
    return X.X if isinstance(X, Dataset) else np.asarray(X, dtype=float)


def init_theta(X, mode: str = VARIANCES) -> np.ndarray:
    """Zero scores, or the per-column sample variances of the raw data."""
    Xm = _as_matrix(X)
    if mode == ZEROS:
        return np.zeros(Xm.shape[1])
    if mode != VARIANCES:
        raise ConfigError(f"unknown theta_init {mode!r}")
    if Xm.shape[0] < 2:
        return np.zeros(Xm.shape[1])
    return Xm.var(axis=0, ddof=1)


def _theta_hash(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta).tobytes()).hexdigest()[:16]


def _derived_seed(root: int, salt: int, order: tuple[int, ...]) -> int:
    data = np.asarray((root, salt) + tuple(order), dtype=np.int64).tobytes()
    return zlib.crc32(data)


def _loss_fn(kind: str):
    return loss_ev_gaussian if kind == EV_GAUSSIAN else loss_mse


def _order_distribution(theta, config: LearnerConfig, warm: dict) -> SparseOrderDistribution:
    if config.operator == sparse_ops.TOPK_SPARSEMAX:
        k = min(config.k_or_iters, math.factorial(min(theta.shape[0], 20)))
        return topk_sparsemax(theta, k, config.tau)
    dist = sparsemap(theta, config.tau, max_iter=config.k_or_iters, init=warm.get("init"))
    warm["init"] = dist.mode()
    return dist


def _clamp_losses(L: np.ndarray) -> np.ndarray:
    """Replace -inf (perfect fits) with a finite value below every other loss."""
    if not np.any(np.isneginf(L)):
        return L
    finite = L[np.isfinite(L)]
    floor = float(finite.min()) - 1.0 if finite.size else 0.0
    return np.where(np.isneginf(L), floor, L)


def _should_stop(losses: list[float]) -> bool:
    if len(losses) <= EARLY_STOP_WINDOW:
        return False
    prev = losses[-EARLY_STOP_WINDOW - 1]
    if not math.isfinite(prev):
        return True
    return prev - losses[-1] < EARLY_STOP_TOL * max(1.0, abs(prev))


def _ev_from_total(total: float, d: int) -> float:
    if total < 1e-300:
        return float("-inf")
    return 0.5 * d * math.log(total)


def fit_joint(X, config: LearnerConfig) -> FitResult:
    """Simultaneous gradient descent on node scores and gated edge weights.

    Each iteration draws the sparse ordering distribution, samples gates once
    per supported ordering, and updates the scores through the operator's
    backward pass and the shared edge parameters through the straight-through
    estimator, both weighted by the ordering probabilities.
    """
    if config.regime != JOINT:
        raise ConfigError("config.regime must be 'joint'")
    Xraw = _as_matrix(X)
    Xs = standardize(Xraw)
    n, d = Xs.shape
    theta = init_theta(Xraw, config.theta_init).astype(float)
    offdiag = 1.0 - np.eye(d)
    W = np.zeros((d, d))
    Pi = 0.5 * offdiag
    S = Xs.T @ Xs
    tr_s = float(np.trace(S))
    rngs = [np.random.default_rng((config.seed, 1, j)) for j in range(d)]
    warm: dict = {}
    trace = TrainTrace()
    for it in range(config.max_outer):
        dist = _order_distribution(theta, config, warm)
        k = len(dist.support)
        losses = np.empty(k)
        gW = np.zeros((d, d))
        gPi = np.zeros((d, d))
        for idx, perm in enumerate(dist.support):
            Mm = EdgeMask(perm).matrix
            U = np.column_stack([rng.random(d) for rng in rngs])
            Zg = ((U < Pi) & Mm).astype(float)
            W_eff = W * Zg
            total = max(
                tr_s - 2.0 * float(np.sum(W_eff * S)) + float(np.sum(W_eff * (S @ W_eff))),
                0.0,
            )
            if config.loss == EV_GAUSSIAN:
                losses[idx] = _ev_from_total(total, d)
                factor = d / max(total, 1e-12)
            else:
                losses[idx] = total / n
                factor = 2.0 / n
            G = factor * (S @ W_eff - S)
            a = float(dist.alpha[idx])
            gW += a * (G * Zg)
            gPi += a * (G * W * Mm)
        if np.any(np.isnan(losses)):
            err = NumericError(f"loss became NaN at iteration {it}")
            err.trace = trace
            raise err
        safe = _clamp_losses(losses)
        g_theta = backward_theta(dist, safe) + 2.0 * config.l2_theta * theta
        theta = theta - config.lr_outer * g_theta
        W = W - config.lr_inner * (gW + 2.0 * config.l2_phi * W)
        Pi = np.clip(Pi - config.lr_inner * (gPi + config.lam * offdiag), 0.0, 1.0) * offdiag
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(W))):
            err = NumericError(f"parameters diverged at iteration {it}")
            err.trace = trace
            raise err
        outer = float(dist.alpha @ losses) + config.lam * float(Pi.sum())
        trace.records.append(
            TraceRecord(
                it,
                outer,
                k,
                dist.mode().order,
                _theta_hash(theta),
                tuple(p.order for p in dist.support) if config.trace_support else None,
            )
        )
        if not math.isfinite(outer):
            trace.stop_reason = "perfect fit"
            break
        if _should_stop(trace.losses):
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max iterations"
    return FitResult(
        theta=theta,
        trace=trace,
        config=config,
        params=EdgeParameters(W, Pi, LINEAR_L0),
    )


@dataclass
class _InnerFit:
    graph: FinalGraph | None
    params: EdgeParameters | None
    loss: float


def _solve_inner(Xs: np.ndarray, perm: Permutation, config: LearnerConfig) -> _InnerFit:
    mask = EdgeMask(perm)
    try:
        if config.estimator == LARS:
            graph = fit_lars(Xs, mask)
            params = None
        else:
            params = fit_l0(
                Xs,
                mask,
                config.lam,
                lr=config.lr_inner,
                epochs=config.max_inner,
                seed=_derived_seed(config.seed, 2, perm.order),
                l2=config.l2_phi,
            )
            graph = finalize_l0(params, mask)
    except NumericError as exc:
        warnings.warn(f"inner fit failed for ordering {perm.order}: {exc}")
        return _InnerFit(None, None, float("inf"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PerfectFitWarning)
        loss = _loss_fn(config.loss)(Xs, graph.W, mask)
    return _InnerFit(graph, params, loss)


def fit_bilevel(X, config: LearnerConfig) -> FitResult:
    """Outer descent on node scores over cached per-ordering inner fits.

    New orderings in the support trigger one inner solve each (keyed by the
    ordering, reused bit-identically afterwards).  The outer gradient consumes
    only the achieved losses, so the inner estimator never needs derivatives.
    A failed inner solve contributes +inf loss and is excluded from the
    gradient.  Training halts early when the data gradient vanishes exactly.
    """
    if config.regime != BILEVEL:
        raise ConfigError("config.regime must be 'bilevel'")
    Xraw = _as_matrix(X)
    Xs = standardize(Xraw)
    theta = init_theta(Xraw, config.theta_init).astype(float)
    cache: dict[tuple[int, ...], _InnerFit] = {}
    warm: dict = {}
    trace = TrainTrace()
    for it in range(config.max_outer):
        dist = _order_distribution(theta, config, warm)
        for perm in dist.support:
            if perm.order not in cache:
                cache[perm.order] = _solve_inner(Xs, perm, config)
        L = np.array([cache[p.order].loss for p in dist.support])
        usable = L < np.inf
        if not usable.any():
            err = NumericError(f"all inner fits failed at iteration {it}")
            err.trace = trace
            raise err
        if usable.all():
            sub, L_sub = dist, L
        else:
            sub = SparseOrderDistribution(
                tuple(p for p, u in zip(dist.support, usable) if u),
                dist.alpha[usable] / dist.alpha[usable].sum(),
                dist.tau,
                dist.kind,
                dist.converged,
            )
            L_sub = L[usable]
        safe = _clamp_losses(L_sub)
        g_data = backward_theta(sub, safe)
        outer = float(sub.alpha @ safe)
        trace.records.append(
            TraceRecord(
                it,
                outer,
                len(dist.support),
                dist.mode().order,
                _theta_hash(theta),
                tuple(p.order for p in dist.support) if config.trace_support else None,
            )
        )
        if not np.any(g_data):
            trace.stop_reason = "stationary"
            break
        theta = theta - config.lr_outer * (g_data + 2.0 * config.l2_theta * theta)
        if not np.all(np.isfinite(theta)):
            err = NumericError(f"theta diverged at iteration {it}")
            err.trace = trace
            raise err
        if _should_stop(trace.losses):
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max iterations"
    per_perm = {
        Permutation(order): inner.graph
        for order, inner in cache.items()
        if inner.graph is not None
    }
    return FitResult(
        theta=theta,
        trace=trace,
        config=config,
        per_perm=per_perm,
        inner_fits=cache,
    )


def extract_final(result: FitResult, X) -> FinalGraph:
    """Refit the estimator on the highest-probability ordering and finalize."""
    config = result.config
    Xs = standardize(_as_matrix(X))
    mode = sort_oracle(result.theta)
    mask = EdgeMask(mode)
    if config.estimator == LARS:
        return fit_lars(Xs, mask)
    init = result.params
    if init is None and result.inner_fits is not None:
        cached = result.inner_fits.get(mode.order)
        if cached is not None:
            init = cached.params
    params = fit_l0(
        Xs,
        mask,
        config.lam,
        lr=config.lr_inner,
        epochs=config.max_inner,
        seed=_derived_seed(config.seed, 3, mode.order),
        l2=config.l2_phi,
        init=init,
    )
    return finalize_l0(params, mask)


def fit(X, config: LearnerConfig) -> tuple[FinalGraph, FitResult]:
    """Train under the configured regime and return the finalized mode graph."""
    result = fit_joint(X, config) if config.regime == JOINT else fit_bilevel(X, config)
    return extract_final(result, X), result


def postprocess_threshold(W, thresh: float = 0.3) -> FinalGraph:
    """Threshold small weights, then delete weakest edges until acyclic.

    Intended for weighted digraphs from methods without an acyclicity
    guarantee; graphs produced by this package never need it.
    """
    if thresh < 0:
        raise ValueError("threshold must be non-negative")
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"expected a square weight matrix, got {W.shape}")
    np.fill_diagonal(W, 0.0)
    W[np.abs(W) < thresh] = 0.0
    while not is_acyclic(W != 0):
        rows, cols = np.nonzero(W)
        k = int(np.argmin(np.abs(W[rows, cols])))
        W[rows[k], cols[k]] = 0.0
    return FinalGraph((W != 0).astype(np.int64), W)
