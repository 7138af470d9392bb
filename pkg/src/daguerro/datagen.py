"""Synthetic structural-equation data, file ingestion, and the variance-sorting baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import ConfigError, DataError
from .perms import Permutation, sort_oracle
from .sem import Dataset, EdgeMask, FinalGraph, fit_lars, is_acyclic, standardize, topological_order

__all__ = [
    "ERDOS_RENYI",
    "SCALE_FREE",
    "BIPARTITE",
    "GAUSS_EV",
    "GUMBEL_EV",
    "UNIFORM",
    "GraphSpec",
    "SemSpec",
    "sample_dag",
    "sample_weights",
    "sample_data",
    "sortnregress",
    "load_csv",
    "load_edgelist",
    "save_csv",
    "save_edgelist",
]

ERDOS_RENYI = "erdos_renyi"
SCALE_FREE = "scale_free"
BIPARTITE = "bipartite"
GRAPH_FAMILIES = (ERDOS_RENYI, SCALE_FREE, BIPARTITE)

GAUSS_EV = "gauss-ev"
GUMBEL_EV = "gumbel-ev"
UNIFORM = "uniform"
SEM_KINDS = (GAUSS_EV, GUMBEL_EV, UNIFORM)


@dataclass
class GraphSpec:
    """Random-graph family, size, and target edge count."""

    family: str
    d: int
    expected_edges: int
    seed: int = 0

    def __post_init__(self):
        if self.family not in GRAPH_FAMILIES:
            raise ConfigError(f"unknown graph family {self.family!r}; choose from {GRAPH_FAMILIES}")
        if self.d < 2:
            raise ConfigError("need at least two nodes")
        max_edges = self.d * (self.d - 1) // 2
        if not 0 <= self.expected_edges <= max_edges:
            raise ConfigError(
                f"expected_edges={self.expected_edges} outside [0, d(d-1)/2 = {max_edges}]"
            )


@dataclass
class SemSpec:
    """Linear SEM: noise family, symmetric weight magnitudes, sample count."""

    kind: str = GAUSS_EV
    weight_range: tuple[float, float] = (0.5, 2.0)
    noise_scale: float = 1.0
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SEM_KINDS:
            raise ConfigError(f"unknown SEM kind {self.kind!r}; choose from {SEM_KINDS}")
        lo, hi = self.weight_range
        if not 0 < lo <= hi:
            raise ConfigError("weight magnitudes must satisfy 0 < lo <= hi (zero excluded)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if self.n < 1:
            raise ConfigError("need at least one sample")


def sample_dag(spec: GraphSpec) -> tuple[np.ndarray, Permutation]:
    """Draw a random DAG and one of its topological orders.

    Erdos-Renyi keeps each ordered slot with probability expected_edges over
    the slot count.  Scale-free grows by preferential attachment with
    round(expected_edges / d) links per node, oriented old to new.  Bipartite
    splits the nodes in two and keeps cross edges, oriented by a random order.
    All three are relabeled uniformly at random.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    relabel = rng.permutation(d)
    B = np.zeros((d, d), dtype=np.int64)  # adjacency in topological positions
    max_pairs = d * (d - 1) // 2
    if spec.expected_edges > 0:
        if spec.family == ERDOS_RENYI:
            p = spec.expected_edges / max_pairs
            B = np.triu((rng.random((d, d)) < p).astype(np.int64), k=1)
        elif spec.family == SCALE_FREE:
            m = min(max(1, round(spec.expected_edges / d)), d - 1)
            g = nx.barabasi_albert_graph(d, m, seed=int(rng.integers(2**32)))
            for u, v in g.edges():
                lo, hi = (u, v) if u < v else (v, u)
                B[lo, hi] = 1
        else:  # bipartite
            side = rng.permutation(d)
            left = set(int(v) for v in side[: d // 2])
            cross = [
                (a, b)
                for a in range(d)
                for b in range(a + 1, d)
                if (a in left) != (b in left)
            ]
            p = min(1.0, spec.expected_edges / max(1, len(cross)))
            for a, b in cross:
                if rng.random() < p:
                    B[a, b] = 1
    A = np.zeros((d, d), dtype=np.int64)
    A[np.ix_(relabel, relabel)] = B
    return A, Permutation(tuple(int(v) for v in relabel))


def sample_weights(A: np.ndarray, spec: SemSpec, rng: np.random.Generator) -> np.ndarray:
    """Edge weights with random sign and magnitude uniform in the spec's interval."""
    lo, hi = spec.weight_range
    magnitude = rng.uniform(lo, hi, size=A.shape)
    sign = rng.choice([-1.0, 1.0], size=A.shape)
    return magnitude * sign * A


def sample_data(A, spec: SemSpec, weights: np.ndarray | None = None) -> Dataset:
    """Simulate a linear SEM over ``A`` in topological order.

    Noise is drawn per the spec's family at a common scale (equal variance
    across nodes).  Pass ``weights`` to pin the coefficient matrix; otherwise
    they are drawn from the spec's symmetric intervals.
    """
    A = np.asarray(A)
    if not is_acyclic(A):
        raise DataError("adjacency must be acyclic")
    d = A.shape[0]
    rng = np.random.default_rng(spec.seed)
    W = sample_weights(A, spec, rng) if weights is None else np.asarray(weights, float) * A
    shape = (spec.n, d)
    if spec.kind == GAUSS_EV:
        eps = rng.normal(0.0, spec.noise_scale, shape) if spec.noise_scale else np.zeros(shape)
    elif spec.kind == GUMBEL_EV:
        eps = rng.gumbel(0.0, spec.noise_scale, shape) if spec.noise_scale else np.zeros(shape)
    else:
        eps = rng.uniform(-spec.noise_scale, spec.noise_scale, shape)
    X = np.zeros(shape)
    for v in topological_order(A):
        X[:, v] = X @ W[:, v] + eps[:, v]
    return Dataset(X, truth=A.copy())


def sortnregress(X) -> FinalGraph:
    """Variance-sorting baseline.

    Orders nodes by increasing raw marginal variance, then selects each
    node's parents among its predecessors by the least-angle path with BIC.
    """
    Xm = X.X if isinstance(X, Dataset) else np.asarray(X, dtype=float)
    variances = Xm.var(axis=0, ddof=1) if Xm.shape[0] > 1 else np.zeros(Xm.shape[1])
    sigma = sort_oracle(variances)
    return fit_lars(standardize(Xm), EdgeMask(sigma))


def load_csv(path) -> Dataset:
    """Numeric matrix: comma-separated, UTF-8, one header row of column names."""
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = [c.strip() for c in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not names or any(not c for c in names):
            raise DataError(f"{path}:1: blank column name in header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(
                    f"{path}:{lineno}: expected {len(names)} cells, found {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=float), names=names)


def load_edgelist(path, d: int | None = None, names: list[str] | None = None) -> np.ndarray:
    """Directed edges, one ``src,dst`` per line; 0-based indices or known labels.

    The resulting adjacency must be acyclic.  Node count is ``d``, the label
    count, or one plus the largest index seen.
    """
    edges: list[tuple[int, int, int]] = []
    lookup = {name: k for k, name in enumerate(names)} if names else {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'src,dst', got {line!r}")
            pair = []
            for token in parts:
                if token in lookup:
                    pair.append(lookup[token])
                else:
                    try:
                        pair.append(int(token))
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: unknown node name {token!r}"
                        ) from None
            edges.append((pair[0], pair[1], lineno))
    if d is None:
        if names:
            d = len(names)
        elif edges:
            d = max(max(i, j) for i, j, _ in edges) + 1
        else:
            raise DataError(f"{path}: cannot infer node count from an empty edge list")
    A = np.zeros((d, d), dtype=np.int64)
    for i, j, lineno in edges:
        if not (0 <= i < d and 0 <= j < d):
            raise DataError(f"{path}:{lineno}: node index out of range for d={d}")
        if i == j:
            raise DataError(f"{path}:{lineno}: self-loop on node {i}")
        A[i, j] = 1
    if not is_acyclic(A):
        raise DataError(f"{path}: edge list contains a directed cycle")
    return A


def save_csv(path, X: np.ndarray, names: list[str] | None = None) -> None:
    """Write a matrix in the `load_csv` format (deterministic float text)."""
    X = np.asarray(X, dtype=float)
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in X:
            writer.writerow([f"{v:.17g}" for v in row])


def save_edgelist(path, A: np.ndarray) -> None:
    """Write an adjacency matrix in the `load_edgelist` format."""
    A = np.asarray(A)
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(*np.nonzero(A)):
            fh.write(f"{int(i)},{int(j)}\n")
