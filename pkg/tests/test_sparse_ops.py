import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from daguerro.perms import Permutation, enumerate_all, score, sort_oracle
from daguerro.sparse_ops import (
    SPARSEMAP,
    TOPK_SPARSEMAX,
    MarginalPoint,
    SparseOrderDistribution,
    backward_theta,
    marginal,
    simplex_project,
    sparsemap,
    topk_sparsemax,
)

import oracles


def test_simplex_project_examples():
    np.testing.assert_allclose(simplex_project([1.4, 1.3, 1.3]), [0.4, 0.3, 0.3], atol=1e-12)
    np.testing.assert_allclose(simplex_project([10.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(simplex_project([3.7, 3.7]), [0.5, 0.5])


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=10))
def test_simplex_project_is_a_distribution(s):
    p = simplex_project(s)
    assert np.all(p >= 0)
    assert float(p.sum()) == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8))
def test_simplex_project_idempotent_and_monotone(s):
    p = simplex_project(s)
    np.testing.assert_allclose(simplex_project(p), p, atol=1e-9)
    s = np.asarray(s)
    for i in range(len(s)):
        for j in range(len(s)):
            if s[i] > s[j]:
                assert p[i] >= p[j] - 1e-12


def test_topk_sparsemax_example():
    dist = topk_sparsemax([0.3, 0.1, 0.2], 3, tau=1.0)
    np.testing.assert_allclose(dist.alpha, [0.4, 0.3, 0.3], atol=1e-12)
    assert dist.kind == TOPK_SPARSEMAX
    assert dist.mode() == sort_oracle([0.3, 0.1, 0.2])


def test_topk_sparsemax_uniform_on_ties():
    dist = topk_sparsemax(np.zeros(4), 5, tau=1.0)
    assert len(dist.support) == 5
    np.testing.assert_allclose(dist.alpha, np.full(5, 0.2))


def test_topk_sparsemax_tiny_tau_collapses():
    dist = topk_sparsemax([0.3, 0.1, 0.2], 3, tau=1e-6)
    assert len(dist.support) == 1
    np.testing.assert_allclose(dist.alpha, [1.0])
    assert dist.support[0] == sort_oracle([0.3, 0.1, 0.2])


def test_topk_sparsemax_equals_full_projection():
    # cardinality cap k = d! is no cap at all: must match the dense projection
    rng = np.random.default_rng(0)
    for d in (2, 3, 4):
        for _ in range(10):
            theta = rng.normal(size=d)
            tau = float(rng.uniform(0.3, 3.0))
            dist = topk_sparsemax(theta, math.factorial(d), tau)
            dense = {
                order: a
                for (order, s), a in zip(
                    [(p.order, s) for p, s in enumerate_all(theta)],
                    oracles.full_sparsemax([s for _, s in enumerate_all(theta)], tau),
                )
            }
            got = {p.order: a for p, a in zip(dist.support, dist.alpha)}
            for order, a in dense.items():
                assert got.get(order, 0.0) == pytest.approx(a, abs=1e-10)


def test_sparsemap_zero_theta_returns_reversed_pair():
    for d in (2, 3, 5, 8):
        dist = sparsemap(np.zeros(d), tau=1.0)
        assert dist.converged
        orders = {p.order for p in dist.support}
        assert orders == {tuple(range(d)), tuple(range(d - 1, -1, -1))}
        np.testing.assert_allclose(dist.alpha, [0.5, 0.5])
        np.testing.assert_allclose(marginal(dist).mu, np.full(d, (d + 1) / 2))


def test_sparsemap_tiny_tau_hits_a_vertex():
    theta = np.array([0.4, -0.2, 0.9, 0.1])
    dist = sparsemap(theta, tau=1e-6)
    assert len(dist.support) == 1
    assert dist.support[0] == sort_oracle(theta)
    np.testing.assert_allclose(dist.alpha, [1.0])


def test_sparsemap_matches_isotonic_projection_small_case():
    theta = np.array([0.3, 0.1, 0.2])
    dist = sparsemap(theta, tau=1.0)
    np.testing.assert_allclose(
        marginal(dist).mu, oracles.project_permutahedron(theta), atol=1e-6
    )


def test_sparsemap_projection_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = int(rng.integers(2, 11))
        theta = rng.normal(0, rng.uniform(0.5, 3), size=d)
        tau = float(np.exp(rng.uniform(np.log(0.1), np.log(10))))
        dist = sparsemap(theta, tau)
        assert dist.converged
        assert len(dist.support) <= d + 1
        np.testing.assert_allclose(
            marginal(dist).mu,
            oracles.project_permutahedron(theta / tau),
            atol=1e-6,
        )


def test_sparsemap_optimality_certificate():
    # at convergence no ordering scores above the active ones on the residual
    rng = np.random.default_rng(2)
    for _ in range(30):
        d = int(rng.integers(2, 9))
        theta = rng.normal(size=d)
        tau = float(rng.uniform(0.2, 4.0))
        dist = sparsemap(theta, tau)
        resid = theta / tau - marginal(dist).mu
        support_scores = [score(resid, p) for p in dist.support]
        fresh = score(resid, sort_oracle(resid))
        assert fresh <= max(support_scores) + 1e-6


def test_sparsemap_iteration_cap_flags_nonconvergence():
    theta = np.linspace(-1, 1, 8)
    dist = sparsemap(theta, tau=10.0, max_iter=1)
    assert not dist.converged


def test_sparsemap_warm_start_same_solution():
    theta = np.array([0.5, -0.3, 0.2, 0.05])
    base = sparsemap(theta, tau=2.0)
    warm = sparsemap(theta, tau=2.0, init=Permutation((3, 2, 1, 0)))
    np.testing.assert_allclose(marginal(base).mu, marginal(warm).mu, atol=1e-8)


def test_marginal_examples():
    ident = Permutation.identity(3)
    d1 = SparseOrderDistribution((ident,), np.array([1.0]), 1.0, TOPK_SPARSEMAX)
    np.testing.assert_allclose(marginal(d1).mu, [1.0, 2.0, 3.0])

    pair = SparseOrderDistribution(
        (ident, ident.reversed()), np.array([0.5, 0.5]), 1.0, SPARSEMAP
    )
    np.testing.assert_allclose(marginal(pair).mu, [2.0, 2.0, 2.0])

    dist = topk_sparsemax([0.3, 0.1, 0.2], 3, tau=1.0)
    want = sum(a * p.rank() for a, p in zip(dist.alpha, dist.support))
    np.testing.assert_allclose(marginal(dist).mu, want)


def test_distribution_validation():
    ident = Permutation.identity(3)
    with pytest.raises(ValueError):
        SparseOrderDistribution((ident,), np.array([0.5]), 1.0, TOPK_SPARSEMAX)
    with pytest.raises(ValueError):
        SparseOrderDistribution((ident, ident), np.array([0.5, 0.5]), 1.0, TOPK_SPARSEMAX)
    with pytest.raises(ValueError):
        SparseOrderDistribution((ident,), np.array([1.0]), -1.0, TOPK_SPARSEMAX)
    with pytest.raises(ValueError):
        SparseOrderDistribution((ident,), np.array([1.0]), 1.0, "softmax")


def test_marginal_point_validation():
    with pytest.raises(ValueError):
        MarginalPoint(np.array([3.0, 3.0]))  # right sum needs majorization too
    with pytest.raises(ValueError):
        MarginalPoint(np.array([1.0, 1.0, 1.0]))


def test_backward_theta_single_support_is_zero():
    dist = topk_sparsemax([5.0, 0.0, -5.0], 3, tau=1.0)
    assert len(dist.support) == 1
    np.testing.assert_array_equal(backward_theta(dist, [2.0]), np.zeros(3))


def test_backward_theta_equal_losses_is_zero():
    dist = topk_sparsemax(np.zeros(3), 4, tau=1.0)
    np.testing.assert_allclose(backward_theta(dist, np.full(4, 3.3)), np.zeros(3), atol=1e-12)
    dist2 = sparsemap(np.zeros(3))
    np.testing.assert_allclose(backward_theta(dist2, [1.0, 1.0]), np.zeros(3), atol=1e-12)


def test_backward_theta_length_mismatch():
    dist = topk_sparsemax(np.zeros(3), 4, tau=1.0)
    with pytest.raises(ValueError):
        backward_theta(dist, [1.0, 2.0])


def _loss_table(order, c, q):
    r = oracles.rank_of(order).astype(float)
    return float(c @ r + q @ (r * r))


@pytest.mark.parametrize("kind", [TOPK_SPARSEMAX, SPARSEMAP])
def test_backward_theta_finite_differences(kind):
    rng = np.random.default_rng(3)
    h = 1e-5
    checked = 0
    while checked < 25:
        d = int(rng.integers(3, 7))
        theta = rng.normal(size=d)
        if np.min(np.diff(np.sort(theta))) < 1e-3:
            continue
        tau = float(rng.uniform(0.5, 2.5))
        k = int(min(math.factorial(d), 6))
        c, q = rng.normal(size=d), rng.normal(0, 0.3, size=d)

        def operator(t):
            if kind == TOPK_SPARSEMAX:
                return topk_sparsemax(t, k, tau)
            return sparsemap(t, tau)

        base = operator(theta)
        probes = []
        stable = True
        for i in range(d):
            for sgn in (1.0, -1.0):
                t2 = theta.copy()
                t2[i] += sgn * h
                dist2 = operator(t2)
                if {p.order for p in dist2.support} != {p.order for p in base.support}:
                    stable = False
                    break
                probes.append(dist2)
            if not stable:
                break
        if not stable:
            continue  # support-change boundary: outside the gradient contract
        L = [_loss_table(p.order, c, q) for p in base.support]
        g = backward_theta(base, L)
        fd = np.zeros(d)
        for i in range(d):
            up, dn = probes[2 * i], probes[2 * i + 1]
            e_up = sum(a * _loss_table(p.order, c, q) for a, p in zip(up.alpha, up.support))
            e_dn = sum(a * _loss_table(p.order, c, q) for a, p in zip(dn.alpha, dn.support))
            fd[i] = (e_up - e_dn) / (2 * h)
        denom = max(np.linalg.norm(fd), 1e-9)
        assert np.linalg.norm(g - fd) / denom < 1e-4
        checked += 1


def test_distribution_validity_invariants():
    rng = np.random.default_rng(4)
    for _ in range(40):
        d = int(rng.integers(2, 7))
        theta = rng.normal(size=d)
        k = min(int(rng.integers(1, 7)), math.factorial(d))
        for dist in (
            topk_sparsemax(theta, k, float(rng.uniform(0.2, 3))),
            sparsemap(theta, float(rng.uniform(0.2, 3))),
        ):
            assert float(dist.alpha.sum()) == pytest.approx(1.0, abs=1e-9)
            assert np.all(dist.alpha > 0)
            assert len({p.order for p in dist.support}) == len(dist.support)
            marginal(dist)  # validates permutahedron membership
