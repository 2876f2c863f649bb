import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rod.graph import build_csr
from rod.reception import (cosine_similarity, default_budgets, ensemble_similarity, rank_pairs,
                           sample_reliable)

from oracles import brute_force_sample, random_graph


def test_cosine_examples():
    np.testing.assert_array_equal(cosine_similarity(np.eye(2)), np.eye(2))
    S = cosine_similarity(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert S[0, 1] == pytest.approx(np.sqrt(2) / 2, abs=1e-12)
    Z = cosine_similarity(np.array([[1.0, 2.0], [0.0, 0.0], [3.0, 1.0]]))
    assert not Z[1].any() and not Z[:, 1].any()
    assert Z[0, 0] == pytest.approx(1.0) and Z[2, 2] == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_cosine_properties(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X[rng.random(n) < 0.1] = 0.0
    S = cosine_similarity(X)
    assert np.array_equal(S, S.T)
    assert np.all(np.abs(S) <= 1 + 1e-12)
    D = rng.uniform(0.1, 10.0, size=(n, 1))
    np.testing.assert_allclose(cosine_similarity(D * X), S, atol=1e-10)


def test_ensemble_examples():
    np.testing.assert_array_equal(ensemble_similarity([np.eye(3)] * 3), 3 * np.eye(3))
    S0 = cosine_similarity(np.random.default_rng(0).standard_normal((4, 2)))
    assert not ensemble_similarity([S0, -S0]).any()
    a = np.array([[1.0, 0.7], [0.7, 1.0]])
    b = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert ensemble_similarity([a, b])[0, 1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ensemble_similarity([np.eye(2), np.eye(3)])


def test_sample_hand_example():
    S = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, -0.2], [0.1, -0.2, 1.0]])
    A = sample_reliable(S, build_csr([(0, 1)], 3), 1, 1)
    assert A.pos_pairs.tolist() == [[0, 1]]
    assert A.neg_pairs.tolist() == [[1, 2]]


def test_sample_ties_break_lexicographically():
    n, P = 5, 2
    M = n * (n - 1) // 2 - P
    A = sample_reliable(np.ones((n, n)), build_csr([], n), M, P)
    first = [(i, j) for i in range(n) for j in range(i + 1, n)][:M]
    assert [tuple(p) for p in A.pos_pairs] == first


def test_sample_errors():
    g = build_csr([(0, 1), (1, 2)], 4)
    S = np.zeros((4, 4))
    with pytest.raises(ValueError):
        sample_reliable(S, g, 1, 1)
    with pytest.raises(ValueError):
        sample_reliable(S, g, 2, 0)
    with pytest.raises(ValueError):
        sample_reliable(S, g, 4, 3)
    with pytest.raises(ValueError):
        sample_reliable(np.zeros((3, 3)), g, 2, 1)


def test_sample_matches_full_sort_oracle():
    rng = np.random.default_rng(11)
    for trial in range(50):
        n = int(rng.integers(3, 51))
        g = random_graph(rng, n, float(rng.uniform(0, 0.2)))
        X = rng.integers(-2, 3, size=(n, 3)).astype(float)  # coarse values force ties
        S = cosine_similarity(X)
        M, P = default_budgets(n, g.n_edges)
        if trial % 2:
            M = g.n_edges + int(rng.integers(0, 5))
            P = int(rng.integers(1, 6))
            if M + P + g.n_edges > n * (n - 1) // 2:
                continue
        A = sample_reliable(S, g, M, P)
        pos, neg = brute_force_sample(S, {tuple(e) for e in g.edges().tolist()}, M, P)
        assert [tuple(p) for p in A.pos_pairs] == pos
        assert [tuple(p) for p in A.neg_pairs] == neg


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.floats(0.0, 0.3), st.integers(0, 2**31 - 1))
def test_sampled_adjacency_invariants(n, p, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p)
    S = cosine_similarity(rng.standard_normal((n, 4)))
    M, P = default_budgets(n, g.n_edges)
    if g.n_edges + M + P > n * (n - 1) // 2:
        return
    A = sample_reliable(S, g, M, P)
    pos = {tuple(x) for x in A.pos_pairs.tolist()}
    neg = {tuple(x) for x in A.neg_pairs.tolist()}
    assert not pos & neg
    assert all(i < j for i, j in pos | neg)
    assert {tuple(e) for e in g.edges().tolist()} <= pos
    B = sample_reliable(S, g, M, P)
    assert np.array_equal(A.pos_pairs, B.pos_pairs) and np.array_equal(A.neg_pairs, B.neg_pairs)


def test_rank_pairs_order():
    S = np.array([[0, 0.5, 0.5], [0.5, 0, 0.9], [0.5, 0.9, 0]])
    assert rank_pairs(S).tolist() == [[1, 2], [0, 1], [0, 2]]


def test_default_budgets():
    assert default_budgets(1000, 500) == (1000, 5000)
    M, P = default_budgets(6, 7)
    assert M >= 7 and M + P + 7 <= 15
