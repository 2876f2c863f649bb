"""Per-hop cosine similarity and reliable positive/negative pair sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import SparseGraph

MAX_DENSE_NODES = 4096


def cosine_similarity(X: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity. Zero rows are similar to nothing, not even themselves.

    The upper triangle is mirrored so the result is exactly symmetric.
    """
    X = np.asarray(X, dtype=np.float64)
    nrm = np.linalg.norm(X, axis=1, keepdims=True)
    Xn = np.where(nrm > 0, X / np.where(nrm > 0, nrm, 1.0), 0.0)
    S = Xn @ Xn.T
    iu = np.triu_indices(S.shape[0], 1)
    S[(iu[1], iu[0])] = S[iu]
    return S


def ensemble_similarity(sims: Sequence[np.ndarray]) -> np.ndarray:
    if not sims:
        raise ValueError("need at least one similarity matrix")
    shape = sims[0].shape
    total = np.zeros(shape)
    for s in sims:
        if s.shape != shape:
            raise ValueError(f"size mismatch: {s.shape} vs {shape}")
        total += s
    return total


@dataclass(frozen=True)
class SampledAdjacency:
    """Selected pairs: positives (value 1), negatives (value 0); all else unset.

    ``pos_pairs`` and ``neg_pairs`` are ``(m, 2)`` int arrays with ``i < j``.
    """

    n: int
    pos_pairs: np.ndarray
    neg_pairs: np.ndarray
    pos_count: int
    neg_count: int

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate([self.pos_pairs, self.neg_pairs], axis=0)

    @property
    def targets(self) -> np.ndarray:
        """``1`` for positives then ``0`` for negatives, aligned with :attr:`pairs`."""
        return np.concatenate([np.ones(len(self.pos_pairs)), np.zeros(len(self.neg_pairs))])

    def to_dense(self) -> np.ndarray:
        """Tri-state matrix with NaN marking unsampled pairs."""
        A = np.full((self.n, self.n), np.nan)
        for pairs, val in ((self.pos_pairs, 1.0), (self.neg_pairs, 0.0)):
            A[pairs[:, 0], pairs[:, 1]] = val
            A[pairs[:, 1], pairs[:, 0]] = val
        return A


def default_budgets(n: int, n_edges: int, pos_ratio: float = 2.0,
                    neg_ratio: float = 10.0) -> tuple[int, int]:
    """Budgets ``M = 2|E|`` and ``P = 10|E|``, shrunk to fit small graphs."""
    total = n * (n - 1) // 2
    M = max(n_edges, int(round(pos_ratio * n_edges)))
    P = max(1, int(round(neg_ratio * n_edges)))
    # worst case the top M holds no edge, leaving total - M - |E| negatives
    free = total - n_edges
    if M + P > free:
        M = max(n_edges, min(M, free // 2))
        P = max(1, min(P, free - M))
    return M, P


def rank_pairs(S: np.ndarray) -> np.ndarray:
    """All ``i < j`` pairs ordered by similarity descending, ties by ``(i, j)``."""
    n = S.shape[0]
    if n > MAX_DENSE_NODES:
        raise ValueError(f"pair ranking materialises n(n-1)/2 pairs; n={n} exceeds "
                         f"{MAX_DENSE_NODES}, subsample the graph first")
    i, j = np.triu_indices(n, 1)
    order = np.lexsort((j, i, -S[i, j]))
    return np.stack([i[order], j[order]], axis=1)


def sample_reliable(S: np.ndarray, g: SparseGraph, M: int, P: int) -> SampledAdjacency:
    """Positives are graph edges plus the top-``M`` pairs; negatives are the bottom ``P``
    pairs that are not already positive.

    Positives come out in rank order, negatives from the least similar pair up.
    """
    n = g.n
    if S.shape != (n, n):
        raise ValueError(f"similarity shape {S.shape} does not match graph with {n} nodes")
    total = n * (n - 1) // 2
    edges = g.edges()
    if M < len(edges):
        raise ValueError(f"positive budget M={M} is below the edge count {len(edges)}")
    if P < 1:
        raise ValueError("negative budget P must be >= 1")
    if M + P > total:
        raise ValueError(f"budget overflow: M + P = {M + P} > {total} available pairs")
    ranked = rank_pairs(S)
    key = ranked[:, 0] * n + ranked[:, 1]
    is_pos = np.zeros(total, dtype=bool)
    is_pos[:M] = True
    is_pos |= np.isin(key, edges[:, 0] * n + edges[:, 1])
    pos = ranked[is_pos]
    tail = np.flatnonzero(~is_pos)[::-1][:P]
    if tail.size < P:
        raise ValueError(f"budget overflow: only {tail.size} non-positive pairs left for P={P}")
    neg = ranked[np.sort(tail)[::-1]]
    return SampledAdjacency(n, pos, neg, M, P)
