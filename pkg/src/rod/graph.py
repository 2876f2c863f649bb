"""Sparse graph storage, symmetric normalization and k-hop feature propagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Raised for malformed graph input (bad index, self-loop, weight conflict)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric adjacency in CSR form.

    Columns are sorted within each row and every entry ``(i, j, w)`` has a
    mirror ``(j, i, w)``. Instances are immutable; the arrays are read-only.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(np.asarray(self.row_ptr, dtype=np.int64)))
        object.__setattr__(self, "col_idx", _frozen(np.asarray(self.col_idx, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))
        csr = sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n))
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    @property
    def degrees(self) -> np.ndarray:
        """Weighted degree ``d_i = sum_j A_ij``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        return np.bincount(rows, weights=self.values, minlength=self.n).astype(np.float64)

    @property
    def has_self_loops(self) -> bool:
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        return bool(np.any(rows == self.col_idx))

    def edges(self) -> np.ndarray:
        """Undirected off-diagonal edges as an ``(m, 2)`` array with ``i < j``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        keep = rows < self.col_idx
        return np.stack([rows[keep], self.col_idx[keep]], axis=1)

    def edge_weights(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        return self.values[rows < self.col_idx].copy()

    @property
    def n_edges(self) -> int:
        return int(self.edges().shape[0])

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def permute(self, perm: Sequence[int]) -> "SparseGraph":
        """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        e = self.edges()
        w = self.edge_weights()
        return build_csr(zip(inv[e[:, 0]], inv[e[:, 1]], w), self.n)


def _from_coo(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> SparseGraph:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    return SparseGraph(n, np.cumsum(row_ptr), cols, vals)


def build_csr(edges: Iterable, n: int, symmetrize: bool = True) -> SparseGraph:
    """Build a symmetric CSR graph from ``(u, v[, weight])`` tuples.

    Repeated undirected pairs are collapsed to the first occurrence; a repeat
    with a different weight is an error. With ``symmetrize=False`` the input
    must already list both directions of every edge.
    """
    if n < 0:
        raise GraphError(f"node count must be nonnegative, got {n}")
    seen: dict[tuple[int, int], float] = {}
    directed: dict[tuple[int, int], float] = {}
    for item in edges:
        u, v = int(item[0]), int(item[1])
        w = float(item[2]) if len(item) > 2 else 1.0
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        if not (w > 0 and np.isfinite(w)):
            raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}")
        if not symmetrize:
            if (u, v) in directed and directed[(u, v)] != w:
                raise GraphError(f"conflicting weights for edge ({u}, {v})")
            directed.setdefault((u, v), w)
        key = (min(u, v), max(u, v))
        if key in seen:
            if seen[key] != w:
                raise GraphError(f"conflicting weights for edge {key}: {seen[key]} vs {w}")
            continue
        seen[key] = w
    if not symmetrize:
        for (u, v), w in directed.items():
            if directed.get((v, u)) != w:
                raise GraphError(f"edge ({u}, {v}) has no mirror entry with equal weight")
    if not seen:
        return SparseGraph(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                           np.zeros(0))
    pairs = np.array(list(seen.keys()), dtype=np.int64)
    w = np.array(list(seen.values()), dtype=np.float64)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return _from_coo(n, rows, cols, np.concatenate([w, w]))


def add_self_loops(g: SparseGraph) -> SparseGraph:
    """Return ``A + I`` (self-loop weight is always 1.0)."""
    if g.has_self_loops:
        raise GraphError("graph already has self-loops")
    rows = np.repeat(np.arange(g.n), np.diff(g.row_ptr))
    diag = np.arange(g.n)
    return _from_coo(g.n, np.concatenate([rows, diag]), np.concatenate([g.col_idx, diag]),
                     np.concatenate([g.values, np.ones(g.n)]))


def sym_normalize(g_tilde: SparseGraph) -> SparseGraph:
    """``D^{-1/2} A D^{-1/2}`` for a graph whose rows all have positive degree."""
    deg = g_tilde.degrees
    if np.any(deg <= 0):
        bad = int(np.flatnonzero(deg <= 0)[0])
        raise GraphError(f"row {bad} has zero degree; add self-loops first")
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(g_tilde.n), np.diff(g_tilde.row_ptr))
    vals = g_tilde.values * inv_sqrt[rows] * inv_sqrt[g_tilde.col_idx]
    return SparseGraph(g_tilde.n, g_tilde.row_ptr, g_tilde.col_idx, vals)


def normalized_adjacency(g: SparseGraph) -> SparseGraph:
    return sym_normalize(add_self_loops(g))


def spmm(g: SparseGraph, X: np.ndarray) -> np.ndarray:
    """Sparse-times-dense product ``A @ X``.

    Each output row accumulates its nonzeros in ascending column order, so
    repeated calls are bit-identical.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != g.n:
        raise GraphError(f"shape mismatch: graph has {g.n} nodes, X has shape {X.shape}")
    return np.asarray(g._csr @ X)


@dataclass(frozen=True)
class PropagationSet:
    """Propagated features ``mats[k] = Â^k X0`` for ``k = 0..K``."""

    mats: tuple

    @property
    def depth(self) -> int:
        return len(self.mats) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.mats[0].shape

    def __len__(self) -> int:
        return len(self.mats)

    def __getitem__(self, k):
        return self.mats[k]

    def truncate(self, K: int) -> "PropagationSet":
        if K > self.depth:
            raise ValueError(f"cannot truncate depth {self.depth} to {K}")
        return PropagationSet(self.mats[:K + 1])


def precompute_propagation(a_hat: SparseGraph, X0: np.ndarray, K: int) -> PropagationSet:
    if K < 0:
        raise ValueError(f"depth must be >= 0, got {K}")
    cur = _frozen(np.array(X0, dtype=np.float64, copy=True))
    if cur.ndim != 2 or cur.shape[0] != a_hat.n:
        raise GraphError(f"shape mismatch: graph has {a_hat.n} nodes, X0 has shape {cur.shape}")
    mats = [cur]
    for _ in range(K):
        cur = _frozen(spmm(a_hat, cur))
        mats.append(cur)
    return PropagationSet(tuple(mats))
