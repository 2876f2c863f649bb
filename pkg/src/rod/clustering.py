"""K-Means (k-means++ seeding, Lloyd iterations) and a refresh cadence helper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rng import stream


@dataclass(frozen=True)
class ClusterState:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    epoch_of_fit: int = 0
    history: tuple = ()

    @property
    def q(self) -> int:
        return self.centroids.shape[0]

    def permuted(self, perm) -> "ClusterState":
        """Relabel so new cluster ``j`` is old cluster ``perm[j]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return ClusterState(self.centroids[perm], inv[self.assignments], self.inertia,
                            self.epoch_of_fit, self.history)


def _sq_dists(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = Z[:, None, :] - C[None, :, :]
    return (diff * diff).sum(axis=2)


def _kmeans_pp(Z: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    n = Z.shape[0]
    centers = [Z[rng.integers(n)]]
    closest = ((Z - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, q):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(Z[idx])
        closest = np.minimum(closest, ((Z - Z[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(Z: np.ndarray, C: np.ndarray, max_iters: int):
    history = []
    assign = None
    for _ in range(max_iters):
        d2 = _sq_dists(Z, C)
        new = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(Z)), new].sum())
        history.append(inertia)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        C = C.copy()
        for j in range(C.shape[0]):
            members = assign == j
            if members.any():
                C[j] = Z[members].mean(axis=0)
            else:
                # farthest point from its current centroid seeds the empty cluster
                far = int(d2[np.arange(len(Z)), assign].argmax())
                C[j] = Z[far]
                d2[far, assign[far]] = 0.0
    d2 = _sq_dists(Z, C)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(Z)), assign].sum())
    return C, assign, inertia, tuple(history)


def kmeans(Z: np.ndarray, q: int, seed: int = 0, max_iters: int = 300,
           restarts: int = 10) -> ClusterState:
    """Best-of-``restarts`` K-Means by inertia (ties go to the earliest restart)."""
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if q > n:
        raise ValueError(f"cannot form {q} clusters from {n} points")
    if q < 1 or max_iters < 1 or restarts < 1:
        raise ValueError("q, max_iters and restarts must all be >= 1")
    best = None
    for r in range(restarts):
        rng = stream(seed, "kmeans", r)
        C, assign, inertia, hist = _lloyd(Z, _kmeans_pp(Z, q, rng), max_iters)
        if best is None or inertia < best.inertia:
            best = ClusterState(C, assign, inertia, 0, hist)
    return best


def refresh_if_due(epoch: int, m: int, Z: np.ndarray, q: int, seed: int = 0,
                   **kw) -> ClusterState | None:
    if m < 1:
        raise ValueError("refresh period must be >= 1")
    if epoch % m:
        return None
    st = kmeans(Z, q, seed, **kw)
    return ClusterState(st.centroids, st.assignments, st.inertia, epoch, st.history)


def align_to(state: ClusterState, reference: np.ndarray) -> ClusterState:
    """Permute cluster ids to best agree with ``reference`` labels (Hungarian)."""
    q = state.q
    ref = np.asarray(reference, dtype=np.int64)
    overlap = np.zeros((q, q))
    np.add.at(overlap, (ref % q, state.assignments), 1)
    _, cols = linear_sum_assignment(-overlap)
    return state.permuted(cols)
