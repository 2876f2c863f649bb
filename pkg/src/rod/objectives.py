"""Loss functions: reception preserving, the three task losses, distillation, joint."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import PROB_EPS
from .reception import SampledAdjacency


def _reduce(total: Tensor, count: int, reduction: str) -> Tensor:
    if reduction == "sum":
        return total
    if reduction == "mean":
        return ad.mul(total, 1.0 / max(count, 1))
    raise ValueError(f"unknown reduction {reduction!r}")


def reception_loss(P_hat, S: np.ndarray, mask: SampledAdjacency | None = None,
                   reduction: str = "sum") -> Tensor:
    """``||P_hat - S||_F``, optionally restricted to the sampled pairs.

    With a mask, ``P_hat`` may be the full ``n x n`` matrix or the ``m x 1``
    column of pair similarities in ``mask.pairs`` order. ``reduction="mean"``
    returns the root-mean-square residual instead of the raw norm.
    """
    S = np.asarray(S, dtype=np.float64)
    P_hat = ad.as_tensor(P_hat)
    if mask is None:
        if P_hat.shape != S.shape:
            raise ValueError(f"size mismatch: {P_hat.shape} vs {S.shape}")
        resid = ad.sub(P_hat, S)
    else:
        pairs = mask.pairs
        target = S[pairs[:, 0], pairs[:, 1]].reshape(-1, 1)
        if P_hat.shape == S.shape:
            P_hat = ad.select_entries(P_hat, pairs[:, 0], pairs[:, 1])
        elif P_hat.shape != target.shape:
            raise ValueError(f"size mismatch: {P_hat.shape} vs {len(pairs)} sampled pairs")
        resid = ad.sub(P_hat, target)
    norm = ad.frobenius_norm(resid)
    if reduction == "mean":
        return ad.mul(norm, 1.0 / np.sqrt(max(resid.value.size, 1)))
    if reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return norm


def classification_loss(probs, labels, labeled_set, reduction: str = "mean") -> Tensor:
    """Cross-entropy of the true class over the labeled nodes."""
    idx = np.asarray(labeled_set, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("labeled set is empty")
    y = np.asarray(labels, dtype=np.int64)[idx]
    probs = ad.as_tensor(probs)
    if y.min() < 0 or y.max() >= probs.shape[1]:
        raise ValueError("labels out of range for the number of classes")
    picked = ad.select_entries(probs, idx, y)
    return _reduce(ad.mul(ad.sum(ad.log(picked)), -1.0), idx.size, reduction)


def pair_weights(S: np.ndarray, A_bar: SampledAdjacency) -> np.ndarray:
    """Ensemble similarity of each sampled pair, min-max rescaled to [0, 1]."""
    pairs = A_bar.pairs
    s = np.asarray(S, dtype=np.float64)[pairs[:, 0], pairs[:, 1]]
    lo, hi = s.min(), s.max()
    if hi - lo <= 0:
        return np.full(s.shape, 0.5)
    return (s - lo) / (hi - lo)


def link_loss(P, A_bar: SampledAdjacency, S: np.ndarray | None = None,
              weights: np.ndarray | None = None, reduction: str = "mean") -> Tensor:
    """Similarity-weighted reconstruction loss over sampled pairs.

    ``P`` holds probabilities for ``A_bar.pairs`` (positives first). Positive
    pairs are weighted by ``w``, negatives by ``1 - w``.
    """
    P = ad.as_tensor(P)
    m = len(A_bar.pairs)
    if P.shape != (m, 1):
        raise ValueError(f"expected {m} pair probabilities, got shape {P.shape}")
    if weights is None:
        if S is None:
            raise ValueError("link_loss needs S or precomputed weights")
        weights = pair_weights(S, A_bar)
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    a = A_bar.targets.reshape(-1, 1)
    pos_w = w * a
    neg_w = (1.0 - w) * (1.0 - a)
    ll = ad.add(ad.mul(ad.log(P), pos_w), ad.mul(ad.log(ad.sub(1.0, P)), neg_w))
    return _reduce(ad.mul(ad.sum(ll), -1.0), m, reduction)


def clustering_loss(Z, centroids: np.ndarray, assignments, q: int,
                    flip_sign: bool = False) -> Tensor:
    """Mean distance to the own centroid minus mean distance to the others.

    ``flip_sign=True`` flips the sign of both terms.
    """
    Z = ad.as_tensor(Z)
    C = np.asarray(centroids, dtype=np.float64)
    y = np.asarray(assignments, dtype=np.int64)
    if C.shape[0] != q:
        raise ValueError(f"expected {q} centroids, got {C.shape[0]}")
    if y.shape[0] != Z.shape[0] or (y.size and (y.min() < 0 or y.max() >= q)):
        raise ValueError("invalid assignment index")
    n = Z.shape[0]
    D = ad.euclidean_distances(Z, C)
    own = ad.select_entries(D, np.arange(n), y)
    own_term = ad.mean(own)
    if q > 1:
        away = ad.mul(ad.sub(ad.sum_rows(D), own), 1.0 / (q - 1))
        away_term = ad.mean(away)
    else:
        away_term = Tensor(0.0)
    if flip_sign:
        return ad.sub(away_term, own_term)
    return ad.sub(own_term, away_term)


def distillation_loss(P_e, P_k, task: str, reduction: str = "mean") -> Tensor:
    """``KL(P_e || P_k)`` with the teacher as the reference distribution.

    Rows are categorical distributions for classify/cluster; for link every
    row is one Bernoulli pair probability.
    """
    P_e, P_k = ad.as_tensor(P_e), ad.as_tensor(P_k)
    if P_e.shape != P_k.shape:
        raise ValueError(f"shape mismatch: {P_e.shape} vs {P_k.shape}")
    if task == "link":
        pe = ad.clip(P_e, PROB_EPS, 1.0 - PROB_EPS)
        pk = ad.clip(P_k, PROB_EPS, 1.0 - PROB_EPS)
        qe, qk = ad.sub(1.0, pe), ad.sub(1.0, pk)
        kl = ad.add(ad.mul(pe, ad.sub(ad.log(pe), ad.log(pk))),
                    ad.mul(qe, ad.sub(ad.log(qe), ad.log(qk))))
    elif task in ("classify", "cluster"):
        pe = ad.clip(P_e, PROB_EPS, 1.0)
        pk = ad.clip(P_k, PROB_EPS, 1.0)
        kl = ad.mul(pe, ad.sub(ad.log(pe), ad.log(pk)))
    else:
        raise ValueError(f"unknown task {task!r}")
    return _reduce(ad.sum(kl), P_e.shape[0], reduction)


@dataclass
class LossBreakdown:
    task: list = field(default_factory=list)
    reception: list = field(default_factory=list)
    distill: list = field(default_factory=list)
    alpha: float = 0.1
    beta: float = 0.1
    total: float = 0.0
    teacher: float = 0.0

    def contributions(self) -> list[tuple[float, float, float]]:
        return [(t, self.alpha * r, self.beta * d)
                for t, r, d in zip(self.task, self.reception, self.distill)]

    def as_row(self, epoch: int) -> dict:
        row = {"epoch": epoch}
        for k, (t, r, d) in enumerate(zip(self.task, self.reception, self.distill)):
            row[f"lt_{k}"] = t
            row[f"lr_{k}"] = r
            row[f"ld_{k}"] = d
        row["teacher"] = self.teacher
        row["total"] = self.total
        return row


def joint_loss(pieces: Sequence[tuple], alpha: float, beta: float) -> tuple[Tensor, LossBreakdown]:
    """Sum over students of ``L_t + alpha * L_r + beta * L_d``."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must both be > 0")
    total = None
    bd = LossBreakdown(alpha=alpha, beta=beta)
    for lt, lr, ld in pieces:
        lt, lr, ld = ad.as_tensor(lt), ad.as_tensor(lr), ad.as_tensor(ld)
        term = ad.add(ad.add(lt, ad.mul(lr, alpha)), ad.mul(ld, beta))
        total = term if total is None else ad.add(total, term)
        bd.task.append(lt.item())
        bd.reception.append(lr.item())
        bd.distill.append(ld.item())
    if total is None:
        raise ValueError("joint_loss needs at least one student")
    bd.total = total.item()
    return total, bd
