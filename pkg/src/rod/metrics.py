"""Evaluation metrics: accuracy, ROC-AUC, AP, clustering ACC, NMI and ARI."""

from __future__ import annotations

import json

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

MAX_ASSIGNMENT = 64


def accuracy(pred_labels, true_labels, eval_set=None) -> float:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    idx = np.arange(len(true)) if eval_set is None else np.asarray(eval_set, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("evaluation set is empty")
    return float(np.mean(pred[idx] == true[idx]))


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if y.all() or not y.any():
        raise ValueError("need at least one positive and one negative")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg); tied scores earn half credit."""
    s, y = _check_binary(scores, labels)
    ranks = rankdata(s)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean precision at each positive, ranking by score desc then index asc."""
    s, y = _check_binary(scores, labels)
    order = np.lexsort((np.arange(s.size), -s))
    hits = y[order]
    prec = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(prec[hits].sum() / hits.sum())


def contingency(pred, true) -> np.ndarray:
    _, p = np.unique(np.asarray(pred), return_inverse=True)
    _, t = np.unique(np.asarray(true), return_inverse=True)
    table = np.zeros((p.max() + 1 if p.size else 0, t.max() + 1 if t.size else 0))
    np.add.at(table, (p, t), 1)
    return table


def clustering_accuracy(pred_clusters, true_labels) -> float:
    """Accuracy under the best one-to-one cluster-to-label mapping."""
    table = contingency(pred_clusters, true_labels)
    if max(table.shape) > MAX_ASSIGNMENT:
        raise ValueError(f"too many clusters/labels for assignment (> {MAX_ASSIGNMENT})")
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred_clusters, true_labels) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(pred_clusters, true_labels)
    n = table.sum()
    if n == 0:
        raise ValueError("empty partitions")
    h_p, h_t = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if h_p == 0 and h_t == 0:
        return 1.0
    pij = table / n
    outer = np.outer(pij.sum(axis=1), pij.sum(axis=0))
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    denom = (h_p + h_t) / 2.0
    return max(0.0, mi / denom) if denom > 0 else 0.0


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(pred_clusters, true_labels) -> float:
    table = contingency(pred_clusters, true_labels)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def report(task: str, **values) -> dict:
    """A metric report: ``{"task": ..., name: value, ...}``."""
    out = {"task": task}
    out.update({k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                for k, v in values.items()})
    return out


def to_json(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True)
