"""Independent reference implementations the tests compare against.

Everything here is written the slow, obvious way (dense matrices, full
sorts, explicit loops) so it shares no code path with the library.
"""

from collections import Counter
from itertools import permutations
from math import comb, log

import numpy as np

from rod import autodiff as ad
from rod.data import Dataset
from rod.graph import build_csr
from rod.data import split_edges
from rod.model import init_params
from rod.trainer import (_Context, _joint, _refresh_clusters, _task_inputs, _teacher_loss,
                         default_config, preprocess)


def random_graph(rng: np.random.Generator, n: int, p: float):
    i, j = np.triu_indices(n, 1)
    keep = rng.random(i.size) < p
    return build_csr(zip(i[keep], j[keep]), n)


def dense_a_hat(g) -> np.ndarray:
    """Dense D^-1/2 (A + I) D^-1/2."""
    A = g.to_dense() + np.eye(g.n)
    d = A.sum(axis=1)
    return A / np.sqrt(np.outer(d, d))


# ---- sampling -------------------------------------------------------------

def brute_force_sample(S: np.ndarray, edges: set, M: int, P: int):
    """Rank every i<j pair with sorted() and peel off positives/negatives."""
    n = S.shape[0]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    ranked = sorted(pairs, key=lambda p: (-S[p], p[0], p[1]))
    pos = set(ranked[:M]) | set(edges)
    pos_list = [p for p in ranked if p in pos]
    # negatives run from the least similar pair upwards
    neg_list = [p for p in reversed(ranked) if p not in pos][:P]
    return pos_list, neg_list


# ---- clustering metrics ---------------------------------------------------

def perm_accuracy(pred, true) -> float:
    """Best accuracy over every relabelling of the predicted clusters."""
    pred, true = list(pred), list(true)
    p_ids = sorted(set(pred))
    t_ids = sorted(set(true))
    k = max(len(p_ids), len(t_ids))
    targets = t_ids + [None] * (k - len(t_ids))
    best = 0
    for perm in permutations(targets, len(p_ids)):
        mapping = dict(zip(p_ids, perm))
        best = max(best, sum(mapping[a] == b for a, b in zip(pred, true)))
    return best / len(true)


def nmi_oracle(pred, true) -> float:
    n = len(pred)
    joint = Counter(zip(pred, true))
    cp, ct = Counter(pred), Counter(true)
    h = lambda c: -sum(v / n * log(v / n) for v in c.values())  # noqa: E731
    hp, ht = h(cp), h(ct)
    if hp == 0 and ht == 0:
        return 1.0
    mi = sum(v / n * log((v / n) / (cp[a] / n * ct[b] / n)) for (a, b), v in joint.items())
    return mi / ((hp + ht) / 2)


def ari_oracle(pred, true) -> float:
    """Pair-counting ARI: agree/disagree over all unordered node pairs."""
    n = len(pred)
    a = b = c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_p, same_t = pred[i] == pred[j], true[i] == true[j]
            if same_p and same_t:
                a += 1
            elif same_p:
                b += 1
            elif same_t:
                c += 1
            else:
                d += 1
    total = comb(n, 2)
    expected = (a + b) * (a + c) / total
    max_index = ((a + b) + (a + c)) / 2
    if max_index == expected:
        return 1.0
    return (a - expected) / (max_index - expected)


# ---- joint loss gradients -------------------------------------------------

def toy_dataset(seed: int = 0) -> Dataset:
    g = build_csr([(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)], 6)
    X = np.random.default_rng(seed).standard_normal((6, 3))
    labels = np.array([0, 0, 0, 1, 1, 1])
    splits = {"train": np.array([0, 5]), "val": np.array([1, 4]), "test": np.array([2, 3])}
    return Dataset(g, X, labels, splits)


def _fd_error(f, params, eps: float) -> float:
    """Central differences of scalar ``f()`` against each param's ``.grad``."""
    worst = 0.0
    for p in params:
        g = np.zeros_like(p.value) if p.grad is None else p.grad
        analytic = g.reshape(-1).copy()
        flat = p.value.reshape(-1)
        numeric = np.zeros(flat.size)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = f()
            flat[idx] = orig - eps
            lo = f()
            flat[idx] = orig
            numeric[idx] = (hi - lo) / (2 * eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst


def toy_setup(task: str, seed: int = 0):
    ds = toy_dataset(seed)
    cfg = default_config(task, K=2, hidden=5, embed=3, dropout=0.0, seed=seed, q=2,
                         kmeans_restarts=2)
    split = split_edges(ds.graph, val_frac=0.0, test_frac=0.0, seed=seed) if task == "link" else None
    cfg, g, split = _task_inputs(ds, cfg, split)
    pre = preprocess(g, ds.features, cfg)
    model = init_params(cfg, ds.features.shape[1])
    ctx = _Context(labels=ds.labels, train_idx=ds.train)
    if task == "cluster":
        _refresh_clusters(model, pre, ctx, 0)
    return model, pre, ctx


def joint_loss_grad_error(task: str, seed: int = 0, eps: float = 1e-5) -> float:
    """Max relative error of autodiff vs central differences for the joint loss
    of ``task`` on the 6-node toy graph, over every model parameter.

    The teacher target and cluster assignments are held fixed, as they are
    constants inside the objective.
    """
    model, pre, ctx = toy_setup(task, seed)
    stats = Counter()
    total, _, teacher = _joint(model, pre, ctx, False, None, stats)
    target = teacher.value.copy()
    ad.backward(total)
    return _fd_error(lambda: _joint(model, pre, ctx, False, None, stats, target)[0].item(),
                     model.parameters(), eps)


def teacher_loss_grad_error(task: str, seed: int = 0, eps: float = 1e-5) -> float:
    """Same check for the teacher's own task loss over the teacher gate parameters."""
    model, pre, ctx = toy_setup(task, seed)

    def loss():
        _, _, teacher = _joint(model, pre, ctx, False, None, Counter())
        return _teacher_loss(teacher, pre, ctx, model.config)

    ad.backward(loss())
    return _fd_error(lambda: loss().item(), model.teacher.tensors(), eps)
