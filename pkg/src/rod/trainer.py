"""Training and evaluation of ROD, the SGC/MLP baselines, and the sparsity/depth studies."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .clustering import ClusterState, align_to, refresh_if_due
from .data import Dataset, EdgeSplit, split_edges
from .graph import PropagationSet, SparseGraph, normalized_adjacency, precompute_propagation
from .metrics import (accuracy, ari, average_precision, clustering_accuracy, nmi, report,
                      roc_auc)
from .model import (RodConfig, RodModel, embedding_similarity, encode, gated_combine,
                    init_params, pair_similarity, student_forward, teacher_ensemble)
from .objectives import (LossBreakdown, classification_loss, clustering_loss,
                         distillation_loss, joint_loss, link_loss, pair_weights, reception_loss)
from .reception import (MAX_DENSE_NODES, SampledAdjacency, cosine_similarity, default_budgets,
                        ensemble_similarity, sample_reliable)
from .rng import stream

# Per-task defaults. Classification: dense encoder of 128 units, lr 0.02,
# dropout 0.8, alpha = beta = 0.1, 200 epochs, L2 5e-4. Link prediction:
# 1024 hidden units, lr 0.001, K = 4, alpha 0.2, beta 0.1, 400 epochs.
# Clustering: 64-d embedding, lr 0.01, alpha = beta = 0.1, 200 epochs,
# K-Means every 10 epochs.
TASK_DEFAULTS = {
    "classify": dict(K=4, hidden=128, lr=0.02, dropout=0.8, alpha=0.1, beta=0.1,
                     epochs=200, weight_decay=5e-4),
    "link": dict(K=4, hidden=1024, embed=64, lr=0.001, dropout=0.0, alpha=0.2, beta=0.1,
                 epochs=400, weight_decay=0.0),
    "cluster": dict(K=4, hidden=128, embed=64, lr=0.01, dropout=0.0, alpha=0.1, beta=0.1,
                    epochs=200, weight_decay=0.0, kmeans_period=10),
}


def default_config(task: str = "classify", **overrides) -> RodConfig:
    if task not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task!r}")
    kw = dict(TASK_DEFAULTS[task])
    kw.update(overrides)
    return RodConfig(task=task, **kw)


# ---- preprocessing --------------------------------------------------------

@dataclass
class Preprocessed:
    graph: SparseGraph
    props: PropagationSet
    sims: list
    S: np.ndarray
    A_bar: SampledAdjacency
    weights: np.ndarray

    @property
    def K(self) -> int:
        return self.props.depth


def _fingerprint(g: SparseGraph, X: np.ndarray) -> str:
    h = hashlib.sha1()
    for a in (g.row_ptr, g.col_idx, g.values, np.ascontiguousarray(X, dtype=np.float64)):
        h.update(np.ascontiguousarray(a).tobytes())
        h.update(str(a.shape).encode())
    return h.hexdigest()


class PrecomputeCache:
    """Memoises propagation and per-hop similarities by (graph, features).

    A request for depth ``K`` is served from any cached entry of depth
    ``>= K``; ``hits``/``misses`` count lookups.
    """

    def __init__(self):
        self._store: dict[str, tuple[PropagationSet, list]] = {}
        self.hits = 0
        self.misses = 0

    def get(self, g: SparseGraph, X: np.ndarray, K: int, stats: Counter):
        key = _fingerprint(g, X)
        entry = self._store.get(key)
        if entry is not None and entry[0].depth >= K:
            self.hits += 1
            props, sims = entry
            return props.truncate(K), sims[:K + 1]
        self.misses += 1
        props, sims = _propagate_and_compare(g, X, K, stats)
        self._store[key] = (props, sims)
        return props, sims


def _propagate_and_compare(g, X, K, stats):
    stats["propagate"] += 1
    props = precompute_propagation(normalized_adjacency(g), X, K)
    stats["similarity"] += 1
    dense = g.n <= MAX_DENSE_NODES
    sims = [cosine_similarity(m) for m in props] if dense else []
    return props, sims


def preprocess(g: SparseGraph, X: np.ndarray, config: RodConfig, stats: Counter | None = None,
               cache: PrecomputeCache | None = None) -> Preprocessed:
    stats = Counter() if stats is None else stats
    if cache is not None:
        props, sims = cache.get(g, X, config.K, stats)
    else:
        props, sims = _propagate_and_compare(g, X, config.K, stats)
    if not sims:
        raise ValueError(f"graphs above {MAX_DENSE_NODES} nodes need a subsampled input")
    S = ensemble_similarity(sims)
    M0, P0 = default_budgets(g.n, g.n_edges)
    M = config.pos_budget if config.pos_budget is not None else M0
    P = config.neg_budget if config.neg_budget is not None else P0
    stats["sample"] += 1
    A_bar = sample_reliable(S, g, M, P)
    return Preprocessed(g, props, sims, S, A_bar, pair_weights(S, A_bar))


# ---- training -------------------------------------------------------------

@dataclass
class TrainResult:
    model: RodModel
    config: RodConfig
    losses: list
    history: list
    metrics: dict
    best_epoch: int
    split: EdgeSplit | None = None
    stats: Counter = field(default_factory=Counter)


@dataclass
class _Context:
    """Task-specific inputs that stay fixed between epochs (or between K-Means refreshes)."""

    labels: np.ndarray | None = None
    train_idx: np.ndarray | None = None
    cluster_states: list = field(default_factory=list)
    pseudo: np.ndarray | None = None


def _use_sampled_mask(config: RodConfig, n: int) -> bool:
    if config.reception_mask == "auto":
        return n > MAX_DENSE_NODES
    return config.reception_mask == "sampled"


def _students(model: RodModel, pre: Preprocessed, training: bool, rng, pairs=None,
              centroids=None):
    task = model.config.task
    H = gated_combine(pre.props, model.gate)
    shared = encode(H, model.encoder, training, rng)
    Zs, preds = [], []
    for k, head in enumerate(model.heads):
        Z, P = student_forward(shared, head, task, pairs=pairs,
                               centroids=None if centroids is None else centroids[k])
        Zs.append(Z)
        preds.append(P)
    return Zs, preds


def _joint(model: RodModel, pre: Preprocessed, ctx: _Context, training: bool, rng,
           stats: Counter, target: np.ndarray | None = None):
    """Joint student loss; returns ``(total, breakdown, teacher_output)``.

    The teacher output is a constant inside the distillation terms; pass
    ``target`` to pin it (finite-difference checks hold it fixed).
    """
    cfg = model.config
    task = cfg.task
    pairs = pre.A_bar.pairs if task == "link" else None
    cents = [st.centroids for st in ctx.cluster_states] if task == "cluster" else None
    Zs, preds = _students(model, pre, training, rng, pairs=pairs, centroids=cents)
    teacher = teacher_ensemble(preds, model.teacher, task)
    target = ad.Tensor(teacher.value if target is None else target)
    sampled = _use_sampled_mask(cfg, pre.graph.n)
    pieces = []
    for k, (Z, P) in enumerate(zip(Zs, preds)):
        if task == "classify":
            lt = classification_loss(P, ctx.labels, ctx.train_idx, cfg.reduction)
        elif task == "link":
            lt = link_loss(P, pre.A_bar, weights=pre.weights, reduction=cfg.reduction)
        else:
            st = ctx.cluster_states[k]
            lt = clustering_loss(Z, st.centroids, st.assignments, st.q, cfg.flip_cluster_sign)
        if sampled:
            lr = reception_loss(pair_similarity(Z, pre.A_bar.pairs), pre.sims[k], pre.A_bar,
                                cfg.reduction)
            stats["reception_pairs"] += len(pre.A_bar.pairs)
        else:
            lr = reception_loss(embedding_similarity(Z), pre.sims[k], reduction=cfg.reduction)
            stats["reception_pairs"] += pre.graph.n * pre.graph.n
        ld = distillation_loss(target, P, task, cfg.reduction)
        pieces.append((lt, lr, ld))
    total, bd = joint_loss(pieces, cfg.alpha, cfg.beta)
    return total, bd, teacher


def _teacher_loss(teacher, pre: Preprocessed, ctx: _Context, cfg: RodConfig):
    """Task loss on the teacher output; only the teacher gates receive its gradient."""
    if cfg.task == "classify":
        return classification_loss(teacher, ctx.labels, ctx.train_idx, cfg.reduction)
    if cfg.task == "link":
        return link_loss(teacher, pre.A_bar, weights=pre.weights, reduction=cfg.reduction)
    return classification_loss(teacher, ctx.pseudo, np.arange(pre.graph.n), cfg.reduction)


def _objective(model: RodModel, pre: Preprocessed, ctx: _Context, training: bool, rng,
               stats: Counter):
    total, bd, teacher = _joint(model, pre, ctx, training, rng, stats)
    t_loss = _teacher_loss(teacher, pre, ctx, model.config)
    bd.teacher = t_loss.item()
    return ad.add(total, t_loss), bd


def _refresh_clusters(model: RodModel, pre: Preprocessed, ctx: _Context, epoch: int):
    cfg = model.config
    Zs = _embeddings(model, pre)
    states = []
    for k, Z in enumerate(Zs):
        st = refresh_if_due(epoch, cfg.kmeans_period, Z, cfg.q,
                            seed=int(stream(cfg.seed, "kmeans_seed", epoch, k).integers(2**31)),
                            max_iters=cfg.kmeans_max_iters, restarts=cfg.kmeans_restarts)
        if st is None:
            return False
        states.append(st)
    ref = ctx.pseudo if ctx.pseudo is not None else states[0].assignments
    states = [align_to(st, ref) for st in states]
    votes = np.zeros((pre.graph.n, cfg.q), dtype=np.int64)
    for st in states:
        votes[np.arange(pre.graph.n), st.assignments] += 1
    ctx.cluster_states = states
    ctx.pseudo = votes.argmax(axis=1)
    model.centroids = [st.centroids.copy() for st in states]
    return True


def _embeddings(model: RodModel, pre: Preprocessed) -> list[np.ndarray]:
    H = gated_combine(pre.props, model.gate)
    shared = encode(H, model.encoder, False)
    return [ad.add(ad.matmul(shared, h.weight), h.bias).value for h in model.heads]


def _task_inputs(dataset: Dataset, config: RodConfig, split: EdgeSplit | None):
    """Resolve q, the training graph and the edge split for ``config.task``."""
    if config.task in ("classify", "cluster") and config.q is None:
        if dataset.labels is None:
            raise ValueError(f"{config.task} needs q or labels to infer it")
        config = replace(config, q=dataset.num_classes)
    if config.task == "classify" and dataset.train.size == 0:
        raise ValueError("classification needs a nonempty train split")
    g = dataset.graph
    if config.task == "link":
        if split is None:
            split = split_edges(g, seed=config.seed)
        g = split.train_graph()
    return config, g, split


def train(dataset: Dataset, config: RodConfig, split: EdgeSplit | None = None,
          cache: PrecomputeCache | None = None, progress=None) -> TrainResult:
    """Full-batch ROD training with best-validation checkpointing.

    Preprocessing (propagation, similarities, sampling) runs once. ``progress``
    is an optional callback receiving each epoch's loss row.
    """
    config, g, split = _task_inputs(dataset, config, split)
    stats = Counter()
    pre = preprocess(g, dataset.features, config, stats, cache)
    model = init_params(config, dataset.features.shape[1])
    ctx = _Context(labels=dataset.labels, train_idx=dataset.train)
    opt = ad.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    drop_rng = stream(config.seed, "dropout")
    losses, history = [], []
    best_score, best_state, best_epoch = -np.inf, model.state(), -1
    for epoch in range(config.epochs):
        if config.task == "cluster":
            _refresh_clusters(model, pre, ctx, epoch)
        loss, bd = _objective(model, pre, ctx, True, drop_rng, stats)
        ad.backward(loss)
        opt.step()
        row = bd.as_row(epoch)
        losses.append(row)
        if progress is not None:
            progress(row)
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            score = _selection_score(model, dataset, pre, split)
            history.append({"epoch": epoch, "score": score})
            if score is not None and score > best_score:
                best_score, best_state, best_epoch = score, model.state(), epoch
            elif score is None:
                best_state, best_epoch = model.state(), epoch
    model.load_state(best_state)
    metrics = evaluate(model, dataset, split=split, pre=pre)
    metrics["best_epoch"] = best_epoch
    return TrainResult(model, config, losses, history, metrics, best_epoch, split, stats)


# ---- evaluation -----------------------------------------------------------

def predict(model: RodModel, pre: Preprocessed, pairs: np.ndarray | None = None) -> np.ndarray:
    """Teacher output in evaluation mode: class/cluster probabilities or pair scores."""
    task = model.config.task
    if task == "cluster" and not model.centroids:
        raise ValueError("clustering model has no centroids")
    cents = model.centroids if task == "cluster" else None
    _, preds = _students(model, pre, False, None, pairs=pairs, centroids=cents)
    return teacher_ensemble(preds, model.teacher, task).value


def _selection_score(model, dataset, pre, split):
    task = model.config.task
    if task == "link":
        pairs, labels = split.eval_pairs("val")
        if len(pairs) == 0:
            return None
        return roc_auc(predict(model, pre, pairs), labels)
    idx = dataset.val
    if idx.size == 0 or dataset.labels is None:
        return None
    pred = predict(model, pre).argmax(axis=1)
    if task == "classify":
        return accuracy(pred, dataset.labels, idx)
    return clustering_accuracy(pred[idx], dataset.labels[idx])


def evaluate(model: RodModel, dataset: Dataset, split: EdgeSplit | None = None,
             pre: Preprocessed | None = None, cache: PrecomputeCache | None = None) -> dict:
    """Deterministic metrics for a trained model on ``dataset``.

    For link models without ``split`` the default split is rebuilt from
    ``config.seed``, which matches training only if training used it too.
    """
    config = model.config
    if pre is None:
        _, g, split = _task_inputs(dataset, config, split)
        pre = preprocess(g, dataset.features, config, cache=cache)
    task = config.task
    if task == "classify":
        probs = predict(model, pre)
        pred = probs.argmax(axis=1)
        out = {"method": "rod"}
        for name in ("train", "val", "test"):
            idx = dataset.split(name)
            if idx.size:
                out[f"{name}_accuracy"] = accuracy(pred, dataset.labels, idx)
        return report(task, **out)
    if task == "link":
        if split is None:
            raise ValueError("link evaluation needs the edge split used in training")
        out = {"method": "rod"}
        for name in ("val", "test"):
            pairs, labels = split.eval_pairs(name)
            if len(pairs):
                scores = predict(model, pre, pairs)
                out[f"{name}_auc"] = roc_auc(scores, labels)
                out[f"{name}_ap"] = average_precision(scores, labels)
        return report(task, **out)
    pred = predict(model, pre).argmax(axis=1)
    if dataset.labels is None:
        return report(task, method="rod", clusters=np.bincount(pred, minlength=config.q).tolist())
    lab = dataset.labels >= 0
    return report(task, method="rod", acc=clustering_accuracy(pred[lab], dataset.labels[lab]),
                  nmi=nmi(pred[lab], dataset.labels[lab]), ari=ari(pred[lab], dataset.labels[lab]))


# ---- baselines ------------------------------------------------------------

def _fit_softmax_model(params, logits_fn, dataset: Dataset, config: RodConfig):
    """Train ``logits_fn(training, rng)`` with CE on the train split; keep best val."""
    opt = ad.Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = stream(config.seed, "baseline_dropout")
    best, best_vals = -np.inf, [p.value.copy() for p in params]
    val = dataset.val
    for epoch in range(config.epochs):
        probs = ad.softmax_rows(logits_fn(True, rng))
        loss = classification_loss(probs, dataset.labels, dataset.train, config.reduction)
        ad.backward(loss)
        opt.step()
        if val.size:
            pred = logits_fn(False, None).value.argmax(axis=1)
            score = accuracy(pred, dataset.labels, val)
            if score > best:
                best, best_vals = score, [p.value.copy() for p in params]
        else:
            best_vals = [p.value.copy() for p in params]
    for p, v in zip(params, best_vals):
        p.value = v
    return logits_fn(False, None).value.argmax(axis=1)


def baseline_predictions(kind: str, dataset: Dataset, config: RodConfig,
                         cache: PrecomputeCache | None = None, K: int | None = None) -> np.ndarray:
    """Test-time class predictions of an SGC or MLP baseline.

    ``K`` overrides ``config.K`` for SGC and may be 0 (plain softmax regression).
    """
    if config.task != "classify":
        raise ValueError("baselines support the classification task only")
    if dataset.labels is None or dataset.train.size == 0:
        raise ValueError("baselines need labels and a train split")
    q = config.q or dataset.num_classes
    d = dataset.features.shape[1]
    rng = stream(config.seed, "baseline_init")

    def glorot(fi, fo):
        lim = np.sqrt(6.0 / (fi + fo))
        return ad.Tensor(rng.uniform(-lim, lim, size=(fi, fo)), requires_grad=True)

    if kind == "sgc":
        K = config.K if K is None else int(K)
        if K < 0:
            raise ValueError("SGC depth must be >= 0")
        if cache is not None:
            props, _ = cache.get(dataset.graph, dataset.features, K, Counter())
        else:
            props = precompute_propagation(normalized_adjacency(dataset.graph), dataset.features, K)
        XK = props[K]
        W, b = glorot(d, q), ad.Tensor(np.zeros((1, q)), requires_grad=True)
        return _fit_softmax_model([W, b], lambda tr, r: ad.add(ad.matmul(XK, W), b),
                                  dataset, config)
    if kind == "mlp":
        X0 = dataset.features
        W1, b1 = glorot(d, config.hidden), ad.Tensor(np.zeros((1, config.hidden)), requires_grad=True)
        W2, b2 = glorot(config.hidden, q), ad.Tensor(np.zeros((1, q)), requires_grad=True)

        def logits(training, r):
            h = ad.relu(ad.add(ad.matmul(ad.dropout(X0, config.dropout, r, training), W1), b1))
            return ad.add(ad.matmul(h, W2), b2)

        return _fit_softmax_model([W1, b1, W2, b2], logits, dataset, config)
    raise ValueError(f"unknown baseline {kind!r}; expected 'sgc' or 'mlp'")


def run_baseline(kind: str, dataset: Dataset, config: RodConfig,
                 cache: PrecomputeCache | None = None, K: int | None = None) -> dict:
    pred = baseline_predictions(kind, dataset, config, cache, K)
    out = {"method": kind}
    for name in ("train", "val", "test"):
        idx = dataset.split(name)
        if idx.size:
            out[f"{name}_accuracy"] = accuracy(pred, dataset.labels, idx)
    return report("classify", **out)


# ---- studies --------------------------------------------------------------

def analyze_depth(dataset: Dataset, config: RodConfig, K_range: Iterable[int],
                  seeds: Sequence[int]) -> list[dict]:
    """Per-degree correctness of SGC over propagation depths.

    Rows are ``{"degree", "K", "correct_fraction", "count"}`` over test nodes
    (all non-training nodes if there is no test split), pooled over seeds.
    """
    if dataset.labels is None:
        raise ValueError("depth analysis needs labels")
    nodes = dataset.test if dataset.test.size else np.setdiff1d(np.arange(dataset.n), dataset.train)
    deg = np.rint(dataset.graph.degrees[nodes]).astype(np.int64)
    degrees = np.unique(deg)
    cache = PrecomputeCache()
    rows = []
    for K in K_range:
        hits = np.zeros(len(nodes))
        for s in seeds:
            cfg = replace(config, seed=int(s), task="classify")
            pred = baseline_predictions("sgc", dataset, cfg, cache, K=int(K))
            hits += pred[nodes] == dataset.labels[nodes]
        for dg in degrees:
            sel = deg == dg
            rows.append({"degree": int(dg), "K": int(K),
                         "correct_fraction": float(hits[sel].sum() / (sel.sum() * len(seeds))),
                         "count": int(sel.sum())})
    return rows


STUDIES = ("edge_sparsity", "label_sparsity", "depth")


def _primary_metric(rep: dict) -> dict:
    return {k: v for k, v in rep.items() if k.startswith(("test_", "val_")) or
            k in ("acc", "nmi", "ari")}


def sweep(study: str, dataset: Dataset, config: RodConfig, grid: Sequence, seeds: Sequence[int],
          methods: Sequence[str] = ("rod", "sgc"), cache: PrecomputeCache | None = None) -> list[dict]:
    """One row per (grid value, seed, method).

    ``edge_sparsity`` grid values are the fraction of edges kept,
    ``label_sparsity`` values are training labels per class and ``depth``
    values are propagation depths ``K``.
    """
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; expected one of {STUDIES}")
    cache = PrecomputeCache() if cache is None else cache
    rows = []
    for value in grid:
        for s in seeds:
            cfg = replace(config, seed=int(s))
            ds = dataset
            if study == "edge_sparsity":
                if float(value) < 1.0:
                    ds = dataset.drop_edges(1.0 - float(value), seed=int(s))
            elif study == "label_sparsity":
                ds = dataset.subsample_train(int(value), seed=int(s))
            else:
                cfg = replace(cfg, K=int(value))
            for method in methods:
                if method == "rod":
                    rep = train(ds, cfg, cache=cache).metrics
                else:
                    rep = run_baseline(method, ds, cfg, cache)
                row = {"study": study, "value": value, "seed": int(s), "method": method}
                row.update(_primary_metric(rep))
                rows.append(row)
    return rows
