"""Plain-text dataset files, node/edge splits and a stochastic block model generator.

A dataset directory holds::

    edges.txt     u v [w]          one undirected edge per line, '#' comments
    features.txt  N d              header, then N rows of d reals
    labels.txt    node class       optional
    splits.txt    node train|val|test   optional

Cora or Citeseer can be exported to this layout from their public
Planetoid files: write ``graph`` adjacency pairs to ``edges.txt``, the
stacked ``allx``/``tx`` rows (re-ordered by ``test.index``) to
``features.txt``, argmax of the label matrix to ``labels.txt`` and the
standard 140/500/1000 split to ``splits.txt``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .graph import GraphError, SparseGraph, build_csr
from .rng import stream

SPLIT_NAMES = ("train", "val", "test")


class DataFormatError(ValueError):
    """A dataset file is malformed; the message names the file and line."""


@dataclass(frozen=True)
class Dataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray | None = None
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.shape[0] != self.graph.n:
            raise DataFormatError(f"{self.features.shape[0]} feature rows for {self.graph.n} nodes")
        members = [np.asarray(self.splits.get(s, []), dtype=np.int64) for s in SPLIT_NAMES]
        allm = np.concatenate(members) if members else np.zeros(0, np.int64)
        if np.unique(allm).size != allm.size:
            raise DataFormatError("train/val/test splits overlap")
        if allm.size and self.labels is None:
            raise DataFormatError("splits given but no labels")
        if self.labels is not None and allm.size and np.any(self.labels[allm] < 0):
            raise DataFormatError("a split member has no label")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_classes(self) -> int | None:
        if self.labels is None:
            return None
        return int(self.labels[self.labels >= 0].max()) + 1

    def split(self, name: str) -> np.ndarray:
        return np.asarray(self.splits.get(name, []), dtype=np.int64)

    @property
    def train(self) -> np.ndarray:
        return self.split("train")

    @property
    def val(self) -> np.ndarray:
        return self.split("val")

    @property
    def test(self) -> np.ndarray:
        return self.split("test")

    def with_graph(self, g: SparseGraph) -> "Dataset":
        return replace(self, graph=g)

    def drop_edges(self, fraction: float, seed: int = 0) -> "Dataset":
        """Remove ``fraction`` of the edges uniformly at random, without replacement."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        e = self.graph.edges()
        w = self.graph.edge_weights()
        n_drop = int(round(fraction * len(e)))
        rng = stream(seed, "drop_edges")
        keep = np.sort(rng.permutation(len(e))[n_drop:])
        g = build_csr(zip(e[keep, 0], e[keep, 1], w[keep]), self.n)
        return self.with_graph(g)

    def subsample_train(self, labels_per_class: int, seed: int = 0) -> "Dataset":
        """Keep ``labels_per_class`` training nodes per class (fewer if a class is short)."""
        rng = stream(seed, "subsample_train")
        train = self.train
        keep = []
        for c in range(self.num_classes):
            members = train[self.labels[train] == c]
            keep.extend(rng.permutation(members)[:labels_per_class].tolist())
        splits = dict(self.splits)
        splits["train"] = np.sort(np.array(keep, dtype=np.int64))
        return replace(self, splits=splits)

    def permute(self, perm) -> "Dataset":
        """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        splits = {k: np.sort(inv[np.asarray(v, dtype=np.int64)]) for k, v in self.splits.items()}
        labels = None if self.labels is None else self.labels[perm]
        return Dataset(self.graph.permute(perm), self.features[perm], labels, splits)


# ---- text formats ---------------------------------------------------------

def _lines(path: Path):
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            yield lineno, line


def _read_features(path: Path) -> np.ndarray:
    it = ((no, ln) for no, ln in _lines(path) if ln)
    try:
        lineno, header = next(it)
    except StopIteration:
        raise DataFormatError(f"{path.name}: empty file, expected header 'N d'") from None
    parts = header.split()
    if len(parts) != 2:
        raise DataFormatError(f"{path.name}:{lineno}: header must be 'N d', got {header!r}")
    try:
        n, d = int(parts[0]), int(parts[1])
    except ValueError:
        raise DataFormatError(f"{path.name}:{lineno}: header must be two integers") from None
    X = np.zeros((n, d))
    last = lineno
    for r in range(n):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise DataFormatError(f"{path.name}:{last + 1}: expected feature row {r + 1} of {n}, "
                                  "got end of file") from None
        last = lineno
        vals = line.split()
        if len(vals) != d:
            raise DataFormatError(f"{path.name}:{lineno}: expected {d} values, got {len(vals)}")
        try:
            X[r] = [float(v) for v in vals]
        except ValueError:
            raise DataFormatError(f"{path.name}:{lineno}: non-numeric feature value") from None
        if not np.all(np.isfinite(X[r])):
            raise DataFormatError(f"{path.name}:{lineno}: non-finite feature value")
    extra = next(it, None)
    if extra is not None:
        raise DataFormatError(f"{path.name}:{extra[0]}: more rows than the header's N={n}")
    return X


def _read_edges(path: Path, n: int) -> SparseGraph:
    edges = []
    seen: dict[tuple[int, int], tuple[float, int]] = {}
    for lineno, line in _lines(path):
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise DataFormatError(f"{path.name}:{lineno}: expected 'u v [w]', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise DataFormatError(f"{path.name}:{lineno}: malformed edge {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise DataFormatError(f"{path.name}:{lineno}: node index out of range [0, {n})")
        if u == v:
            raise DataFormatError(f"{path.name}:{lineno}: self-loop at node {u}")
        if not w > 0:
            raise DataFormatError(f"{path.name}:{lineno}: edge weight must be positive")
        key = (min(u, v), max(u, v))
        if key in seen and seen[key][0] != w:
            raise DataFormatError(f"{path.name}:{lineno}: weight {w} conflicts with line "
                                  f"{seen[key][1]} for edge {key}")
        seen.setdefault(key, (w, lineno))
        edges.append((u, v, w))
    try:
        return build_csr(edges, n)
    except GraphError as exc:
        raise DataFormatError(f"{path.name}: {exc}") from None


def _read_labels(path: Path, n: int) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    for lineno, line in _lines(path):
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DataFormatError(f"{path.name}:{lineno}: expected 'node class'")
        try:
            node, cls = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError(f"{path.name}:{lineno}: malformed label line") from None
        if not 0 <= node < n:
            raise DataFormatError(f"{path.name}:{lineno}: node index out of range [0, {n})")
        if cls < 0:
            raise DataFormatError(f"{path.name}:{lineno}: class must be nonnegative")
        if labels[node] >= 0 and labels[node] != cls:
            raise DataFormatError(f"{path.name}:{lineno}: node {node} labeled twice")
        labels[node] = cls
    return labels


def _read_splits(path: Path, n: int) -> dict:
    groups = {s: [] for s in SPLIT_NAMES}
    owner: dict[int, int] = {}
    for lineno, line in _lines(path):
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[1] not in groups:
            raise DataFormatError(f"{path.name}:{lineno}: expected 'node train|val|test'")
        try:
            node = int(parts[0])
        except ValueError:
            raise DataFormatError(f"{path.name}:{lineno}: malformed node index") from None
        if not 0 <= node < n:
            raise DataFormatError(f"{path.name}:{lineno}: node index out of range [0, {n})")
        if node in owner:
            raise DataFormatError(f"{path.name}:{lineno}: node {node} already listed on line "
                                  f"{owner[node]}")
        owner[node] = lineno
        groups[parts[1]].append(node)
    return {k: np.sort(np.array(v, dtype=np.int64)) for k, v in groups.items()}


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    if not (d / "features.txt").exists() or not (d / "edges.txt").exists():
        raise DataFormatError(f"{d}: needs edges.txt and features.txt")
    X = _read_features(d / "features.txt")
    n = X.shape[0]
    g = _read_edges(d / "edges.txt", n)
    labels = _read_labels(d / "labels.txt", n) if (d / "labels.txt").exists() else None
    splits = _read_splits(d / "splits.txt", n) if (d / "splits.txt").exists() else {}
    if splits and labels is None:
        raise DataFormatError(f"{d}: splits.txt present but labels.txt missing")
    if splits:
        for name, nodes in splits.items():
            missing = nodes[labels[nodes] < 0] if nodes.size else nodes
            if missing.size:
                raise DataFormatError(f"splits.txt: {name} node {int(missing[0])} has no label")
    return Dataset(g, X, labels, splits)


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    e, w = ds.graph.edges(), ds.graph.edge_weights()
    with open(d / "edges.txt", "w", encoding="utf-8", newline="\n") as fh:
        for (u, v), wt in zip(e, w):
            fh.write(f"{u} {v}\n" if wt == 1.0 else f"{u} {v} {float(wt)!r}\n")
    with open(d / "features.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{ds.features.shape[0]} {ds.features.shape[1]}\n")
        for row in ds.features:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    if ds.labels is not None:
        with open(d / "labels.txt", "w", encoding="utf-8", newline="\n") as fh:
            for node, c in enumerate(ds.labels):
                if c >= 0:
                    fh.write(f"{node} {c}\n")
    if ds.splits:
        with open(d / "splits.txt", "w", encoding="utf-8", newline="\n") as fh:
            for name in SPLIT_NAMES:
                for node in ds.split(name):
                    fh.write(f"{node} {name}\n")


# ---- edge splits ----------------------------------------------------------

@dataclass(frozen=True)
class EdgeSplit:
    n: int
    train_edges: np.ndarray
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray
    warnings: tuple = ()

    KINDS = ("train_edges", "val_pos", "val_neg", "test_pos", "test_neg")

    def train_graph(self) -> SparseGraph:
        return build_csr(((u, v) for u, v in self.train_edges), self.n)

    def eval_pairs(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        pos, neg = getattr(self, f"{split}_pos"), getattr(self, f"{split}_neg")
        pairs = np.concatenate([pos, neg]).reshape(-1, 2)
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        return pairs, labels

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"n {self.n}\n")
            for kind in self.KINDS:
                for u, v in getattr(self, kind):
                    fh.write(f"{kind} {u} {v}\n")

    @classmethod
    def load(cls, path) -> "EdgeSplit":
        groups = {k: [] for k in cls.KINDS}
        n = None
        for lineno, line in _lines(Path(path)):
            if not line:
                continue
            parts = line.split()
            if parts[0] == "n" and len(parts) == 2:
                n = int(parts[1])
                continue
            if len(parts) != 3 or parts[0] not in groups:
                raise DataFormatError(f"{Path(path).name}:{lineno}: expected 'kind u v'")
            groups[parts[0]].append((int(parts[1]), int(parts[2])))
        if n is None:
            raise DataFormatError(f"{Path(path).name}: missing 'n N' header")
        arrs = {k: np.array(v, dtype=np.int64).reshape(-1, 2) for k, v in groups.items()}
        return cls(n, **arrs)


def _sample_non_edges(n: int, count: int, forbidden: set, rng: np.random.Generator) -> np.ndarray:
    out, chosen = [], set()
    total = n * (n - 1) // 2
    if count > total - len(forbidden):
        raise ValueError("graph too small: not enough non-edges for negative sampling")
    while len(out) < count:
        i, j = (int(x) for x in rng.integers(0, n, size=2))
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in forbidden or key in chosen:
            continue
        chosen.add(key)
        out.append(key)
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def split_edges(g: SparseGraph, val_frac: float = 0.05, test_frac: float = 0.10,
                seed: int = 0) -> EdgeSplit:
    """Hold out uniform random edges for validation/test with equal-size non-edge sets."""
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise ValueError("fractions must be nonnegative and sum to < 1")
    e = g.edges()
    m = len(e)
    n_val, n_test = int(np.floor(val_frac * m)), int(np.floor(test_frac * m))
    if (val_frac > 0 and n_val == 0) or (test_frac > 0 and n_test == 0):
        raise ValueError(f"graph too small: {m} edges cannot give the requested fractions")
    rng = stream(seed, "split_edges")
    perm = rng.permutation(m)
    val = e[np.sort(perm[:n_val])]
    test = e[np.sort(perm[n_val:n_val + n_test])]
    train = e[np.sort(perm[n_val + n_test:])]
    forbidden = {(int(u), int(v)) for u, v in e}
    neg = _sample_non_edges(g.n, n_val + n_test, forbidden, rng)
    notes = []
    base_cc = connected_components(g.to_scipy(), directed=False)[0]
    tg = build_csr(((u, v) for u, v in train), g.n)
    cc = connected_components(tg.to_scipy(), directed=False)[0]
    if cc > base_cc:
        notes.append(f"training graph has {cc} components vs {base_cc} in the full graph")
    return EdgeSplit(g.n, train, val, neg[:n_val], test, neg[n_val:], tuple(notes))


# ---- synthetic data -------------------------------------------------------

def generate_sbm(blocks, p_in: float, p_out: float, d: int = 16, mu: float = 1.0,
                 sigma: float = 1.0, seed: int = 0, labels_per_class: int = 20,
                 n_val: int | None = None, n_test: int | None = None) -> Dataset:
    """Stochastic block model graph with Gaussian block-mean features.

    Block ``b`` has mean ``mu * e_b``; ``d`` must be at least the number of
    blocks so the means are orthogonal. The split draws ``labels_per_class``
    training nodes per block, then ``n_val`` and ``n_test`` from the rest
    (defaults: a quarter and a half of all nodes, capped at 500/1000 and
    shrunk to fit the nodes left after the training draw).
    """
    sizes = np.asarray(blocks, dtype=np.int64)
    if sizes.size == 0 or np.any(sizes < 1):
        raise ValueError("block sizes must all be >= 1")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if d < sizes.size:
        raise ValueError(f"feature dim {d} is smaller than the {sizes.size} blocks")
    n = int(sizes.sum())
    labels = np.repeat(np.arange(sizes.size), sizes)
    rng_e = stream(seed, "sbm_edges")
    rng_f = stream(seed, "sbm_features")
    rng_s = stream(seed, "sbm_split")
    i, j = np.triu_indices(n, 1)
    prob = np.where(labels[i] == labels[j], p_in, p_out)
    hit = rng_e.random(prob.size) < prob
    g = build_csr(zip(i[hit], j[hit]), n)
    X = np.zeros((n, d))
    X[np.arange(n), labels] = mu
    X += sigma * rng_f.standard_normal((n, d))
    train = []
    for b in range(sizes.size):
        members = np.flatnonzero(labels == b)
        train.extend(rng_s.permutation(members)[:labels_per_class].tolist())
    train = np.array(sorted(train), dtype=np.int64)
    rest = rng_s.permutation(np.setdiff1d(np.arange(n), train))
    # defaulted sizes shrink to fit what the training draw left over
    if n_val is None:
        n_val = min(500, n // 4, rest.size // 3)
    if n_test is None:
        n_test = min(1000, n // 2, rest.size - n_val)
    if n_val + n_test > rest.size:
        raise ValueError("not enough nodes for the requested validation/test sizes")
    splits = {"train": train, "val": np.sort(rest[:n_val]),
              "test": np.sort(rest[n_val:n_val + n_test])}
    return Dataset(g, X, labels, splits)


def warn_split(split: EdgeSplit) -> None:
    for msg in split.warnings:
        warnings.warn(msg, stacklevel=2)
