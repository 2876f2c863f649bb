"""Gated multi-hop encoder, per-hop student heads and the gated ensemble teacher.

Parameters are plain :class:`~rod.autodiff.Tensor` leaves grouped into small
dataclasses; forward functions build a fresh autodiff record every call.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import PropagationSet
from .rng import stream

PROB_EPS = 1e-7
TASKS = ("classify", "link", "cluster")


@dataclass
class RodConfig:
    task: str = "classify"
    K: int = 4
    hidden: int = 128
    embed: int = 64
    q: int | None = None
    alpha: float = 0.1
    beta: float = 0.1
    dropout: float = 0.8
    lr: float = 0.02
    weight_decay: float = 5e-4
    epochs: int = 200
    seed: int = 0
    kmeans_period: int = 10
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    reduction: str = "mean"
    flip_cluster_sign: bool = False
    reception_mask: str = "auto"
    pos_budget: int | None = None
    neg_budget: int | None = None
    eval_every: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must both be > 0")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.kmeans_period < 1:
            raise ValueError("kmeans_period must be >= 1")
        if self.hidden < 1 or self.embed < 1:
            raise ValueError("hidden and embed sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.reduction not in ("mean", "sum"):
            raise ValueError("reduction must be 'mean' or 'sum'")
        if self.reception_mask not in ("auto", "full", "sampled"):
            raise ValueError("reception_mask must be auto, full or sampled")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")

    @property
    def out_dim(self) -> int:
        if self.task == "classify":
            if self.q is None:
                raise ValueError("classification needs the class count q")
            return self.q
        return self.embed

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "RodConfig":
        return cls(**parse_kv(text, cls))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def coerce(raw: str, default, name: str = "?"):
    """Turn a ``key = value`` string into the type of ``default``."""
    s = raw.strip()
    if s.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        if s.lower() in ("true", "1", "yes"):
            return True
        if s.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(s)
    if isinstance(default, float):
        return float(s)
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_kv(text: str, cls=None) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    defaults = {f.name: f.default for f in fields(cls)} if cls is not None else {}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        if cls is not None and k not in defaults:
            raise ValueError(f"line {lineno}: unknown key {k!r}")
        out[k] = coerce(v, defaults.get(k), k)
    return out


# ---- parameters -----------------------------------------------------------

@dataclass
class GateParams:
    weights: list   # K+1 tensors of shape (d, 1)
    biases: list    # K+1 tensors of shape (1, 1)

    def tensors(self):
        return [*self.weights, *self.biases]


@dataclass
class EncoderParams:
    weight: Tensor
    bias: Tensor
    dropout: float = 0.0

    @property
    def hidden(self) -> int:
        return self.weight.shape[1]

    def tensors(self):
        return [self.weight, self.bias]


@dataclass
class StudentHead:
    weight: Tensor
    bias: Tensor

    def tensors(self):
        return [self.weight, self.bias]


@dataclass
class TeacherGate:
    """``weights[k]`` is ``(q, 1)`` for classify/cluster and unused (``None``) for link."""

    weights: list
    biases: list

    def tensors(self):
        return [w for w in self.weights if w is not None] + list(self.biases)


@dataclass
class RodModel:
    config: RodConfig
    gate: GateParams
    encoder: EncoderParams
    heads: list
    teacher: TeacherGate
    centroids: list = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        out = self.gate.tensors() + self.encoder.tensors()
        for h in self.heads:
            out += h.tensors()
        return out + self.teacher.tensors()

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for k, w in enumerate(self.gate.weights):
            yield f"gate.w.{k}", w
        for k, b in enumerate(self.gate.biases):
            yield f"gate.b.{k}", b
        yield "encoder.w", self.encoder.weight
        yield "encoder.b", self.encoder.bias
        for k, h in enumerate(self.heads):
            yield f"head.w.{k}", h.weight
            yield f"head.b.{k}", h.bias
        for k, w in enumerate(self.teacher.weights):
            if w is not None:
                yield f"teacher.w.{k}", w
        for k, b in enumerate(self.teacher.biases):
            yield f"teacher.b.{k}", b

    def state(self) -> dict[str, np.ndarray]:
        out = {name: t.value.copy() for name, t in self.named_parameters()}
        for k, c in enumerate(self.centroids):
            out[f"centroids.{k}"] = np.array(c, dtype=np.float64)
        return out

    def load_state(self, state: dict[str, np.ndarray]):
        for name, t in self.named_parameters():
            if state[name].shape != t.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {t.shape}")
            t.value = state[name].copy()
        self.centroids = [state[f"centroids.{k}"].copy()
                          for k in range(len(self.heads)) if f"centroids.{k}" in state]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: RodConfig, d: int, seed: int | None = None) -> RodModel:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    seed = config.seed if seed is None else seed
    rng = stream(seed, "init")
    K, h, out = config.K, config.hidden, config.out_dim
    gate = GateParams(
        [Tensor(_glorot(rng, d, 1), requires_grad=True) for _ in range(K + 1)],
        [Tensor(np.zeros((1, 1)), requires_grad=True) for _ in range(K + 1)])
    enc = EncoderParams(Tensor(_glorot(rng, d, h), requires_grad=True),
                        Tensor(np.zeros((1, h)), requires_grad=True), config.dropout)
    heads = [StudentHead(Tensor(_glorot(rng, h, out), requires_grad=True),
                         Tensor(np.zeros((1, out)), requires_grad=True)) for _ in range(K + 1)]
    if config.task == "link":
        teacher = TeacherGate([None] * (K + 1),
                              [Tensor(np.zeros((1, 1)), requires_grad=True) for _ in range(K + 1)])
    else:
        q = config.q
        if q is None:
            raise ValueError(f"{config.task} needs q (class or cluster count)")
        teacher = TeacherGate([Tensor(_glorot(rng, q, 1), requires_grad=True)
                               for _ in range(K + 1)],
                              [Tensor(np.zeros((1, 1)), requires_grad=True) for _ in range(K + 1)])
    return RodModel(config, gate, enc, heads, teacher)


# ---- forward pieces -------------------------------------------------------

def gated_combine(props: PropagationSet | Sequence[np.ndarray], gate: GateParams) -> Tensor:
    """``H = sum_k sigmoid(X_k w_k + b_k) * X_k`` with one scalar gate per node and hop."""
    mats = list(props)
    if len(mats) != len(gate.weights):
        raise ValueError(f"gate has {len(gate.weights)} hops, propagation has {len(mats)}")
    H = None
    for X, w, b in zip(mats, gate.weights, gate.biases):
        score = ad.sigmoid(ad.add(ad.matmul(X, w), b))
        term = ad.scale_rows(X, score)
        H = term if H is None else ad.add(H, term)
    return H


def encode(H, enc: EncoderParams, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    x = ad.dropout(H, enc.dropout, rng, training=training)
    return ad.relu(ad.add(ad.matmul(x, enc.weight), enc.bias))


def pair_probabilities(Z, pairs: np.ndarray) -> Tensor:
    """Bernoulli edge probabilities ``clamp((cos(z_i, z_j) + 1) / 2)`` for each pair row."""
    Zn = ad.normalize_rows(Z)
    cos = ad.sum_rows(ad.mul(ad.select_rows(Zn, pairs[:, 0]), ad.select_rows(Zn, pairs[:, 1])))
    return ad.clip(ad.mul(ad.add(cos, 1.0), 0.5), PROB_EPS, 1.0 - PROB_EPS)


def student_forward(shared, head: StudentHead, task: str, pairs: np.ndarray | None = None,
                    centroids: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Return ``(Z_k, prediction)`` for one student.

    The prediction is class probabilities (classify), pair probabilities over
    ``pairs`` (link) or the distance softmax against ``centroids`` (cluster).
    """
    Z = ad.add(ad.matmul(shared, head.weight), head.bias)
    if task == "classify":
        return Z, ad.softmax_rows(Z)
    if task == "link":
        if pairs is None:
            raise ValueError("link prediction needs the pairs to score")
        return Z, pair_probabilities(Z, pairs)
    if task == "cluster":
        if centroids is None:
            raise ValueError("clustering prediction requires current centroids")
        return Z, ad.softmax_rows(ad.mul(ad.euclidean_distances(Z, centroids), -1.0))
    raise ValueError(f"unknown task {task!r}")


def embedding_similarity(Z) -> Tensor:
    """Differentiable cosine-similarity matrix of the rows of ``Z``."""
    Zn = ad.normalize_rows(Z)
    return ad.matmul(Zn, ad.transpose(Zn))


def pair_similarity(Z, pairs: np.ndarray) -> Tensor:
    """Cosine similarity restricted to ``pairs`` (``m x 1``)."""
    Zn = ad.normalize_rows(Z)
    return ad.sum_rows(ad.mul(ad.select_rows(Zn, pairs[:, 0]), ad.select_rows(Zn, pairs[:, 1])))


def teacher_ensemble(preds: Sequence, tgate: TeacherGate, task: str) -> Tensor:
    """Gated ensemble of student predictions.

    Student predictions enter as constants, so gradients reach only the gate.
    """
    if len(preds) != len(tgate.biases):
        raise ValueError(f"teacher has {len(tgate.biases)} gates, got {len(preds)} students")
    consts = [p.value if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64) for p in preds]
    if task == "link":
        num, den = None, None
        for P, s in zip(consts, tgate.biases):
            g = ad.sigmoid(s)
            term = ad.mul(P, g)
            num = term if num is None else ad.add(num, term)
            den = g if den is None else ad.add(den, g)
        return ad.clip(ad.div(num, den), PROB_EPS, 1.0 - PROB_EPS)
    acc = None
    for P, v, c in zip(consts, tgate.weights, tgate.biases):
        g = ad.sigmoid(ad.add(ad.matmul(P, v), c))
        term = ad.scale_rows(P, g)
        acc = term if acc is None else ad.add(acc, term)
    return ad.div(acc, ad.sum_rows(acc))


# ---- checkpoint -----------------------------------------------------------

CKPT_MAGIC = b"RODCKPT\x00"
CKPT_VERSION = 1


def save_checkpoint(path, config: RodConfig, state: dict[str, np.ndarray]) -> None:
    """Binary layout (little-endian): magic, u32 version, u32 header length,
    UTF-8 ``key = value`` header, u32 matrix count, then per matrix
    u16 name length, name, u32 rows, u32 cols, rows*cols f64 values."""
    header = config.to_text().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(state)))
        for name, mat in state.items():
            mat = np.atleast_2d(np.asarray(mat, dtype="<f8"))
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", *mat.shape))
            fh.write(np.ascontiguousarray(mat).tobytes())


def load_checkpoint(path) -> tuple[RodConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    config = RodConfig.from_text(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        nbytes = rows * cols * 8
        state[name] = np.frombuffer(data[pos:pos + nbytes], dtype="<f8").reshape(rows, cols).copy()
        pos += nbytes
    return config, state


def model_from_state(config: RodConfig, state: dict[str, np.ndarray]) -> RodModel:
    d = state["encoder.w"].shape[0]
    model = init_params(config, d)
    model.load_state(state)
    return model
