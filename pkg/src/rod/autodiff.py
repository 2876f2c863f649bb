"""A small reverse-mode autodiff engine over 2-D numpy arrays, plus Adam.

Every op returns a new :class:`Tensor` that remembers its inputs and a
closure mapping the output gradient to input gradients. :func:`backward`
walks the record in reverse topological order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

LOG_FLOOR = 1e-12
DIST_FLOOR = 1e-24


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.array(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(-1, 1)
        self.value = v
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True).reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# ---- arithmetic -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    ra, rb = a.requires_grad, b.requires_grad

    def back(g):
        return (g @ bv.T if ra else None, av.T @ g if rb else None)

    return _make(av @ bv, (a, b), back, "matmul")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    ra, rb = a.requires_grad, b.requires_grad

    def back(g):
        return (_unbroadcast(g * bv, av.shape) if ra else None,
                _unbroadcast(g * av, bv.shape) if rb else None)

    return _make(av * bv, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / bv, av.shape),
                            _unbroadcast(-g * out / bv, bv.shape)), "div")


def scale_rows(a, s) -> Tensor:
    """Multiply row ``i`` of ``a`` by the scalar ``s[i]`` (``s`` is ``n x 1``)."""
    a, s = as_tensor(a), as_tensor(s)
    if s.shape != (a.shape[0], 1):
        raise ValueError(f"scale_rows: expected scales of shape ({a.shape[0]}, 1), got {s.shape}")
    return mul(a, s)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


# ---- elementwise ----------------------------------------------------------

def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.value)
    return _make(y, (a,), lambda g: (g * y,), "exp")


def log(a, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log of ``max(a, floor)``; gradient is zero below the floor."""
    a = as_tensor(a)
    above = a.value >= floor
    x = np.where(above, a.value, floor)
    return _make(np.log(x), (a,), lambda g: (np.where(above, g / x, 0.0),), "log")


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _make(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,), "clip")


def squared_difference(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "squared_difference")
    d = a.value - b.value
    sa, sb = a.shape, b.shape
    return _make(d * d, (a, b),
                 lambda g: (_unbroadcast(2 * g * d, sa), -_unbroadcast(2 * g * d, sb)),
                 "squared_difference")


def dropout(a, rate: float, rng: np.random.Generator | None = None, training: bool = True) -> Tensor:
    """Inverted dropout. Identity when not training or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.value * mask, (a,), lambda g: (g * mask,), "dropout")


# ---- reductions and row ops -----------------------------------------------

def sum(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape
    return _make(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    shape, size = a.shape, a.value.size
    return _make(np.array([[a.value.mean()]]), (a,),
                 lambda g: (np.full(shape, g[0, 0] / size),), "mean")


def sum_rows(a) -> Tensor:
    """Row sums as an ``n x 1`` column."""
    a = as_tensor(a)
    cols = a.shape[1]
    return _make(a.value.sum(axis=1, keepdims=True), (a,),
                 lambda g: (np.repeat(g, cols, axis=1),), "sum_rows")


def frobenius_norm(a) -> Tensor:
    """``||a||_F``; the (sub)gradient at zero is taken to be zero."""
    a = as_tensor(a)
    x = a.value
    nrm = float(np.sqrt(np.sum(x * x)))
    scale = 1.0 / nrm if nrm > 0 else 0.0
    return _make(np.array([[nrm]]), (a,), lambda g: (g[0, 0] * scale * x,), "frobenius_norm")


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _make(y, (a,), back, "softmax_rows")


def normalize_rows(a) -> Tensor:
    """L2-normalize each row; all-zero rows stay zero."""
    a = as_tensor(a)
    x = a.value
    nrm = np.sqrt((x * x).sum(axis=1, keepdims=True))
    safe = np.where(nrm > 0, nrm, 1.0)
    y = np.where(nrm > 0, x / safe, 0.0)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (np.where(nrm > 0, (g - y * dot) / safe, 0.0),)

    return _make(y, (a,), back, "normalize_rows")


def select_rows(a, index) -> Tensor:
    """Stack ``a[index[0]], a[index[1]], ...`` into a new matrix."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise IndexError(f"select_rows: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def back(g):
        scatter = sp.csr_matrix((np.ones(idx.size), (idx % shape[0], np.arange(idx.size))),
                                shape=(shape[0], idx.size))
        return (np.asarray(scatter @ g),)

    return _make(a.value[idx], (a,), back, "select_rows")


concat_rows_select = select_rows


def select_entries(a, rows, cols) -> Tensor:
    """Gather ``a[rows[t], cols[t]]`` into an ``m x 1`` column."""
    a = as_tensor(a)
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    shape = a.shape

    def back(g):
        flat = np.ravel_multi_index((r % shape[0], c % shape[1]), shape)
        return (np.bincount(flat, weights=g[:, 0], minlength=shape[0] * shape[1]).reshape(shape),)

    return _make(a.value[r, c].reshape(-1, 1), (a,), back, "select_entries")


def euclidean_distances(z, c) -> Tensor:
    """``D[i, j] = ||z_i - c_j||_2`` for rows of ``z`` (n x e) and ``c`` (q x e)."""
    z, c = as_tensor(z), as_tensor(c)
    if z.shape[1] != c.shape[1]:
        raise ValueError(f"euclidean_distances: dims {z.shape} vs {c.shape}")
    diff = z.value[:, None, :] - c.value[None, :, :]
    sq = (diff * diff).sum(axis=2)
    live = sq > DIST_FLOOR
    # coincident points sit at distance exactly 0 with a zero subgradient
    d = np.where(live, np.sqrt(np.where(live, sq, 1.0)), 0.0)

    def back(g):
        w = np.where(live, g / np.where(live, d, 1.0), 0.0)
        gz = (w[:, :, None] * diff).sum(axis=1)
        gc = -(w[:, :, None] * diff).sum(axis=0)
        return gz, gc

    return _make(d, (z, c), back, "euclidean_distances")


# ---- backward pass --------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on.

    All gradients in the record are reset to zero first, so calling this once
    per step on a freshly built loss never carries state between steps.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        # leaves start at zero; intermediates are filled on first contribution
        node.grad = np.zeros_like(node.value) if node._backward is None else None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad += g


def grad_check(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> float:
    """Max componentwise relative error between autodiff and central differences."""
    x = np.array(x, dtype=np.float64)
    t = Tensor(x, requires_grad=True)
    backward(f(t))
    analytic = t.grad.copy()
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        hi = f(Tensor(x)).item()
        flat[idx] = orig - eps
        lo = f(Tensor(x)).item()
        flat[idx] = orig
        numeric.reshape(-1)[idx] = (hi - lo) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0


# ---- Adam -----------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. ``weight_decay`` is added to the gradient (L2)."""
    if len(params) != len(grads):
        raise ValueError("adam_step: params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or state.m[i].shape != p.shape:
            raise ValueError(f"adam_step: shape mismatch for parameter {i}")
        if state.weight_decay:
            g = g + state.weight_decay * p
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out, state


class Adam:
    """Adam over a list of leaf tensors, updated in place from their ``.grad``."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                               weight_decay=weight_decay)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        new, self.state = adam_step([p.value for p in self.params], grads, self.state)
        for p, v in zip(self.params, new):
            p.value = v
