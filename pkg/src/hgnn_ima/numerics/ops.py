"""Differentiable primitives.

Every function takes :class:`Tensor` (or array-like constants) and returns a
new Tensor; gradients are defined through the vjp closure passed to
:func:`record`.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, record


def _val(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return record(av + bv, (a, b),
                  lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)), "add")


def sub(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return record(av - bv, (a, b),
                  lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)), "sub")


def mul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    return record(av * bv, (a, b),
                  lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)), "mul")


def div(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    out = av / bv
    return record(out, (a, b),
                  lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
                  "div")


def neg(a) -> Tensor:
    return record(-_val(a), (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    with np.errstate(over="ignore"):  # overflow is reported by the finiteness check
        out = np.exp(_val(a))
    return record(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    av = _val(a)
    if (av <= 0).any():
        raise ValueError("log of non-positive value")
    return record(np.log(av), (a,), lambda g: (g / av,), "log")


def tanh(a) -> Tensor:
    out = np.tanh(_val(a))
    return record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    av = _val(a)
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    e = np.exp(av[~pos])
    out[~pos] = e / (1.0 + e)
    return record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    av = _val(a)
    return record(np.abs(av), (a,), lambda g: (g * np.sign(av),), "abs")


def nonlinearity(x, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown nonlinearity {kind!r}")


# ---------------------------------------------------------------- reductions / shape

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    av = _val(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return record(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    av = _val(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    av = _val(a)
    return record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),), "reshape")


def getitem(a, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    parts = key if isinstance(key, tuple) else (key,)
    if any(isinstance(k, (list, np.ndarray)) for k in parts):
        raise TypeError("getitem supports basic slicing only; use take() for gathers")
    av = _val(a)
    out = np.asarray(av[key])

    def vjp(g):
        full = np.zeros_like(av)
        full[key] = g
        return (full,)

    return record(out.copy(), (a,), vjp, "getitem")


def stack(xs, axis: int = 0) -> Tensor:
    vals = [_val(x) for x in xs]
    out = np.stack(vals, axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return record(out, tuple(xs), vjp, "stack")


def concat(xs, axis: int = 0) -> Tensor:
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    cuts = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return record(out, tuple(xs), lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    return record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum; every operand index must survive in the other
    operand or the output so the vjp is again an einsum."""
    lhs, out_idx = subscripts.replace(" ", "").split("->")
    ia, ib = lhs.split(",")
    for own, other in ((ia, ib), (ib, ia)):
        if len(set(own)) != len(own):
            raise ValueError(f"repeated index in {own!r}")
        lost = set(own) - set(other) - set(out_idx)
        if lost:
            raise ValueError(f"index {sorted(lost)} summed within a single operand")
    av, bv = _val(a), _val(b)
    out = np.einsum(subscripts, av, bv, optimize=False)

    def vjp(g):
        return (np.einsum(f"{out_idx},{ib}->{ia}", g, bv),
                np.einsum(f"{out_idx},{ia}->{ib}", g, av))

    return record(out, (a, b), vjp, "einsum")


# ---------------------------------------------------------------- gather / scatter

class Index:
    """Integer row index with a cached scatter operator.

    ``scatter`` sums rows into ``size`` buckets through a sparse 0/1 matrix,
    which is both faster than ``np.add.at`` and reduces in a fixed order.
    """

    def __init__(self, idx, size: int):
        self.idx = np.asarray(idx, dtype=np.intp).reshape(-1)
        self.size = int(size)
        self._matrix = None
        self._starts = None
        if self.idx.size and (np.diff(self.idx) >= 0).all():
            self.segments, self._starts = np.unique(self.idx, return_index=True)

    def __len__(self) -> int:
        return self.idx.size

    @property
    def matrix(self):
        if self._matrix is None:
            from scipy.sparse import csr_matrix
            n = self.idx.size
            self._matrix = csr_matrix((np.ones(n), (self.idx, np.arange(n))), shape=(self.size, n))
        return self._matrix

    def scatter(self, vals: np.ndarray) -> np.ndarray:
        if self.idx.size == 0:
            return np.zeros((self.size,) + vals.shape[1:])
        flat = vals.reshape(self.idx.size, -1)
        return np.asarray(self.matrix @ flat).reshape((self.size,) + vals.shape[1:])

    def segment_max(self, vals: np.ndarray) -> np.ndarray:
        out = np.full((self.size,) + vals.shape[1:], -np.inf)
        if self._starts is not None:
            out[self.segments] = np.maximum.reduceat(vals, self._starts, axis=0)
        elif self.idx.size:
            np.maximum.at(out, self.idx, vals)
        return out


def as_index(idx, size: int) -> Index:
    return idx if isinstance(idx, Index) else Index(idx, size)


def take(a, idx) -> Tensor:
    """Rows ``a[idx]`` along axis 0 (repeats allowed)."""
    av = _val(a)
    index = as_index(idx, av.shape[0])
    return record(av[index.idx], (a,), lambda g: (index.scatter(g),), "take")


def segment_sum(a, segments, num_segments: int) -> Tensor:
    """``out[s] = sum of a[r] over rows r with segments[r] == s``."""
    av = _val(a)
    index = as_index(segments, num_segments)
    return record(index.scatter(av), (a,), lambda g: (g[index.idx],), "segment_sum")


def head_matmul(x, w) -> Tensor:
    """Per-head product: x [n, H, d] with w [H, d, e] -> [n, H, e]."""
    xv, wv = _val(x), _val(w)
    xt = xv.transpose(1, 0, 2)
    out = np.matmul(xt, wv).transpose(1, 0, 2)

    def vjp(g):
        gt = g.transpose(1, 0, 2)
        return (np.matmul(gt, wv.transpose(0, 2, 1)).transpose(1, 0, 2),
                np.matmul(xt.transpose(0, 2, 1), gt))

    return record(np.ascontiguousarray(out), (x, w), vjp, "head_matmul")


# ---------------------------------------------------------------- softmax family

def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Max-shifted softmax along ``axis``; masked-out entries get exactly 0."""
    av = _val(a)
    if mask is None:
        shifted = av - av.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), av.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax: every entry masked along the reduction axis")
        m = np.where(mask, av, -np.inf).max(axis=axis, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, av - m, 0.0)), 0.0)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (a,), vjp, "softmax")


def softmax_stable(scores, mask=None) -> Tensor:
    return softmax(as_tensor(scores) if not isinstance(scores, Tensor) else scores, axis=-1, mask=mask)


def log_softmax(a, axis: int = -1) -> Tensor:
    av = _val(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return record(out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def segment_softmax(a, segments, num_segments: int) -> Tensor:
    """Softmax over the rows sharing a segment id (axis 0); trailing axes
    are independent.  Empty segments are simply absent."""
    av = _val(a)
    index = as_index(segments, num_segments)
    seg = index.idx
    e = np.exp(av - index.segment_max(av)[seg])
    out = e / index.scatter(e)[seg]

    def vjp(g):
        return (out * (g - index.scatter(g * out)[seg]),)

    return record(out, (a,), vjp, "segment_softmax")


# ---------------------------------------------------------------- regularisation

def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)
