"""Dense float64 tensors recorded on a reverse-mode tape.

A :class:`Tape` is activated with ``with Tape() as tape:``; every primitive
evaluated while it is active and touching a tensor with ``requires_grad``
appends one record.  :func:`backward` walks the records in exact reverse
order and accumulates vector-Jacobian products.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a public operation produces NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)


def _not_scalar(t: Tensor) -> float:
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive evaluations.

    Each record is ``(output, inputs, vjp)``.  Tapes nest; only the innermost
    active tape records.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], VJP]] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def clear(self) -> None:
        self.records.clear()


def record(out_data: np.ndarray, inputs: Iterable, vjp: VJP, name: str = "") -> Tensor:
    """Wrap ``out_data`` and record it on the active tape when needed."""
    inputs = tuple(inputs)
    tape = Tape.current()
    needs = tape is not None and any(isinstance(x, Tensor) and x.requires_grad for x in inputs)
    try:
        out = Tensor(out_data, requires_grad=needs)
    except NonFiniteError as exc:
        raise NonFiniteError(f"{name or 'operation'} produced non-finite values") from exc
    if needs:
        tape.records.append((out, inputs, vjp))
    return out


class Gradients:
    """Gradient map returned by :func:`backward`.

    Lookup by tensor; tensors that did not influence the loss map to zeros.
    """

    def __init__(self, grads: dict[int, np.ndarray], keep: dict[int, Tensor]):
        self._grads = grads
        self._keep = keep

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        if g is None or self._keep.get(id(t)) is not t:
            return np.zeros_like(t.data)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads and self._keep.get(id(t)) is t


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse sweep of ``tape`` seeded at scalar ``loss``; clears the tape."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    keep: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, vjp in reversed(tape.records):
        g = grads.get(id(out)) if out is loss else grads.pop(id(out), None)
        if g is None:
            continue
        for x, gx in zip(inputs, vjp(g)):
            if gx is None or not isinstance(x, Tensor) or not x.requires_grad:
                continue
            key = id(x)
            if key in grads:
                grads[key] = grads[key] + gx
            else:
                grads[key] = gx
                keep[key] = x
    tape.clear()
    return Gradients(grads, keep)
