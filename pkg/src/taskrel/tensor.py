"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records every operation executed while it is active (via a
``with`` block); :func:`backward` replays the records in reverse to accumulate
gradients. Outside of any tape, the same operations run as plain numpy
evaluations with zero bookkeeping, which is the inference path.

The operation set is exactly what the graph classifier needs: matrix products,
row softmax, elementwise primitives, reductions, and the ``scale_rows``
broadcast used to weight node embeddings by attention values.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class NumericError(ValueError):
    """An operation received or would produce non-finite values."""


class ContractError(RuntimeError):
    """An operation was invoked outside its stated preconditions."""


class Tensor:
    """A float64 array plus the metadata needed to participate in a tape.

    ``requires_grad`` marks trainable leaves; tensors produced by recorded
    operations carry a ``tape_id`` pointing at their record.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape_id", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None
        self._tape: "Tape | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape machinery

_tls = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Gradients:
    """Result of a backward pass; unused parameters read as zero."""

    def __init__(self, store: dict[Tensor, np.ndarray]):
        self._store = store

    def of(self, t: Tensor) -> np.ndarray:
        g = self._store.get(t)
        return g if g is not None else np.zeros_like(t.data)

    def __contains__(self, t: Tensor) -> bool:
        return t in self._store


class Tape:
    """Ordered record of operations for one forward pass (single-writer)."""

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        out.tape_id = len(self._records)
        out._tape = self
        self._records.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> Gradients:
        """Accumulate d(loss)/d(leaf) for every leaf reachable from ``loss``.

        Creation order is a topological order, so one reverse sweep visits
        each node exactly once; gradients add across fan-out.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        store: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._records):
            g = store.pop(out, None)
            if g is None:
                continue
            for t, piece in zip(inputs, backward_fn(g)):
                if piece is None:
                    continue
                prev = store.get(t)
                store[t] = piece if prev is None else prev + piece
        for t, g in store.items():
            if t.requires_grad:
                t.grad = g
        return Gradients(store)


def backward(loss: Tensor) -> Gradients:
    """Backward pass through the tape that recorded ``loss``."""
    if loss._tape is None:
        raise ContractError("loss is not attached to any tape")
    return loss._tape.backward(loss)


def _live(t: Tensor, tape: Tape) -> bool:
    return t.requires_grad or t._tape is tape


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(_live(t, tape) for t in inputs):
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# Primitive operations


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _emit(ad * bd, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g / bd, a.shape), _unbroadcast(-g * ad / (bd * bd), b.shape)

    return _emit(ad / bd, (a, b), bwd)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        return (g * c,)

    return _emit(a.data * c, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Strict 2-D matrix product, (m,k) @ (k,p) -> (m,p)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _emit(ad @ bd, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")

    def bwd(g):
        return (g.T,)

    return _emit(a.data.T.copy(), (a,), bwd)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = a.shape

    def bwd(g):
        return (g.reshape(old),)

    return _emit(a.data.reshape(shape), (a,), bwd)


def abs_(a: Tensor) -> Tensor:
    """Elementwise absolute value; the subgradient at 0 is 0."""
    sign = np.sign(a.data)

    def bwd(g):
        return (g * sign,)

    return _emit(np.abs(a.data), (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _emit(np.where(mask, a.data, 0.0), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    with np.errstate(over="ignore"):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        return (g * s * (1.0 - s),)

    return _emit(s, (a,), bwd)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log: input must be strictly positive")
    ad = a.data

    def bwd(g):
        return (g / ad,)

    return _emit(np.log(ad), (a,), bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient passes through the closed interval."""
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        return (g * mask,)

    return _emit(np.clip(a.data, lo, hi), (a,), bwd)


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    ashape = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, ashape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, ashape).copy(),)

    return _emit(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    ashape = a.shape

    def bwd(g):
        return (np.broadcast_to(g / n, ashape).copy(),)

    return _emit(np.asarray(a.data.mean()), (a,), bwd)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix, stabilized by per-row max subtraction."""
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows: expected a matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax_rows: input contains non-finite values")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - inner),)

    return _emit(y, (x,), bwd)


def scale_rows(a: Tensor, v: Tensor) -> Tensor:
    """Broadcast scalar-times-vector: out[i, j, :] = a[i, j] * v[j, :].

    ``a`` is (n, n) and ``v`` is (n, C); the result is (n, n, C).
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"scale_rows: weight matrix must be square, got {a.shape}")
    if v.ndim != 2 or v.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rows: rows of {v.shape} do not match weights {a.shape}")
    ad, vd = a.data, v.data

    def bwd(g):
        da = (g * vd[None, :, :]).sum(axis=2)
        dv = (g * ad[:, :, None]).sum(axis=0)
        return da, dv

    return _emit(ad[:, :, None] * vd[None, :, :], (a, v), bwd)


# ---------------------------------------------------------------------------
# Finite-difference verification


def check_gradients(f: Callable[[Sequence[Tensor]], Tensor],
                    params: Iterable[Tensor],
                    eps: float = 1e-5) -> float:
    """Compare tape gradients of ``f(params)`` against central differences.

    Returns the maximum relative error over every coordinate of every
    parameter, with denominator max(|analytic|, |numeric|, 1e-8). The caller
    asserts whatever threshold suits its needs.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    with Tape() as tape:
        loss = f(params)
    grads = tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = grads.of(p).reshape(-1)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params).item()
            flat[i] = orig - eps
            f_minus = f(params).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
