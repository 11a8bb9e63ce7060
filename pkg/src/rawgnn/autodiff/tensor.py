"""Dense double-precision tensors with tape-based reverse-mode differentiation.

Operations are recorded only while a :class:`Tape` is active (``with Tape()
as tape:``) and at least one input requires a gradient. The active tape is
held in a context variable, so a recording never leaks across threads.
"""
from __future__ import annotations

import contextvars

import numpy as np
from scipy import sparse
from scipy.special import expit

_ACTIVE = contextvars.ContextVar("rawgnn_active_tape", default=None)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "tape", "name")
    # make ndarray <op> Tensor dispatch to the reflected Tensor method
    __array_ufunc__ = None

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.tape = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """One recording of operations, consumed by a single :meth:`backward`."""

    def __init__(self):
        self._nodes = []
        self._consumed = False
        self._token = None

    def __enter__(self):
        if self._consumed:
            raise TapeError("tape already consumed")
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self._nodes)

    def record(self, out, parents, backward_fn):
        self._nodes.append((out, parents, backward_fn))

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise TapeError("backward already called on this recording")
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        pending = {id(loss): (loss, np.ones_like(loss.values))}
        for out, parents, fn in reversed(self._nodes):
            entry = pending.pop(id(out), None)
            if entry is None:
                continue
            g = entry[1]
            out.grad = g
            for parent, pg in zip(parents, fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = pending.get(id(parent))
                pending[id(parent)] = (parent, pg if prev is None else prev[1] + pg)
        for leaf, g in pending.values():
            leaf.grad = g if leaf.grad is None else leaf.grad + g
        self._nodes = []


def backward(loss: Tensor) -> None:
    if loss.tape is None:
        raise TapeError("loss has no active recording (was it computed inside a Tape?)")
    loss.tape.backward(loss)


def _make(values, parents, backward_fn, op):
    if not np.isfinite(values).all():
        raise NonFiniteError(f"{op} produced a non-finite value")
    tape = _ACTIVE.get()
    out = Tensor(values)
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.tape = tape
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def back(g):
        return (
            _unbroadcast(g * b.values, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.values, b.shape) if b.requires_grad else None,
        )

    return _make(a.values * b.values, (a, b), back, "mul")


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make(-x.values, (x,), lambda g: (-g,), "neg")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = expit(x.values)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.values)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    d = np.where(x.values > 0, 1.0, slope)
    return _make(x.values * d, (x,), lambda g: (g * d,), "leaky_relu")


def elu(x, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.values > 0
    e = alpha * np.expm1(np.minimum(x.values, 0.0))
    y = np.where(pos, x.values, e)
    d = np.where(pos, 1.0, e + alpha)
    return _make(y, (x,), lambda g: (g * d,), "elu")


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.values)
    return _make(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if (x.values <= 0).any():
        raise NonFiniteError("log of a non-positive value")
    return _make(np.log(x.values), (x,), lambda g: (g / x.values,), "log")


def clamp_min(x, lo: float) -> Tensor:
    x = as_tensor(x)
    keep = x.values >= lo
    return _make(np.where(keep, x.values, lo), (x,), lambda g: (g * keep,), "clamp_min")


# ------------------------------------------------------------- reductions

def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.sum(x.values, axis=axis, keepdims=keepdims), (x,), back, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _make(np.mean(x.values, axis=axis, keepdims=keepdims), (x,), back, "mean")


def softmax(x) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    x = as_tensor(x)
    z = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _make(y, (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),), "softmax")


# ------------------------------------------------------------- linear algebra / shape

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul does not accept scalars")
    kb = b.shape[-2] if b.ndim > 1 else b.shape[0]
    if a.shape[-1] != kb:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.values, b.values)
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}: {exc}") from None

    def back(g):
        A = a.values[None, :] if a.ndim == 1 else a.values
        B = b.values[:, None] if b.ndim == 1 else b.values
        G = g
        if a.ndim == 1:
            G = np.expand_dims(G, -2)
        if b.ndim == 1:
            G = np.expand_dims(G, -1)
        ga = gb = None
        if a.requires_grad:
            ga = G @ np.swapaxes(B, -1, -2)
            ga = _unbroadcast(ga.squeeze(-2) if a.ndim == 1 else ga, a.shape)
        if b.requires_grad:
            gb = np.swapaxes(A, -1, -2) @ G
            gb = _unbroadcast(gb.squeeze(-1) if b.ndim == 1 else gb, b.shape)
        return ga, gb

    return _make(out, (a, b), back, "matmul")


def concat(xs, axis=-1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([x.values for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _make(out, tuple(xs), lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.values, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def gather_rows(m, index) -> Tensor:
    """Rows ``m[index]`` of a matrix (embedding lookup)."""
    m = as_tensor(m)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < -m.shape[0] or index.max() >= m.shape[0]):
        raise IndexError(f"row index out of range for {m.shape[0]} rows")

    def back(g):
        # scatter-add as a sparse (rows x len(index)) selector product
        flat = index.reshape(-1) % m.shape[0]
        sel = sparse.csr_matrix(
            (np.ones(len(flat)), (flat, np.arange(len(flat)))), shape=(m.shape[0], len(flat))
        )
        gm = sel @ g.reshape(len(flat), -1)
        return (np.asarray(gm).reshape(m.shape),)

    return _make(m.values[index], (m,), back, "gather_rows")


def dropout(x, rate: float, training: bool, rng) -> Tensor:
    """Inverted dropout. Identity (the same tensor) when ``rate == 0`` or not training."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0 or not training:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.values * keep, (x,), lambda g: (g * keep,), "dropout")
