"""Minimal reverse-mode automatic differentiation on numpy arrays.

Operations executed while a :class:`Tape` is active are recorded in
execution order together with a closure computing their vector-Jacobian
product.  ``Tape.backward`` walks the records in reverse, which is a valid
topological order because every record's inputs were produced earlier.

Outside a tape the same functions run as plain numpy (inference mode).
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

_DTYPE = contextvars.ContextVar("ndiff_dtype", default=np.float32)
_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("ndiff_tape", default=None)


def default_dtype():
    return _DTYPE.get()


@contextlib.contextmanager
def precision(dtype):
    """Use ``dtype`` for every tensor created inside the block (float64 for gradient checks)."""
    token = _DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _DTYPE.reset(token)


def set_default_dtype(dtype) -> None:
    _DTYPE.set(np.dtype(dtype).type)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f" or arr.dtype != default_dtype():
            arr = arr.astype(default_dtype())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, t):
        if isinstance(t, (int, np.integer)):
            return slice_time(self, int(t))
        raise TypeError("only integer time indexing is supported; use slice_time")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class ShapeError(ValueError):
    pass


class Tape:
    """Records differentiable operations executed inside ``with tape:``."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._token = None
        self._done = False

    def __enter__(self) -> "Tape":
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def reset(self) -> None:
        self.records.clear()
        self._done = False

    def backward(self, loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
        """Populate ``.grad`` of every leaf reachable from ``loss``.

        Leaves listed in ``params`` that ``loss`` does not depend on receive a
        zero gradient.  A tape can be consumed once; call ``reset`` to reuse.
        """
        if self._done:
            raise RuntimeError("backward already ran on this tape; call reset() first")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._done = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = set()
        leaves: dict[int, Tensor] = {}
        for out, parents, vjp in reversed(self.records):
            produced.add(id(out))
            g = grads.pop(id(out), None)
            if g is None:
                continue
            parent_grads = vjp(g)
            for p, pg in zip(parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                leaves[key] = p
        if id(loss) in grads and not self.records:
            leaves[id(loss)] = loss
        for key, t in leaves.items():
            if key in produced or key not in grads:
                continue
            g = grads[key].astype(t.data.dtype, copy=False)
            t.grad = g if t.grad is None else t.grad + g
        if params is not None:
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)


def _record(out_data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(out_data)
    tape = _TAPE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.records.append((out, tuple(parents), vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching rules; ``b`` is usually a 2-D weight."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        if a.ndim == 1:
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.outer(a.data, g) if b.ndim == 2 else a.data[:, None] * g[..., None, :]
        else:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


# --- nonlinearities -----------------------------------------------------


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _record(t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _record(np.where(pos, x.data, 0.0).astype(x.data.dtype), (x,), lambda g: (g * pos,))


def softmax(x) -> Tensor:
    """Softmax over the last dimension."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record(s, (x,), vjp)


def log(x) -> Tensor:
    x = as_tensor(x)
    return _record(np.log(x.data), (x,), lambda g: (g / x.data,))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; gradient is zero where clamping is active."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _record(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _record(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


# --- structure ----------------------------------------------------------


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along the feature (last) dimension by default."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat: empty input")
    nd = xs[0].ndim
    ax = axis % nd
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in xs]}")
    sizes = [x.shape[ax] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=ax)
    return _record(out, xs, lambda g: tuple(np.split(g, splits, axis=ax)))


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    """Stack equal-shaped tensors along a new leading (time) axis."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("stack: empty input")
    if any(x.shape != xs[0].shape for x in xs):
        raise ShapeError(f"stack: mismatched shapes {[t.shape for t in xs]}")
    out = np.stack([x.data for x in xs], axis=axis)
    return _record(out, xs, lambda g: tuple(np.moveaxis(g, axis, 0)))


def slice_time(x, t: int) -> Tensor:
    """Row ``t`` of the leading (time) axis."""
    x = as_tensor(x)
    if not -x.shape[0] <= t < x.shape[0]:
        raise ShapeError(f"slice_time: index {t} out of range for shape {x.shape}")

    def vjp(g):
        full = np.zeros_like(x.data)
        full[t] = g
        return (full,)

    return _record(x.data[t], (x,), vjp)


def reverse_time(x, lengths: Sequence[int] | None = None) -> Tensor:
    """Reverse a T x B x ... tensor along time, per batch column within its own length.

    Steps past a column's length stay where they are.
    """
    x = as_tensor(x)
    T, B = x.shape[0], x.shape[1]
    if lengths is None:
        lengths = [T] * B
    lengths = np.asarray(lengths, dtype=int)
    if lengths.shape != (B,) or np.any(lengths > T) or np.any(lengths < 0):
        raise ShapeError(f"reverse_time: bad lengths for shape {x.shape}")
    idx = np.tile(np.arange(T)[:, None], (1, B))
    for b, n in enumerate(lengths):
        idx[:n, b] = np.arange(n)[::-1]
    cols = np.arange(B)[None, :]
    out = x.data[idx, cols]

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (idx, np.broadcast_to(cols, idx.shape)), g)
        return (full,)

    return _record(out, (x,), vjp)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(np.asarray(out), (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _record(np.asarray(out), (x,), vjp)


def dropout(x, p: float, rng, train: bool = True) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1/(1-p)``; identity when not training.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    x = as_tensor(x)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1], got {p}")
    if not train or p == 0.0:
        return x
    if p == 1.0:
        keep = np.zeros_like(x.data)
    else:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return _record(x.data * keep, (x,), lambda g: (g * keep,))


# --- gradient checking --------------------------------------------------


def numerical_gradient(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` w.r.t. every entry of ``t``."""
    grad = np.zeros(t.shape, dtype=np.float64)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn().data)
        flat[i] = orig - h
        fm = float(fn().data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps near-zero gradients from dominating; below it the check
    is effectively absolute at scale ``floor``.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
              directional: bool = False, seed: int = 0) -> dict[str, float]:
    """Compare tape gradients of scalar ``fn()`` with central finite differences.

    Returns the relative error per parameter (keyed by name or position).
    With ``directional`` each tensor is checked along one random unit
    direction ``v`` (``<grad, v>`` against the finite-difference slope),
    which costs two evaluations per tensor instead of two per entry.
    Run under ``precision(np.float64)``.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss, params)
    rng = np.random.default_rng(seed)
    errors = {}
    for i, p in enumerate(params):
        key = p.name or str(i)
        if not directional:
            errors[key] = relative_error(p.grad, numerical_gradient(fn, p, h))
            continue
        v = rng.normal(size=p.shape)
        v /= np.linalg.norm(v) or 1.0
        orig = p.data.copy()
        p.data = orig + h * v
        fp = float(fn().data)
        p.data = orig - h * v
        fm = float(fn().data)
        p.data = orig
        errors[key] = relative_error(np.sum(p.grad * v), (fp - fm) / (2.0 * h))
    return errors
