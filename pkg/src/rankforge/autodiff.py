"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Values are recorded on a :class:`Tape` while it is active::

    with Tape() as tape:
        x = tape.watch(np.array([1.0, 2.0, 3.0]))
        loss = ad.sum(x * x)
    (dx,) = tape.gradient(loss, [x])

Operations on tensors that do not require gradients (or that run outside any
tape) just compute values, so the same code path serves plain evaluation.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "as_tensor",
    "value_of",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "exp",
    "log",
    "sigmoid",
    "relu",
    "abs",
    "sum",
    "mean",
    "l2_norm",
    "squared_frobenius",
    "masked_select",
    "outer_sub",
    "outer_add",
    "rev_cumsum",
    "pairwise_sqdist",
    "spherical_project",
    "adam_step",
    "sgd_step",
    "AdamState",
]

_ids = itertools.count()
_active: list["Tape"] = []


class Tensor:
    """A dense array value, optionally tracked on the active tape."""

    __slots__ = ("value", "requires_grad", "id")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False):
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite value in tensor")
        self.value = arr
        self.requires_grad = requires_grad
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.value)

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return _getitem(self, key)


@dataclass
class _Record:
    out: int
    parents: list[tuple[int, Callable[[np.ndarray], np.ndarray]]]


@dataclass
class Tape:
    """Append-only record of differentiable operations."""

    records: list[_Record] = field(default_factory=list)

    def __enter__(self) -> Tape:
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def watch(self, value) -> Tensor:
        """Create a leaf tensor whose gradient will be tracked."""
        return Tensor(value, requires_grad=True)

    def gradient(self, loss: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Backpropagate ``loss`` and return d(loss)/d(source) for each source.

        Fan-out contributions are summed; sources that do not influence the
        loss get a zero array of their own shape.
        """
        if loss.value.size != 1:
            raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        for rec in reversed(self.records):
            g = grads.pop(rec.out, None)
            if g is None:
                continue
            for pid, vjp in rec.parents:
                contrib = vjp(g)
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib
        return [
            np.array(grads[s.id], dtype=np.float64) if s.id in grads else np.zeros_like(s.value)
            for s in sources
        ]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _make(value: np.ndarray, inputs: Iterable[tuple[Tensor, Callable]]) -> Tensor:
    tracked = [(t, fn) for t, fn in inputs if t.requires_grad]
    if not tracked or not _active:
        return Tensor(value)
    out = Tensor(value, requires_grad=True)
    _active[-1].records.append(_Record(out.id, [(t.id, fn) for t, fn in tracked]))
    return out


# --- elementwise arithmetic -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value + b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))],
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.value - b.value,
        [(a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: -_unbroadcast(g, b.shape))],
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, [(a, lambda g: -g)])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _make(
        av * bv,
        [(a, lambda g: _unbroadcast(g * bv, a.shape)), (b, lambda g: _unbroadcast(g * av, b.shape))],
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if np.any(bv == 0):
        raise ZeroDivisionError("zero denominator; mask before dividing")
    out = av / bv
    return _make(
        out,
        [
            (a, lambda g: _unbroadcast(g / bv, a.shape)),
            (b, lambda g: _unbroadcast(-g * out / bv, b.shape)),
        ],
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _make(out, [(a, lambda g: g * out)])


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise ValueError("log of nonpositive value")
    return _make(np.log(a.value), [(a, lambda g: g / a.value)])


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _make(out, [(a, lambda g: g * out * (1.0 - out))])


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)])


def abs(a) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    s = np.sign(a.value)
    return _make(np.abs(a.value), [(a, lambda g: g * s)])


# --- linear algebra and shape ops -------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    if bv.ndim == 1:
        return _make(av @ bv, [(a, lambda g: np.outer(g, bv)), (b, lambda g: av.T @ g)])
    return _make(av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)])


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T.copy(), [(a, lambda g: g.T)])


def _getitem(a: Tensor, key) -> Tensor:
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return full

    return _make(np.array(a.value[key]), [(a, vjp)])


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def slicer(i):
        def vjp(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(bounds[i], bounds[i + 1])
            return g[tuple(idx)]

        return vjp

    return _make(np.concatenate([t.value for t in ts], axis=axis), [(t, slicer(i)) for i, t in enumerate(ts)])


# --- reductions ---------------------------------------------------------------


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return _make(np.sum(a.value, axis=axis), [(a, vjp)])


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return sum(a, axis=axis) * (1.0 / count)


def l2_norm(a) -> Tensor:
    a = as_tensor(a)
    nrm = float(np.linalg.norm(a.value))
    if nrm == 0.0:
        return _make(np.array(0.0), [(a, lambda g: np.zeros(a.shape))])
    return _make(np.array(nrm), [(a, lambda g: g * a.value / nrm)])


def squared_frobenius(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.array(np.sum(a.value**2)), [(a, lambda g: 2.0 * g * a.value)])


def masked_select(a, mask: np.ndarray) -> Tensor:
    """Entries of ``a`` where ``mask`` is true, as a flat vector."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[mask] = g
        return full

    return _make(a.value[mask], [(a, vjp)])


# --- structured ops used by the ranking pipeline ----------------------------


def outer_sub(r) -> Tensor:
    """Matrix with entries r_i - r_j."""
    r = as_tensor(r)
    v = r.value
    return _make(v[:, None] - v[None, :], [(r, lambda g: g.sum(axis=1) - g.sum(axis=0))])


def outer_add(r) -> Tensor:
    """Matrix with entries r_i + r_j."""
    r = as_tensor(r)
    v = r.value
    return _make(v[:, None] + v[None, :], [(r, lambda g: g.sum(axis=1) + g.sum(axis=0))])


def rev_cumsum(a, axis: int = 0) -> Tensor:
    """Suffix sums along ``axis``: out[i] = sum_{k >= i} a[k]."""
    a = as_tensor(a)

    def rcs(x):
        return np.flip(np.cumsum(np.flip(x, axis=axis), axis=axis), axis=axis)

    # adjoint of a suffix sum is a prefix sum
    return _make(rcs(a.value), [(a, lambda g: np.cumsum(g, axis=axis))])


def pairwise_sqdist(z) -> Tensor:
    """n x n matrix of squared Euclidean distances between rows of ``z``.

    The diagonal is exactly zero and round-off negatives are clipped.
    """
    z = as_tensor(z)
    zv = z.value
    sq = np.sum(zv * zv, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * zv @ zv.T
    np.fill_diagonal(d, 0.0)
    d = np.maximum(d, 0.0)

    def vjp(g):
        gs = g + g.T
        np.fill_diagonal(gs, 0.0)
        # d/dz_i sum_j g_ij |z_i - z_j|^2 symmetrised
        return 2.0 * (gs.sum(axis=1)[:, None] * zv - gs @ zv)

    return _make(d, [(z, vjp)])


def spherical_project(x) -> Tensor:
    """x / ||x||, or e_1 when x is the zero vector (zero gradient there)."""
    x = as_tensor(x)
    v = x.value
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0:
        if x.requires_grad and _active:
            warnings.warn("spherical projection of the zero vector; gradient set to zero", RuntimeWarning)
        e1 = np.zeros_like(v)
        e1[0] = 1.0
        return _make(e1, [(x, lambda g: np.zeros_like(v))])
    u = v / nrm
    return _make(u, [(x, lambda g: (g - u * np.dot(u, g)) / nrm)])


# --- optimizers ---------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _check_lr(lr: float) -> None:
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
    frozen: Iterable[str] = (),
) -> dict[str, np.ndarray]:
    """Plain SGD; weight decay enters as an l2 term added to the gradient."""
    _check_lr(lr)
    frozen = set(frozen)
    return {
        k: p if k in frozen else p - lr * (grads[k] + weight_decay * p)
        for k, p in params.items()
    }


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    frozen: Iterable[str] = (),
) -> tuple[dict[str, np.ndarray], AdamState]:
    _check_lr(lr)
    frozen = set(frozen)
    b1, b2 = betas
    t = state.step + 1
    m, v, out = dict(state.m), dict(state.v), {}
    for k, p in params.items():
        if k in frozen:
            out[k] = p
            continue
        g = grads[k] + weight_decay * p
        m[k] = b1 * m.get(k, np.zeros_like(p)) + (1 - b1) * g
        v[k] = b2 * v.get(k, np.zeros_like(p)) + (1 - b2) * g * g
        mhat = m[k] / (1 - b1**t)
        vhat = v[k] / (1 - b2**t)
        out[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
    return out, AdamState(t, m, v)
