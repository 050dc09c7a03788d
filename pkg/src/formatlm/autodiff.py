"""Dense tensors with reverse-mode automatic differentiation.

A deliberately small engine: numpy arrays for storage, a Tape that records
every differentiable op in creation order, and a backward sweep that walks
the recording in reverse (a valid reverse topological order since inputs are
always recorded before the ops consuming them). Compute is float32 by
default; float64 inputs propagate through unchanged, which is the reference
path used by the finite-difference oracles in the test suite.

Every public op validates its output and raises NumericsError on NaN/Inf,
naming the offending op.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class NumericsError(Exception):
    """Raised when an op produces non-finite values or gets bad shapes."""


_tls = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_tls, "tape", None)


class Tensor:
    """A dense float array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_tracked", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._tracked = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def grad_or_zero(self) -> np.ndarray:
        """Gradient accumulated by the last backward pass; zeros if this
        leaf never participated in the loss."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class Tape:
    """Records differentiable ops; single-owner, not shared across threads.

    Use as a context manager around the forward pass, then call backward()
    on the scalar loss. Each recorded node is visited exactly once during
    the sweep.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple, Callable]] = []
        self.visited = 0

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active in this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _tls.tape = None

    def record(self, out: Tensor, inputs: tuple, backward: Callable) -> None:
        out._tracked = True
        self._ops.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise NumericsError("backward: loss must be a scalar")
        self.visited = 0
        loss.grad = np.ones_like(loss.data)
        for out, inputs, bwd in reversed(self._ops):
            if out.grad is None:
                continue  # not on any path to the loss
            self.visited += 1
            grads = bwd(out.grad)
            for x, g in zip(inputs, grads):
                if g is None or not isinstance(x, Tensor) or not x._tracked:
                    continue
                x.grad = g if x.grad is None else x.grad + g


def _record(out: Tensor, inputs: tuple, backward: Callable) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(
        isinstance(x, Tensor) and x._tracked for x in inputs
    ):
        tape.record(out, inputs, backward)
    return out


def _finite(op: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NumericsError(f"{op}: produced non-finite values")


def _val(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the pre-broadcast shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    out = Tensor(av + bv)
    _finite("add", out.data)

    def backward(g):
        ga = _unbroadcast(g, av.shape) if isinstance(a, Tensor) else None
        gb = _unbroadcast(g, bv.shape) if isinstance(b, Tensor) else None
        return ga, gb

    return _record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    out = Tensor(av * bv)
    _finite("mul", out.data)

    def backward(g):
        ga = _unbroadcast(g * bv, av.shape) if isinstance(a, Tensor) else None
        gb = _unbroadcast(g * av, bv.shape) if isinstance(b, Tensor) else None
        return ga, gb

    return _record(out, (a, b), backward)


def scale(a, k: float) -> Tensor:
    av = _val(a)
    out = Tensor(av * k)
    _finite("scale", out.data)
    return _record(out, (a,), lambda g: (g * k,))


def matmul(a, b) -> Tensor:
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise NumericsError("matmul: operands must have >= 2 dimensions")
    if av.shape[-1] != bv.shape[-2]:
        raise NumericsError(
            f"matmul: inner dims differ ({av.shape} @ {bv.shape})"
        )
    out = Tensor(np.matmul(av, bv))
    _finite("matmul", out.data)

    def backward(g):
        ga = gb = None
        if isinstance(a, Tensor):
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape)
        if isinstance(b, Tensor):
            gb = _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape)
        return ga, gb

    return _record(out, (a, b), backward)


def relu(x) -> Tensor:
    xv = _val(x)
    out = Tensor(np.maximum(xv, 0))
    _finite("relu", out.data)
    return _record(out, (x,), lambda g: (g * (xv > 0),))


def reshape(x, shape: Sequence[int]) -> Tensor:
    xv = _val(x)
    out = Tensor(xv.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(xv.shape),))


def transpose(x, axes: Sequence[int]) -> Tensor:
    xv = _val(x)
    out = Tensor(np.transpose(xv, axes))
    inv = np.argsort(axes)
    return _record(out, (x,), lambda g: (np.transpose(g, inv),))


def sum_all(x) -> Tensor:
    xv = _val(x)
    out = Tensor(xv.sum())
    _finite("sum_all", out.data)
    return _record(out, (x,), lambda g: (np.broadcast_to(g, xv.shape).copy(),))


def softmax(x, axis: int = -1) -> Tensor:
    xv = _val(x)
    m = xv.max(axis=axis, keepdims=True)
    e = np.exp(xv - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)
    _finite("softmax", out.data)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply per-feature gain and bias."""
    if eps <= 0:
        raise NumericsError("layer_norm: eps must be > 0")
    xv, gv, bv = _val(x), _val(gain), _val(bias)
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = Tensor(xn * gv + bv)
    _finite("layer_norm", out.data)

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xn).sum(axis=lead) if isinstance(gain, Tensor) else None
        gbias = g.sum(axis=lead) if isinstance(bias, Tensor) else None
        gx = None
        if isinstance(x, Tensor):
            dxn = g * gv
            gx = inv * (
                dxn
                - dxn.mean(axis=-1, keepdims=True)
                - xn * (dxn * xn).mean(axis=-1, keepdims=True)
            )
        return gx, ggain, gbias

    return _record(out, (x, gain, bias), backward)


def embed(table, ids) -> Tensor:
    """Gather rows of an embedding table; scatter-add on backward."""
    ids = np.asarray(ids)
    tv = _val(table)
    if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
        raise NumericsError(
            f"embed: id out of range [0, {tv.shape[0]}) "
            f"(got min={ids.min()}, max={ids.max()})"
        )
    out = Tensor(tv[ids])
    _finite("embed", out.data)

    def backward(g):
        gt = np.zeros_like(tv)
        np.add.at(gt, ids, g)
        return (gt,)

    return _record(out, (table,), backward)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate == 0."""
    if not 0 <= rate < 1:
        raise NumericsError("dropout: rate must be in [0, 1)")
    if rate == 0:
        return x if isinstance(x, Tensor) else Tensor(_val(x))
    xv = _val(x)
    mask = (rng.random(xv.shape) >= rate).astype(xv.dtype) / (1.0 - rate)
    out = Tensor(xv * mask)
    return _record(out, (x,), lambda g: (g * mask,))


def cross_entropy(logits, targets, ignore_id: int | None = None) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id.

    Log-sum-exp stabilized. Raises if every position is ignored.
    """
    lv = _val(logits)
    ids = np.asarray(targets).reshape(-1)
    flat = lv.reshape(-1, lv.shape[-1])
    if flat.shape[0] != ids.shape[0]:
        raise NumericsError(
            f"cross_entropy: {flat.shape[0]} rows vs {ids.shape[0]} targets"
        )
    valid = np.ones_like(ids, dtype=bool)
    if ignore_id is not None:
        valid = ids != ignore_id
    n = int(valid.sum())
    if n == 0:
        raise NumericsError("cross_entropy: no valid (non-ignored) targets")
    safe_ids = np.where(valid, ids, 0)
    m = flat.max(axis=-1, keepdims=True)
    z = flat - m
    lse = np.log(np.exp(z).sum(axis=-1)) + m[:, 0]
    picked = flat[np.arange(flat.shape[0]), safe_ids]
    nll = (lse - picked)[valid]
    out = Tensor(np.asarray(nll.sum() / n, dtype=lv.dtype))
    _finite("cross_entropy", out.data)

    def backward(g):
        p = np.exp(z - np.log(np.exp(z).sum(axis=-1, keepdims=True)))
        p[np.arange(flat.shape[0]), safe_ids] -= 1.0
        p[~valid] = 0.0
        gl = (g * p / n).reshape(lv.shape).astype(lv.dtype)
        return (gl,)

    return _record(out, (logits,), backward)
