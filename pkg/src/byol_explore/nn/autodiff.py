"""Reverse-mode differentiation over numpy arrays.

Every primitive in this module accepts either plain arrays or ``Var``
objects. With plain arrays it just computes the value, so the same network
code runs untaped during acting and taped during learning. A ``Var`` knows
the ``Tape`` it belongs to; the tape is a flat list of primitive
applications in creation order, which is already a topological order for
the backward sweep.

``stop_gradient`` returns the raw value, cutting the tape at that point.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.nn.tree import ParameterTree


class Var:
    __slots__ = ("value", "tape", "index")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: Tape, index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, index={self.index})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)


class Tape:
    """Records primitive applications for one backward sweep."""

    def __init__(self):
        self._nodes: list[tuple[tuple, Callable]] = []
        self._count = 0
        self._watched: dict[str, Var] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def _new(self, value: np.ndarray) -> Var:
        v = Var(value, self, self._count)
        self._count += 1
        return v

    def variable(self, value) -> Var:
        v = self._new(np.asarray(value, dtype=np.float64))
        self._nodes.append(((), None))
        return v

    def watch(self, params: Mapping[str, np.ndarray]) -> dict[str, Var]:
        """Register every entry of ``params`` as a differentiable leaf."""
        out = {}
        for name, value in params.items():
            if name in self._watched:
                raise UsageError(f"parameter {name!r} is already watched on this tape")
            v = self.variable(value)
            self._watched[name] = v
            out[name] = v
        return out

    def record(self, value: np.ndarray, inputs: tuple, vjp: Callable) -> Var:
        out = self._new(value)
        self._nodes.append((inputs, vjp))
        return out

    def gradients(self, loss: Var) -> dict[int, np.ndarray]:
        if not isinstance(loss, Var) or loss.tape is not self:
            raise UsageError("loss was not computed on this tape")
        if loss.value.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        sens: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
        for idx in range(loss.index, -1, -1):
            inputs, vjp = self._nodes[idx]
            if vjp is None or idx not in sens:
                continue
            g = sens.pop(idx)
            for inp, ct in zip(inputs, vjp(g)):
                if ct is None or not isinstance(inp, Var):
                    continue
                ct = _unbroadcast(ct, inp.value.shape)
                prev = sens.get(inp.index)
                sens[inp.index] = ct if prev is None else prev + ct
        return sens


def backward(tape: Tape, loss: Var) -> ParameterTree:
    """Gradient of a scalar loss w.r.t. every watched parameter.

    Parameters with no path to the loss (including those reachable only
    through ``stop_gradient``) get exact zeros.
    """
    sens = tape.gradients(loss)
    grads = {}
    for name, v in tape._watched.items():
        g = sens.get(v.index)
        grads[name] = np.zeros_like(v.value) if g is None else np.asarray(g, dtype=np.float64)
    return ParameterTree(grads)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else x


def stop_gradient(x):
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


# ---------------------------------------------------------------- elementwise


def add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a + b
    return tape.record(value_of(a) + value_of(b), (a, b), lambda g: (g, g))


def sub(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a - b
    return tape.record(value_of(a) - value_of(b), (a, b), lambda g: (g, -g))


def mul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a * b
    av, bv = value_of(a), value_of(b)
    return tape.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return a / b
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return tape.record(out, (a, b), lambda g: (g / bv, -g * out / bv))


def neg(a):
    if not isinstance(a, Var):
        return -a
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def square(a):
    if not isinstance(a, Var):
        return a * a
    av = a.value
    return a.tape.record(av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a):
    if not isinstance(a, Var):
        return np.sqrt(a)
    out = np.sqrt(a.value)

    def vjp(g):
        # subgradient 0 at the origin keeps masked zero vectors finite
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return a.tape.record(out, (a,), vjp)


def exp(a):
    if not isinstance(a, Var):
        return np.exp(a)
    out = np.exp(a.value)
    return a.tape.record(out, (a,), lambda g: (g * out,))


def log(a):
    if not isinstance(a, Var):
        return np.log(a)
    av = a.value
    return a.tape.record(np.log(av), (a,), lambda g: (g / av,))


def relu(a):
    if not isinstance(a, Var):
        return np.maximum(a, 0.0)
    mask = a.value > 0
    return a.tape.record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def tanh(a):
    if not isinstance(a, Var):
        return np.tanh(a)
    out = np.tanh(a.value)
    return a.tape.record(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 0.5 * (1 + tanh(x/2)) avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    if not isinstance(a, Var):
        return _sigmoid(a)
    out = _sigmoid(a.value)
    return a.tape.record(out, (a,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------- reductions


def sum(a, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    if not isinstance(a, Var):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.value.shape
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return a.tape.record(np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False):
    n = value_of(a).size if axis is None else int(np.prod([value_of(a).shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------- structure


def getitem(a, key):
    if not isinstance(a, Var):
        return a[key]
    shape = a.value.shape
    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (slice, int, np.integer)) or k is Ellipsis or k is None for k in parts)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return a.tape.record(a.value[key], (a,), vjp)


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.reshape(a, shape)
    old = a.value.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = -1):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    if tape is None:
        return np.concatenate(vals, axis=axis)
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return tape.record(np.concatenate(vals, axis=axis), tuple(xs), vjp)


def stack(xs: Sequence, axis: int = 0):
    tape = _tape_of(*xs)
    vals = [value_of(x) for x in xs]
    if tape is None:
        return np.stack(vals, axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return tape.record(np.stack(vals, axis=axis), tuple(xs), vjp)


# ---------------------------------------------------------------- layers


def linear(x, w, b=None):
    """``x @ w.T + b`` over the last axis of ``x``; ``w`` has shape (out, in)."""
    xv, wv = value_of(x), value_of(w)
    if xv.shape[-1] != wv.shape[1]:
        raise ConfigurationError(f"linear: input width {xv.shape[-1]} does not match weight {wv.shape}")
    out = xv @ wv.T
    if b is not None:
        out = out + value_of(b)
    tape = _tape_of(x, w, b)
    if tape is None:
        return out

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = xv.reshape(-1, xv.shape[-1])
        gx = (g @ wv) if isinstance(x, Var) else None
        gw = g2.T @ x2 if isinstance(w, Var) else None
        gb = g2.sum(axis=0) if isinstance(b, Var) else None
        return gx, gw, gb

    return tape.record(out, (x, w, b), vjp)


def log_softmax(a, axis: int = -1):
    av = value_of(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    if not isinstance(a, Var):
        return out
    probs = np.exp(out)
    return a.tape.record(out, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


def conv2d(x, w, b=None):
    """Valid, stride-1 2-D convolution.

    ``x``: (..., C, H, W); ``w``: (F, C, kh, kw); ``b``: (F,). Returns
    (..., F, H-kh+1, W-kw+1).
    """
    xv, wv = value_of(x), value_of(w)
    if xv.shape[-3] != wv.shape[1]:
        raise ConfigurationError(f"conv2d: input channels {xv.shape[-3]} do not match weight {wv.shape}")
    kh, kw = wv.shape[2], wv.shape[3]
    lead = xv.shape[:-3]
    x4 = xv.reshape((-1,) + xv.shape[-3:])
    windows = np.lib.stride_tricks.sliding_window_view(x4, (kh, kw), axis=(2, 3))
    # windows: (n, C, Ho, Wo, kh, kw)
    out = np.einsum("nchwij,fcij->nfhw", windows, wv, optimize=True)
    if b is not None:
        out = out + value_of(b)[None, :, None, None]
    Ho, Wo = out.shape[2], out.shape[3]
    result = out.reshape(lead + out.shape[1:])
    tape = _tape_of(x, w, b)
    if tape is None:
        return result

    def vjp(g):
        g4 = g.reshape((-1,) + g.shape[-3:])
        gw = np.einsum("nchwij,nfhw->fcij", windows, g4, optimize=True) if isinstance(w, Var) else None
        gb = g4.sum(axis=(0, 2, 3)) if isinstance(b, Var) else None
        gx = None
        if isinstance(x, Var):
            gx4 = np.zeros_like(x4)
            for i in range(kh):
                for j in range(kw):
                    gx4[:, :, i:i + Ho, j:j + Wo] += np.einsum("nfhw,fc->nchw", g4, wv[:, :, i, j])
            gx = gx4.reshape(xv.shape)
        return gx, gw, gb

    return tape.record(result, (x, w, b), vjp)
