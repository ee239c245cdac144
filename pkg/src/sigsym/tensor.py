"""Dense numeric kernel: tensors, a reverse-mode gradient tape, and Adam.

Values live in numpy arrays, float32 by default. Every differentiable
operation takes an optional ``Tape``; when one is supplied the op records
a vector-Jacobian closure so ``Tape.backward`` can accumulate gradients
by replaying the record in reverse. Passing ``dtype=np.float64`` to the
constructors gives the double-precision mode used for gradient checking;
training always runs in single precision.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, DimensionError, NumericError

DEFAULT_DTYPE = np.float32

ACTIVATIONS = ("linear", "rectifier", "softplus")


class Tensor:
    """A dense array with an optional accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def rows(self):
        if self.data.ndim != 2:
            raise DimensionError(f"rows is defined for matrices, got ndim={self.data.ndim}")
        return self.data.shape[0]

    @property
    def cols(self):
        if self.data.ndim != 2:
            raise DimensionError(f"cols is defined for matrices, got ndim={self.data.ndim}")
        return self.data.shape[1]

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


def as_tensor(value, dtype=None):
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


class Tape:
    """Ordered record of differentiable ops for one forward pass.

    A tape has a single owner: it must not be shared across concurrently
    running training steps. ``backward`` walks the record in reverse,
    which is a valid topological order because ops append in execution
    order.
    """

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def record(self, out, inputs, vjp):
        self._nodes.append((out, inputs, vjp))

    def backward(self, loss, params=()):
        """Accumulate d(loss)/d(x) into ``x.grad`` for tracked tensors.

        ``loss`` must be scalar. Every tensor in ``params`` is guaranteed
        a gradient afterwards; parameters the loss never touched receive
        exact zeros.
        """
        if loss.data.shape != ():
            raise ContractError(f"backward target must be scalar, got shape {loss.data.shape}")
        flowing = {id(loss): np.ones((), dtype=loss.data.dtype)}
        for out, inputs, vjp in reversed(self._nodes):
            g = flowing.pop(id(out), None)
            if g is None:
                continue
            for tensor, grad in zip(inputs, vjp(g)):
                if grad is None:
                    continue
                if tensor.requires_grad:
                    tensor.accumulate_grad(grad)
                else:
                    key = id(tensor)
                    if key in flowing:
                        flowing[key] = flowing[key] + grad
                    else:
                        flowing[key] = grad
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def _record(tape, out_data, inputs, vjp):
    out = Tensor(out_data, dtype=out_data.dtype)
    if tape is not None:
        tape.record(out, inputs, vjp)
    return out


def _unbroadcast(grad, shape):
    # Sum a broadcast gradient back down to the original operand shape.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def affine_forward(x, w, b, act="linear", tape=None):
    """act(x @ W.T + b) for a single vector or a batch of row vectors.

    ``w`` has shape (out, in) and ``b`` shape (out,). ``act`` is one of
    ``linear``, ``rectifier`` (half-wave) or ``softplus``.
    """
    if act not in ACTIVATIONS:
        raise ContractError(f"unknown activation {act!r}, expected one of {ACTIVATIONS}")
    if w.data.ndim != 2:
        raise DimensionError(f"weight must be a matrix, got shape {w.data.shape}")
    if b.data.ndim != 1 or b.data.shape[0] != w.data.shape[0]:
        raise DimensionError(f"bias shape {b.data.shape} does not match weight rows {w.data.shape[0]}")
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != w.data.shape[1]:
        raise DimensionError(f"input shape {x.data.shape} does not match weight cols {w.data.shape[1]}")

    pre = x.data @ w.data.T + b.data
    if act == "rectifier":
        out_data = np.maximum(pre, 0)
    elif act == "softplus":
        out_data = np.logaddexp(0, pre).astype(pre.dtype)
    else:
        out_data = pre

    def vjp(g):
        if act == "rectifier":
            g = g * (pre > 0)
        elif act == "softplus":
            g = g / (1.0 + np.exp(-pre))
        if x.data.ndim == 1:
            dw = np.outer(g, x.data)
            db = g
            dx = g @ w.data
        else:
            dw = g.T @ x.data
            db = g.sum(axis=0)
            dx = g @ w.data
        return dx, dw, db

    return _record(tape, out_data, (x, w, b), vjp)


def add(a, b, tape=None):
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(tape, out, (a, b), vjp)


def sub(a, b, tape=None):
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(tape, out, (a, b), vjp)


def mul(a, b, tape=None):
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _record(tape, out, (a, b), vjp)


def scale(a, c, tape=None):
    c = float(c)
    out = a.data * c

    def vjp(g):
        return (g * c,)

    return _record(tape, out, (a,), vjp)


def shift(a, c, tape=None):
    out = a.data + float(c)

    def vjp(g):
        return (g,)

    return _record(tape, out, (a,), vjp)


def exp(a, tape=None):
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _record(tape, out, (a,), vjp)


def log(a, tape=None):
    if np.any(a.data <= 0):
        raise NumericError("log requires strictly positive input")
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _record(tape, out, (a,), vjp)


def square(a, tape=None):
    out = a.data * a.data

    def vjp(g):
        return (2.0 * g * a.data,)

    return _record(tape, out, (a,), vjp)


def softplus(a, tape=None):
    out = np.logaddexp(0, a.data).astype(a.data.dtype)

    def vjp(g):
        return (g / (1.0 + np.exp(-a.data)),)

    return _record(tape, out, (a,), vjp)


def sigmoid(a, tape=None):
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record(tape, out, (a,), vjp)


def clip_min(a, floor, tape=None):
    floor = float(floor)
    mask = a.data > floor
    out = np.maximum(a.data, floor)

    def vjp(g):
        return (g * mask,)

    return _record(tape, out, (a,), vjp)


def sum_all(a, tape=None):
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype),)

    return _record(tape, out, (a,), vjp)


def sum_last(a, tape=None):
    """Sum over the trailing axis, keeping any batch axes."""
    out = a.data.sum(axis=-1)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, -1), a.data.shape).astype(a.data.dtype),)

    return _record(tape, out, (a,), vjp)


def mean_all(a, tape=None):
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype),)

    return _record(tape, out, (a,), vjp)


def softmax_stable(logits, tape=None):
    """Softmax over the trailing axis, safe for large logits.

    The running maximum is subtracted before exponentiation, so inputs
    like [1000, 0] map to [1, 0] instead of overflowing.
    """
    if logits.data.shape[-1] < 1:
        raise DimensionError("softmax needs at least one class")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _record(tape, out, (logits,), vjp)


def log_softmax(logits, tape=None):
    if logits.data.shape[-1] < 1:
        raise DimensionError("softmax needs at least one class")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def vjp(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _record(tape, out, (logits,), vjp)


def glorot_uniform(rows, cols, rng, dtype=DEFAULT_DTYPE):
    """Weight matrix drawn uniformly from +/- sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (rows + cols))
    data = rng.uniform(-limit, limit, size=(rows, cols))
    return Tensor(data.astype(dtype), requires_grad=True)


def zeros_param(n, dtype=DEFAULT_DTYPE):
    return Tensor(np.zeros(n, dtype=dtype), requires_grad=True)


class AdamState:
    """First/second moment estimates and the shared step counter."""

    __slots__ = ("m", "v", "t")

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


class Adam:
    """Adam with bias correction. Gradients are read from ``p.grad``."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.state = AdamState(self.params)

    def step(self):
        self.state.t += 1
        t = self.state.t
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in parameter {i} (shape {p.data.shape})")
            m = self.state.m[i]
            v = self.state.v[i]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
