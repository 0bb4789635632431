"""Minimal reverse-mode differentiation over numpy arrays.

A Tensor wraps an ndarray; operations build a tape while a GradTape is
active, and backward() replays it in reverse. This is a deliberately small
engine: float64 only, the dozen ops the cost functions actually use, plus
two fused Gaussian-overlap primitives so the quadratic statistics do not
have to materialize (B, B, d) broadcast intermediates.

Everything is checked against central finite differences in the tests; if
you add an op, add it to the check there too.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import UsageError

_LOG_2PI = float(np.log(2.0 * np.pi))

_TAPE_STACK: list["GradTape"] = []


def _active_tape() -> Optional["GradTape"]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.vjp = None  # receives the upstream gradient, accumulates into parents

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # operator sugar; every one routes through the op functions below
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def param(data) -> Tensor:
    """A leaf tensor that gradients accumulate into."""
    return Tensor(np.array(data, dtype=float), requires_grad=True)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, vjp) -> Tensor:
    """Create the result tensor, wiring it into the active tape when any
    parent participates in differentiation."""
    tape = _active_tape()
    out = Tensor(data)
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.vjp = vjp
        tape._nodes.append(out)
    return out


def _accumulate(parent: Tensor, g: np.ndarray):
    if not parent.requires_grad:
        return
    if parent.grad is None:
        parent.grad = np.zeros_like(parent.data)
    parent.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


class GradTape:
    """Records operations for one or more backward passes.

    Construct with the parameter leaves whose gradient vector you want,
    activate with `with`, run the forward computation inside, then call
    :func:`backward` (any number of times, once per scalar output).
    """

    def __init__(self, params: Sequence[Tensor]):
        self.params = list(params)
        for i, p in enumerate(self.params):
            if not isinstance(p, Tensor) or not p.requires_grad:
                raise UsageError(f"tape parameter {i} is not a differentiable leaf")
        self._nodes: list[Tensor] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params)


def backward(tape: GradTape, scalar_output: Tensor) -> np.ndarray:
    """Gradient of a scalar recorded on `tape` w.r.t. the tape's parameters,
    flattened into one vector (parameter order, C layout).

    May be called repeatedly on the same tape with different outputs; each
    call starts from clean gradients.
    """
    if scalar_output.data.size != 1:
        raise UsageError(f"backward needs a scalar, got shape {scalar_output.shape}")
    node_ids = {id(n) for n in tape._nodes}
    if id(scalar_output) not in node_ids:
        raise UsageError("output was not recorded on this tape")
    for n in tape._nodes:
        n.grad = None
    for p in tape.params:
        p.grad = None
    scalar_output.grad = np.ones_like(scalar_output.data)
    for node in reversed(tape._nodes):
        if node.grad is not None and node.vjp is not None:
            node.vjp(node.grad)
    out = np.empty(tape.n_params)
    pos = 0
    for p in tape.params:
        n = p.data.size
        out[pos:pos + n] = (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel()
        pos += n
    return out


# ---------------------------------------------------------------------------
# elementwise / linear ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data + b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _record(data, (a, b), vjp)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data - b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _record(data, (a, b), vjp)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data * b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(data, (a, b), vjp)


def div(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data / b.data

    def vjp(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _record(data, (a, b), vjp)


def power(a, exponent: float):
    a = _lift(a)
    data = a.data ** exponent

    def vjp(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _record(data, (a,), vjp)


def exp(a):
    a = _lift(a)
    data = np.exp(a.data)

    def vjp(g):
        _accumulate(a, g * data)

    return _record(data, (a,), vjp)


def log(a):
    a = _lift(a)
    data = np.log(a.data)

    def vjp(g):
        _accumulate(a, g / a.data)

    return _record(data, (a,), vjp)


def sqrt(a):
    a = _lift(a)
    data = np.sqrt(a.data)

    def vjp(g):
        _accumulate(a, g * 0.5 / data)

    return _record(data, (a,), vjp)


def tanh(a):
    a = _lift(a)
    data = np.tanh(a.data)

    def vjp(g):
        _accumulate(a, g * (1.0 - data * data))

    return _record(data, (a,), vjp)


def softplus(a):
    """log(1 + e^x), the softened-positive transform; gradient is the logistic."""
    a = _lift(a)
    data = np.logaddexp(0.0, a.data)

    def vjp(g):
        _accumulate(a, g * expit(a.data))

    return _record(data, (a,), vjp)


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    data = a.data @ b.data

    def vjp(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _record(data, (a, b), vjp)


def rows(table, idx: np.ndarray):
    """Row gather, `table[idx]`; the differentiable stand-in for a one-hot
    matrix product. Backward scatter-adds, so repeated indices accumulate."""
    table = _lift(table)
    idx = np.asarray(idx, dtype=np.intp)
    data = table.data[idx]

    def vjp(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    return _record(data, (table,), vjp)


def tsum(a, axis=None, keepdims: bool = False):
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return _record(data, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False):
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = _lift(a)
    data = a.data.reshape(shape)

    def vjp(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _record(data, (a,), vjp)


# ---------------------------------------------------------------------------
# fused Gaussian-overlap primitives
# ---------------------------------------------------------------------------

def _overlap_forward(mu1, va1, mu2, va2):
    """log N(mu1_i - mu2_j, va1_i + va2_j) for all pairs, per-dimension loop."""
    b1, d = mu1.shape
    b2 = mu2.shape[0]
    log_k = np.zeros((b1, b2))
    for k in range(d):
        s = va1[:, k, None] + va2[None, :, k]
        diff = mu1[:, k, None] - mu2[None, :, k]
        log_k -= 0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)
    return log_k


def mog_cross(w1, mu1, va1, w2, mu2, va2) -> Tensor:
    """sum_{i,j} w1_i w2_j N(mu1_i - mu2_j, va1_i + va2_j), as one scalar op.

    Passing the same tensors for both slots gives the squared-norm double
    sum; the backward pass then accumulates both occurrences, which is
    exactly the symmetric derivative. A zero-variance constant second slot
    turns the kernel into plain density evaluation at fixed points.
    """
    w1, mu1, va1 = _lift(w1), _lift(mu1), _lift(va1)
    w2, mu2, va2 = _lift(w2), _lift(mu2), _lift(va2)
    kmat = np.exp(_overlap_forward(mu1.data, va1.data, mu2.data, va2.data))
    data = np.array(w1.data @ kmat @ w2.data)

    def vjp(g):
        g = float(g)
        pair = (w1.data[:, None] * w2.data[None, :]) * kmat  # weighted kernel
        _accumulate(w1, g * (kmat @ w2.data))
        _accumulate(w2, g * (kmat.T @ w1.data))
        if mu1.requires_grad or mu2.requires_grad or va1.requires_grad or va2.requires_grad:
            for k in range(mu1.data.shape[1]):
                s = va1.data[:, k, None] + va2.data[None, :, k]
                diff = mu1.data[:, k, None] - mu2.data[None, :, k]
                r = pair * (diff / s)
                if mu1.requires_grad:
                    _accumulate_col(mu1, k, -g * r.sum(axis=1))
                if mu2.requires_grad:
                    _accumulate_col(mu2, k, g * r.sum(axis=0))
                q = pair * 0.5 * (diff * diff / (s * s) - 1.0 / s)
                if va1.requires_grad:
                    _accumulate_col(va1, k, g * q.sum(axis=1))
                if va2.requires_grad:
                    _accumulate_col(va2, k, g * q.sum(axis=0))

    return _record(data, (w1, mu1, va1, w2, mu2, va2), vjp)


def mog_pair(w1, mu1, va1, w2, mu2, va2) -> Tensor:
    """sum_i w1_i w2_i N(mu1_i - mu2_i, va1_i + va2_i): the elementwise-paired
    overlap used when each row is matched with exactly one partner."""
    w1, mu1, va1 = _lift(w1), _lift(mu1), _lift(va1)
    w2, mu2, va2 = _lift(w2), _lift(mu2), _lift(va2)
    s = va1.data + va2.data
    diff = mu1.data - mu2.data
    log_k = (-0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)).sum(axis=1)
    kvec = np.exp(log_k)
    data = np.array((w1.data * w2.data * kvec).sum())

    def vjp(g):
        g = float(g)
        pair = w1.data * w2.data * kvec
        _accumulate(w1, g * w2.data * kvec)
        _accumulate(w2, g * w1.data * kvec)
        r = pair[:, None] * (diff / s)
        _accumulate(mu1, -g * r)
        _accumulate(mu2, g * r)
        q = pair[:, None] * 0.5 * (diff * diff / (s * s) - 1.0 / s)
        _accumulate(va1, g * q)
        _accumulate(va2, g * q)

    return _record(data, (w1, mu1, va1, w2, mu2, va2), vjp)


def _accumulate_col(parent: Tensor, col: int, g_col: np.ndarray):
    if not parent.requires_grad:
        return
    if parent.grad is None:
        parent.grad = np.zeros_like(parent.data)
    parent.grad[:, col] += g_col
