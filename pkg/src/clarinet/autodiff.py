"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

A ``Tape`` records operations eagerly as tensors are combined; calling
``Tape.backward`` on a scalar output walks the recorded list once in reverse
and accumulates exact gradients into every reachable ``Parameter``.  One
backward pass per tape; build a fresh tape for each training step.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NonFiniteValue, ShapeMismatch


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Parameter:
    """A trainable array with gradient and momentum buffers of the same shape."""

    def __init__(self, value):
        self.value = _as_f64(value)
        self.grad = np.zeros_like(self.value)
        self.momentum = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class Tensor:
    """A node in the recorded computation graph.

    Tensors with ``tape is None`` are constants: they participate in forward
    arithmetic but receive no gradient.
    """

    __slots__ = ("data", "tape", "param", "grad", "_parents", "_backward")

    # make numpy defer to the reflected operators instead of broadcasting into
    # an object array
    __array_ufunc__ = None

    def __init__(self, data, tape=None, param=None):
        self.data = _as_f64(data)
        self.tape = tape
        self.param = param
        self.grad = None
        self._parents = ()
        self._backward = None
        if tape is not None:
            tape._record(self)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def _accumulate(self, g):
        if self.tape is None:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # operator sugar; mixed operands are promoted to constants
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError("item() requires a scalar tensor, got shape %s" % (self.shape,))
        return float(self.data.reshape(()))


class Tape:
    """Ordered record of operations; creation order is a valid topological order."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._done = False

    def _record(self, t: Tensor):
        self._nodes.append(t)

    def leaf(self, param: Parameter) -> Tensor:
        """Attach a parameter to this tape as a differentiable leaf."""
        return Tensor(param.value, tape=self, param=param)

    def backward(self, out: Tensor):
        """Backpropagate from a scalar output; parameter gradients accumulate additively."""
        if out.tape is not self:
            raise ContractError("output tensor does not belong to this tape")
        if out.size != 1:
            raise ContractError("backward requires a scalar output, got shape %s" % (out.shape,))
        if self._done:
            raise ContractError("tape already backpropagated; record a fresh tape per step")
        self._done = True
        out.grad = np.ones_like(out.data)
        for t in reversed(self._nodes):
            if t.grad is None:
                continue
            if t._backward is not None:
                t._backward(t.grad)
            if t.param is not None:
                t.param.grad += t.grad


def gradients(tape: Tape, out: Tensor, params) -> dict:
    """Backward pass returning {parameter: gradient copy}; unvisited parameters get zero."""
    for p in params:
        p.zero_grad()
    tape.backward(out)
    return {p: p.grad.copy() for p in params}


# ---------------------------------------------------------------------------
# op plumbing


def _coerce(a, b):
    """Promote plain arrays/scalars to constant tensors; find the common tape."""
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    if a.tape is not None and b.tape is not None and a.tape is not b.tape:
        raise ContractError("operands recorded on different tapes")
    return a, b, (a.tape or b.tape)


def _check_finite(name, data):
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("%s produced a non-finite value" % name)
    return data


def _make(name, data, tape, parents, backward):
    out = Tensor(_check_finite(name, data), tape=tape)
    out._parents = parents
    out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes that broadcasting expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    a, b, tape = _coerce(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make("add", a.data + b.data, tape, (a, b), backward)


def sub(a, b):
    a, b, tape = _coerce(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(-_unbroadcast(g, b.shape))

    return _make("sub", a.data - b.data, tape, (a, b), backward)


def mul(a, b):
    a, b, tape = _coerce(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make("mul", a.data * b.data, tape, (a, b), backward)


def div(a, b):
    a, b, tape = _coerce(a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g / b.data, a.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make("div", a.data / b.data, tape, (a, b), backward)


def matmul(a, b):
    a, b, tape = _coerce(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul expects conforming 2-D operands, got %s and %s"
                            % (a.shape, b.shape))

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make("matmul", a.data @ b.data, tape, (a, b), backward)


def pow_const(x, c: float):
    x, _, tape = _coerce(x, 0.0)
    c = float(c)

    def backward(g):
        x._accumulate(g * c * np.power(x.data, c - 1.0))

    return _make("pow", np.power(x.data, c), tape, (x,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x):
    x, _, tape = _coerce(x, 0.0)
    mask = x.data > 0.0

    def backward(g):
        x._accumulate(g * mask)

    return _make("relu", x.data * mask, tape, (x,), backward)


def sigmoid(x):
    x, _, tape = _coerce(x, 0.0)
    # stable in both tails
    out = np.where(x.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(x.data))),
                   np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return _make("sigmoid", out, tape, (x,), backward)


def softmax(x):
    """Row-wise softmax via the log-sum-exp shift; rows land on the simplex."""
    x, _, tape = _coerce(x, 0.0)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        x._accumulate(p * (g - dot))

    return _make("softmax", p, tape, (x,), backward)


def log(x):
    x, _, tape = _coerce(x, 0.0)

    def backward(g):
        x._accumulate(g / x.data)

    return _make("log", np.log(x.data), tape, (x,), backward)


def clamp(x, lo=None, hi=None):
    """Clip values; gradient flows only where the input was inside the range."""
    x, _, tape = _coerce(x, 0.0)
    inside = np.ones_like(x.data, dtype=bool)
    if lo is not None:
        inside &= x.data >= lo
    if hi is not None:
        inside &= x.data <= hi

    def backward(g):
        x._accumulate(g * inside)

    return _make("clamp", np.clip(x.data, lo, hi), tape, (x,), backward)


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(x, axis=None, keepdims=False):
    x, _, tape = _coerce(x, 0.0)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy() if np.ndim(g) else
                          np.full(x.shape, g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg, x.shape).copy())

    return _make("sum", x.data.sum(axis=axis, keepdims=keepdims), tape, (x,), backward)


def tmean(x, axis=None, keepdims=False):
    x, _, tape = _coerce(x, 0.0)
    n = x.data.size if axis is None else x.data.shape[axis]

    def backward(g):
        if axis is None:
            x._accumulate(np.full(x.shape, g / n))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg / n, x.shape).copy())

    return _make("mean", x.data.mean(axis=axis, keepdims=keepdims), tape, (x,), backward)


def take_rows(x, idx):
    """Select rows by index; backward scatter-adds into the source rows."""
    x, _, tape = _coerce(x, 0.0)
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accumulate(full)

    return _make("take_rows", x.data[idx], tape, (x,), backward)


def column(x, k: int):
    """Select one column of a 2-D tensor as a 1-D tensor."""
    x, _, tape = _coerce(x, 0.0)
    if x.data.ndim != 2:
        raise ShapeMismatch("column expects a 2-D tensor, got %s" % (x.shape,))

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, k] = g
        x._accumulate(full)

    return _make("column", x.data[:, k].copy(), tape, (x,), backward)


# ---------------------------------------------------------------------------
# the two special nodes


def grad_reverse(x, lam: float):
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    if lam < 0:
        raise ContractError("grad_reverse expects lam >= 0, got %r" % lam)
    x, _, tape = _coerce(x, 0.0)

    def backward(g):
        x._accumulate(-lam * g)

    return _make("grad_reverse", x.data.copy(), tape, (x,), backward)


def outer_flatten(u, v):
    """Row-wise flattened outer product: out[i, a*K + b] = u[i,a] * v[i,b]."""
    u, v, tape = _coerce(u, v)
    ud, vd = u.data, v.data
    squeeze = False
    if ud.ndim == 1 and vd.ndim == 1:
        ud, vd, squeeze = ud[None, :], vd[None, :], True
    if ud.ndim != 2 or vd.ndim != 2 or ud.shape[0] != vd.shape[0]:
        raise ShapeMismatch("outer_flatten expects matching row counts, got %s and %s"
                            % (u.shape, v.shape))
    if ud.shape[1] == 0 or vd.shape[1] == 0:
        raise ContractError("outer_flatten got an empty operand")
    n, d = ud.shape
    k = vd.shape[1]
    out = (ud[:, :, None] * vd[:, None, :]).reshape(n, d * k)

    def backward(g):
        g3 = g.reshape(n, d, k)
        du = np.einsum("ndk,nk->nd", g3, vd)
        dv = np.einsum("ndk,nd->nk", g3, ud)
        if squeeze:
            du, dv = du[0], dv[0]
        u._accumulate(du)
        v._accumulate(dv)

    return _make("outer_flatten", out[0] if squeeze else out, tape, (u, v), backward)


def detach(x: Tensor) -> Tensor:
    """A constant copy: same values, no gradient path."""
    return Tensor(x.data.copy())
