"""Reverse-mode differentiation on numpy arrays.

Every differentiable operation appends a node (output, inputs, backward rule)
to the active :class:`Tape`. Nodes are appended in creation order, so walking
the tape backwards visits them in reverse topological order.
"""
import contextlib

import numpy as np

from dualsl.errors import ContractError, ShapeError, ValidationError

DTYPE = np.float64


class Tape:
    def __init__(self):
        self.nodes = []

    def record(self, out, inputs, backward):
        self.nodes.append((out, inputs, backward))

    def clear(self):
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)


_tapes = [Tape()]
_grad_enabled = [True]


def current_tape():
    return _tapes[-1]


def is_grad_enabled():
    return _grad_enabled[-1]


@contextlib.contextmanager
def recording(tape=None):
    """Record onto ``tape`` (a fresh one by default) inside the block."""
    tape = Tape() if tape is None else tape
    _tapes.append(tape)
    _grad_enabled.append(True)
    try:
        yield tape
    finally:
        _grad_enabled.pop()
        _tapes.pop()


@contextlib.contextmanager
def no_grad():
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


class Tensor:
    __array_priority__ = 100

    def __init__(self, values, requires_grad=False):
        self.values = np.array(values, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self):
        return float(self.values)

    def numpy(self):
        return self.values

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def detach(self):
        return Tensor(self.values)


class Parameter(Tensor):
    """A named, optimizable tensor carrying its own Adam moments."""

    def __init__(self, name, values):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.values)
        self.v = np.zeros_like(self.values)
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values, inputs, backward):
    out = Tensor(values)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        current_tape().record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic --------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.values + b.values, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.values - b.values, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g * b.values, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.values, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.values * b.values, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = _unbroadcast(g / b.values, a.shape) if a.requires_grad else None
        gb = (_unbroadcast(-g * a.values / b.values ** 2, b.shape)
              if b.requires_grad else None)
        return ga, gb

    return _make(a.values / b.values, (a, b), backward)


def neg(a):
    return _make(-a.values, (a,), lambda g: (-g,))


def power(a, exponent):
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.values ** (exponent - 1.0),)

    return _make(a.values ** exponent, (a,), backward)


def exp(a):
    out = np.exp(a.values)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,))


# -- linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.values.T if a.requires_grad else None
        gb = a.values.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.values @ b.values, (a, b), backward)


def masked_linear(x, weight, mask, bias):
    """``x @ (weight * mask).T + bias`` with ``weight`` laid out [out, in]."""
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValidationError("mask must contain only 0 and 1")
    if mask.shape != weight.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match weight {weight.shape}")
    if x.ndim != 2 or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"masked_linear: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    mask = mask.astype(DTYPE)
    effective = weight.values * mask

    def backward(g):
        gx = g @ effective if x.requires_grad else None
        gw = (g.T @ x.values) * mask if weight.requires_grad else None
        return gx, gw, g.sum(axis=0)

    return _make(x.values @ effective.T + bias.values, (x, weight, bias), backward)


# -- reductions and shape plumbing ---------------------------------------------

def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.values.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.values.size if axis is None else np.prod(
        [a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape):
    old = a.shape
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a):
    return _make(a.values.T, (a,), lambda g: (g.T,))


def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def getitem(a, index):
    shape = a.shape
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(a.values[index], (a,), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.values for t in tensors], axis=axis), tuple(tensors), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.values for t in tensors], axis=axis),
                 tuple(tensors), backward)


def detach(a):
    return Tensor(a.values)


# -- activations ---------------------------------------------------------------

def sigmoid(a):
    out = _sigmoid(a.values)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(a.values)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    live = a.values > 0
    return _make(np.where(live, a.values, 0.0), (a,), lambda g: (g * live,))


def softmax(a, axis=-1):
    _check_axis(a, axis)
    out = _softmax(a.values, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward)


def log_softmax(a, axis=-1):
    _check_axis(a, axis)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), backward)


def apply_activation(kind, x, axis=-1):
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    if kind == "softmax":
        return softmax(x, axis)
    if kind == "log_softmax":
        return log_softmax(x, axis)
    raise ValueError(f"unknown activation {kind!r}")


def bernoulli_log_prob(logits, targets, clamp=1e-12):
    """Elementwise ``t log s + (1 - t) log(1 - s)`` with ``s = sigmoid(logits)``.

    Both log-probabilities are floored at ``log(clamp)``; clamped terms carry
    no gradient.
    """
    targets = np.asarray(targets, dtype=DTYPE)
    z = logits.values
    if targets.shape != z.shape:
        raise ShapeError(f"targets {targets.shape} do not match logits {z.shape}")
    floor = np.log(clamp)
    log_on = -np.logaddexp(0.0, -z)
    log_off = -np.logaddexp(0.0, z)
    on_live = log_on > floor
    off_live = log_off > floor
    out = targets * np.maximum(log_on, floor) + (1.0 - targets) * np.maximum(log_off, floor)
    s = _sigmoid(z)

    def backward(g):
        dz = targets * (1.0 - s) * on_live - (1.0 - targets) * s * off_live
        return (g * dz,)

    return _make(out, (logits,), backward)


def _check_axis(a, axis):
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} is invalid for a tensor of shape {a.shape}")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z, axis):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# -- backward pass ---------------------------------------------------------------

def backward(loss, tape=None):
    """Populate ``.grad`` on every leaf that ``loss`` depends on, then clear the tape.

    Leaf gradients accumulate across calls until the optimizer consumes them.
    """
    tape = current_tape() if tape is None else tape
    if loss.values.size != 1:
        tape.clear()
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        tape.clear()
        raise ContractError("loss does not depend on any tensor requiring grad")
    produced = set()
    for out, _, _ in tape.nodes:
        produced.add(id(out))
    if id(loss) not in produced:
        tape.clear()
        raise ContractError("loss was not recorded on this tape")

    pending = {id(loss): np.ones(loss.shape, dtype=DTYPE)}
    leaves = {}
    for out, inputs, rule in reversed(tape.nodes):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, rule(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in produced:
                leaves[key] = inp
            if key in pending:
                pending[key] = pending[key] + gi
            else:
                pending[key] = gi
    for key, leaf in leaves.items():
        g = pending[key]
        if g.shape != leaf.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {leaf.shape}")
        leaf.grad = np.array(g, dtype=DTYPE) if leaf.grad is None else leaf.grad + g
    tape.clear()
