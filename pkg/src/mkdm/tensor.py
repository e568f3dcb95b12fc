"""Dense tensors with taped reverse-mode differentiation.

A ``Tensor`` wraps a float numpy array. Operations run eagerly; when a
``Tape`` is active and an operand requires gradients, the operation appends
a node (operands, saved forward values, backward rule) to the tape.
``backward`` replays the tape once in reverse and accumulates gradients
into every reachable tensor that requires them.

Training runs in float32. The same operations accept float64 tensors so the
finite-difference oracle can run the identical graph in double precision.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named, trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name, data, dtype=np.float32):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


class _Node:
    __slots__ = ("out", "inputs", "fn")

    def __init__(self, out, inputs, fn):
        self.out = out
        self.inputs = inputs
        self.fn = fn


class Tape:
    """Ordered record of operations; operands always precede their users."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.nodes)


_TAPE_STACK: list[Tape] = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _track(out, inputs, fn):
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, inputs, fn))
    return out


def backward(tape, loss, params=None):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

    ``loss`` must be a scalar. Parameters listed in ``params`` that the tape
    never touched receive a zero gradient. Intermediate gradients are cleared
    at the start of every call, so replaying the same tape is deterministic;
    parameter gradients accumulate across calls until the caller zeroes them.
    """
    if loss.data.size != 1:
        raise ContractError(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )
    for node in tape.nodes:
        node.out.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        gout = node.out.grad
        if gout is None:
            continue
        grads = node.fn(gout)
        for t, g in zip(node.inputs, grads):
            if g is None or not t.requires_grad:
                continue
            t.grad = g if t.grad is None else t.grad + g
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _swap(a):
    return a.swapaxes(-1, -2)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs matrices, got shapes {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def fn(g):
        ga = _unbroadcast(g @ _swap(b.data), a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(_swap(a.data) @ g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _track(out, (a, b), fn)


def add(a, b):
    out = Tensor(a.data + b.data)

    def fn(g):
        return (
            _unbroadcast(g, a.data.shape) if a.requires_grad else None,
            _unbroadcast(g, b.data.shape) if b.requires_grad else None,
        )

    return _track(out, (a, b), fn)


def sub(a, b):
    out = Tensor(a.data - b.data)

    def fn(g):
        return (
            _unbroadcast(g, a.data.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.data.shape) if b.requires_grad else None,
        )

    return _track(out, (a, b), fn)


def mul(a, b):
    out = Tensor(a.data * b.data)

    def fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None,
        )

    return _track(out, (a, b), fn)


def neg(x):
    out = Tensor(-x.data)
    return _track(out, (x,), lambda g: (-g,))


def scale(x, c):
    c = float(c)
    out = Tensor(x.data * c)
    return _track(out, (x,), lambda g: (g * c,))


def log(x):
    out = Tensor(np.log(x.data))
    return _track(out, (x,), lambda g: (g / x.data,))


def clamp_min(x, floor):
    floor = float(floor)
    out = Tensor(np.maximum(x.data, floor))
    mask = x.data > floor
    return _track(out, (x,), lambda g: (g * mask,))


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape))
    orig = x.data.shape
    return _track(out, (x,), lambda g: (g.reshape(orig),))


def transpose(x, axes):
    out = Tensor(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))
    return _track(out, (x,), lambda g: (g.transpose(inverse),))


def sigmoid(x):
    y = kernels.sigmoid_fwd(x.data)
    out = Tensor(y)
    return _track(out, (x,), lambda g: (kernels.sigmoid_bwd(y, g),))


def gelu(x):
    """GELU in its tanh-approximation form."""
    out = Tensor(kernels.gelu_fwd(x.data))
    return _track(out, (x,), lambda g: (kernels.gelu_bwd(x.data, g),))


def softmax_rows(x):
    """Softmax over the last axis, computed with per-row max subtraction."""
    y = kernels.softmax_fwd(x.data)
    out = Tensor(y)
    return _track(out, (x,), lambda g: (kernels.softmax_bwd(y, g),))


def layer_norm(x, gain, bias, eps=1e-12):
    """Normalize the last axis to zero mean and unit variance, then apply
    the learned elementwise affine."""
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be positive, got {eps}")
    width = x.data.shape[-1]
    x2d = np.ascontiguousarray(x.data.reshape(-1, width))
    y2d, mean, rstd = kernels.layernorm_fwd(x2d, gain.data, bias.data, eps)
    out = Tensor(y2d.reshape(x.data.shape))

    def fn(g):
        g2d = np.ascontiguousarray(g.reshape(-1, width))
        dx, dgain, dbias = kernels.layernorm_bwd(g2d, x2d, mean, rstd, gain.data)
        return (
            dx.reshape(x.data.shape) if x.requires_grad else None,
            dgain if gain.requires_grad else None,
            dbias if bias.requires_grad else None,
        )

    return _track(out, (x, gain, bias), fn)


def embedding_lookup(table, ids):
    """Select rows of ``table`` by integer id; gradients scatter-add back."""
    ids = np.asarray(ids)
    n_rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ContractError(
            f"embedding id out of range [0, {n_rows}): min={ids.min()}, max={ids.max()}"
        )
    out = Tensor(table.data[ids])

    def fn(g):
        dtable = np.zeros_like(table.data)
        np.add.at(dtable, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (dtable,)

    return _track(out, (table,), fn)


def gather_rows(x, idx):
    """Pick one column per row: out[i] = x[i, idx[i]]."""
    idx = np.asarray(idx)
    rows = np.arange(x.data.shape[0])
    out = Tensor(x.data[rows, idx])

    def fn(g):
        dx = np.zeros_like(x.data)
        dx[rows, idx] = g
        return (dx,)

    return _track(out, (x,), fn)


def select_position(x, pos):
    """Slice one sequence position from a [batch, length, width] tensor."""
    out = Tensor(x.data[:, pos])

    def fn(g):
        dx = np.zeros_like(x.data)
        dx[:, pos] = g
        return (dx,)

    return _track(out, (x,), fn)


def dropout(x, rate, rng, train):
    """Inverted dropout: scales kept activations by 1/(1-rate) at train
    time, identity (consuming no randomness) at eval or rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    mask = keep * (1.0 / (1.0 - rate))
    out = Tensor(x.data * mask)
    return _track(out, (x,), lambda g: (g * mask,))


def sum_all(x):
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))
    return _track(out, (x,), lambda g: (np.broadcast_to(g, x.data.shape),))


def mean_all(x):
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.data.dtype))
    return _track(out, (x,), lambda g: (np.broadcast_to(g / n, x.data.shape),))
