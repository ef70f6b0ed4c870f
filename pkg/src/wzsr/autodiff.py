"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: every operation immediately computes its value and, when
gradients are enabled, records a node with references to its inputs and a
backward closure.  ``backward`` walks the resulting tape once in reverse
topological order and accumulates gradients into every ``requires_grad``
leaf.

The op set is deliberately closed-world: matrix product, add (same-shape or
bias row), subtract, elementwise multiply, scalar scale, leaky ReLU, a fused
RNN-cell activation, row-wise softmax / log-softmax, column concatenation
and slicing, sum/mean reductions, and stop_gradient.  That is exactly what
the coder networks need; there is no general broadcasting.

All values are 2-D float64 arrays.  Scalars are shape (1, 1); a batch of
scalars is a column (n, 1).
"""

from contextlib import contextmanager

import numpy as np

from wzsr import backend
from wzsr.errors import ContractError, DomainError, NumericError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the context (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """A 2-D float64 array plus optional gradient and tape linkage.

    Leaves created with ``requires_grad=True`` (parameters) carry a
    preallocated ``grad`` buffer that ``backward`` accumulates into (+=).
    Interior nodes hold references to their parent tensors and a closure
    implementing the chain rule for the op that produced them.
    """

    __slots__ = ("values", "grad", "requires_grad", "name", "_parents", "_bwd", "_track")

    def __init__(self, values, requires_grad=False, name=""):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D; got shape {arr.shape}")
        self.values = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.values) if requires_grad else None
        self.name = name
        self._parents = ()
        self._bwd = None
        # True when a gradient can flow into or through this tensor.
        self._track = requires_grad

    @property
    def shape(self):
        return self.values.shape

    def item(self):
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, track={self._track}, name={self.name!r})"

    # Small amount of operator sugar; the named functions are the real API.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values, requires_grad=False, name=""):
    """Create a leaf tensor (copies the input into float64)."""
    return Tensor(values, requires_grad=requires_grad, name=name)


def parameter(values, name=""):
    """Create a trainable leaf."""
    return Tensor(values, requires_grad=True, name=name)


def _node(values, parents, bwd):
    """Interior tape node; assumes grad mode and a tracked parent exist."""
    out = Tensor.__new__(Tensor)
    out.values = values
    out.requires_grad = False
    out.grad = None
    out.name = ""
    out._parents = tuple(parents)
    out._bwd = bwd
    out._track = True
    return out


def _plain(values):
    """Untracked result (no-grad mode, or all inputs constant)."""
    out = Tensor.__new__(Tensor)
    out.values = values
    out.requires_grad = False
    out.grad = None
    out.name = ""
    out._parents = ()
    out._bwd = None
    out._track = False
    return out


def _tracked(*tensors):
    return _grad_enabled and any(t._track for t in tensors)


class _GradStore:
    """Gradient buffers keyed by tensor identity.

    Stored arrays may alias caller arrays (an op can hand the same array to
    two parents), so accumulation only mutates buffers this store allocated
    itself.
    """

    __slots__ = ("buf", "owned")

    def __init__(self):
        self.buf = {}
        self.owned = set()

    def add(self, t, g):
        if not t._track:
            return
        key = id(t)
        cur = self.buf.get(key)
        if cur is None:
            self.buf[key] = g
        elif key in self.owned:
            cur += g
        else:
            self.buf[key] = cur + g
            self.owned.add(key)

    def get(self, t):
        return self.buf.get(id(t))


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    vals = a.values @ b.values
    if not _tracked(a, b):
        return _plain(vals)

    def bwd(g, grads):
        if a._track:
            grads.add(a, g @ b.values.T)
        if b._track:
            grads.add(b, a.values.T @ g)

    return _node(vals, (a, b), bwd)


def add(a, b):
    """a + b for identical shapes, or b a (1, n) bias row broadcast over rows."""
    bias = b.shape != a.shape
    if bias and not (b.shape == (1, a.shape[1])):
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    vals = a.values + b.values
    if not _tracked(a, b):
        return _plain(vals)

    def bwd(g, grads):
        if a._track:
            grads.add(a, g)
        if b._track:
            grads.add(b, g.sum(axis=0, keepdims=True) if bias else g)

    return _node(vals, (a, b), bwd)


def sub(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes disagree: {a.shape} - {b.shape}")
    vals = a.values - b.values
    if not _tracked(a, b):
        return _plain(vals)

    def bwd(g, grads):
        if a._track:
            grads.add(a, g)
        if b._track:
            grads.add(b, -g)

    return _node(vals, (a, b), bwd)


def mul(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes disagree: {a.shape} * {b.shape}")
    vals = a.values * b.values
    if not _tracked(a, b):
        return _plain(vals)

    def bwd(g, grads):
        if a._track:
            grads.add(a, g * b.values)
        if b._track:
            grads.add(b, g * a.values)

    return _node(vals, (a, b), bwd)


def scale(a, c):
    """Multiply by a python float."""
    c = float(c)
    vals = a.values * c
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        grads.add(a, g * c)

    return _node(vals, (a,), bwd)


def leaky_relu(a, slope=0.01):
    """Elementwise max(x, slope*x); gradient at exactly 0 is the slope."""
    if not 0.0 < slope < 1.0:
        raise DomainError(f"leaky_relu slope must be in (0, 1); got {slope}")
    x = a.values
    vals = backend.leaky_fwd(x, slope)
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        grads.add(a, backend.leaky_bwd(g, x, slope))

    return _node(vals, (a,), bwd)


def rnn_cell_act(xw, hw, b, slope):
    """Fused z = xw + hw + b (bias row) followed by leaky ReLU.

    ``hw`` may be None (first step: zero previous hidden state).  One tape
    node instead of three keeps step overhead down on the training hot path.
    The backward mask comes from the sign of the output (the slope is
    positive, so output and pre-activation share it).
    """
    if b.shape != (1, xw.shape[1]):
        raise ShapeError(f"bias shape {b.shape} does not match activations {xw.shape}")
    if hw is not None and hw.shape != xw.shape:
        raise ShapeError(f"cell inputs disagree: {xw.shape} vs {hw.shape}")
    h = backend.cell_fwd(xw.values, None if hw is None else hw.values, b.values, slope)
    parents = (xw, b) if hw is None else (xw, hw, b)
    if not _tracked(*parents):
        return _plain(h)

    def bwd(g, grads):
        gz = backend.leaky_bwd(g, h, slope)
        if xw._track:
            grads.add(xw, gz)
        if hw is not None and hw._track:
            grads.add(hw, gz)
        if b._track:
            grads.add(b, gz.sum(axis=0, keepdims=True))

    return _node(h, parents, bwd)


def _check_logits(x, op):
    if x.shape[1] < 2:
        raise ShapeError(f"{op} needs at least 2 categories; got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite input to {op}")


def _softmax_vals(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax(a):
    """Row-wise softmax with max-shift stabilization."""
    _check_logits(a.values, "softmax")
    p = _softmax_vals(a.values)
    if not _tracked(a):
        return _plain(p)

    def bwd(g, grads):
        dot = (g * p).sum(axis=1, keepdims=True)
        grads.add(a, p * (g - dot))

    return _node(p, (a,), bwd)


def log_softmax(a):
    """Row-wise log(softmax(x)) computed without forming the ratio."""
    _check_logits(a.values, "log_softmax")
    z = a.values - a.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    vals = z - lse
    if not _tracked(a):
        return _plain(vals)

    p = np.exp(vals)

    def bwd(g, grads):
        grads.add(a, g - p * g.sum(axis=1, keepdims=True))

    return _node(vals, (a,), bwd)


def concat_cols(a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols row counts disagree: {a.shape} vs {b.shape}")
    vals = np.concatenate([a.values, b.values], axis=1)
    if not _tracked(a, b):
        return _plain(vals)
    na = a.shape[1]

    def bwd(g, grads):
        if a._track:
            grads.add(a, g[:, :na])
        if b._track:
            grads.add(b, g[:, na:])

    return _node(vals, (a, b), bwd)


def slice_cols(a, start, stop):
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for shape {a.shape}")
    vals = a.values[:, start:stop].copy()
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        full = np.zeros_like(a.values)
        full[:, start:stop] = g
        grads.add(a, full)

    return _node(vals, (a,), bwd)


def sum_cols(a):
    """Row sums, (n, m) -> (n, 1), accumulated left to right.

    Sequential column order keeps the result independent of numpy's pairwise
    reduction blocking, which the kernel-lane parity relies on.
    """
    x = a.values
    vals = x[:, 0:1].copy()
    for j in range(1, x.shape[1]):
        vals += x[:, j : j + 1]
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        grads.add(a, np.broadcast_to(g, x.shape))

    return _node(vals, (a,), bwd)


def sum_all(a):
    vals = np.array([[a.values.sum()]])
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        grads.add(a, np.full_like(a.values, g[0, 0]))

    return _node(vals, (a,), bwd)


def mean_all(a):
    n = a.values.size
    vals = np.array([[a.values.sum() / n]])
    if not _tracked(a):
        return _plain(vals)

    def bwd(g, grads):
        grads.add(a, np.full_like(a.values, g[0, 0] / n))

    return _node(vals, (a,), bwd)


def stop_gradient(a):
    """Identity forward; contributes exactly zero gradient upstream."""
    return _plain(a.values)


# ---------------------------------------------------------------------------
# tape walk


def backward(loss):
    """Accumulate d(loss)/d(leaf) into .grad of every requires_grad leaf."""
    if loss.values.size != 1:
        raise ContractError(f"backward needs a scalar loss; got shape {loss.shape}")
    if not loss._track:
        return  # loss does not depend on any tracked tensor

    # Iterative post-order topological sort over tracked parents.
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._track and id(p) not in visited:
                stack.append((p, False))

    grads = _GradStore()
    grads.buf[id(loss)] = np.ones_like(loss.values)
    for node in reversed(topo):
        g = grads.get(node)
        if g is None or node._bwd is None:
            continue
        node._bwd(g, grads)

    for node in topo:
        if node.requires_grad:
            g = grads.get(node)
            if g is not None:
                node.grad += g


def zero_grads(params):
    """Reset the grad buffer of every parameter to exactly zero."""
    for p in params:
        p.grad[...] = 0.0
