"""Reverse-mode automatic differentiation over float64 numpy arrays.

A small tape engine: :class:`Tensor` wraps an ndarray and records the vjp
closure that routes an upstream gradient to its parents; ``backward()``
walks the graph once in reverse topological order. The op set is exactly
what the recurrent models here need -- elementwise arithmetic, matmul,
log/exp/tanh, last-axis (log-)softmax, row gather/scatter, the fused GRU
cell, and the latent-embedding mixture.

Constants (python scalars and ndarrays) can be mixed into any arithmetic
op without wrapping. Gradients accumulate on tensors created with
``requires_grad=True``; everything reachable only through constants is
pruned from the graph at construction time, as is the whole graph inside a
``no_grad()`` block.
"""

import contextlib

import numpy as np

from . import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _accum(t, g):
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = np.array(g)  # copy: g may alias another node's buffer
    else:
        t.grad += g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- graph plumbing ---------------------------------------------------

    @staticmethod
    def _node(data, parents, vjp):
        t = Tensor.__new__(Tensor)
        t.data = data
        t.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = parents
            t._vjp = vjp
        else:
            t.requires_grad = False
            t._parents = ()
            t._vjp = None
        return t

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is not None:
                node._vjp(node.grad)

    # -- conveniences -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = self.data + other.data

            def vjp(g, a=self, b=other):
                _accum(a, g)
                _accum(b, g)

            return Tensor._node(out, (self, other), vjp)
        const = np.asarray(other, dtype=np.float64)

        def vjp(g, a=self):
            _accum(a, g)

        return Tensor._node(self.data + const, (self,), vjp)

    __radd__ = __add__

    def __neg__(self):
        def vjp(g, a=self):
            _accum(a, -g)

        return Tensor._node(-self.data, (self,), vjp)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out = self.data - other.data

            def vjp(g, a=self, b=other):
                _accum(a, g)
                _accum(b, -g)

            return Tensor._node(out, (self, other), vjp)
        return self + (-np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = self.data * other.data

            def vjp(g, a=self, b=other):
                _accum(a, g * b.data)
                _accum(b, g * a.data)

            return Tensor._node(out, (self, other), vjp)
        const = np.asarray(other, dtype=np.float64)

        def vjp(g, a=self):
            _accum(a, g * const)

        return Tensor._node(self.data * const, (self,), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division unsupported; divide by a constant")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        out = self.data @ other.data

        def vjp(g, a=self, b=other):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        return Tensor._node(out, (self, other), vjp)

    # -- elementwise functions ---------------------------------------------

    def exp(self):
        out = np.exp(self.data)

        def vjp(g, a=self):
            _accum(a, g * out)

        return Tensor._node(out, (self,), vjp)

    def log(self):
        def vjp(g, a=self):
            _accum(a, g / a.data)

        return Tensor._node(np.log(self.data), (self,), vjp)

    def tanh(self):
        out = np.tanh(self.data)

        def vjp(g, a=self):
            _accum(a, g * (1.0 - out * out))

        return Tensor._node(out, (self,), vjp)

    # -- reductions and shape ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g, a=self):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape))

        return Tensor._node(np.asarray(out), (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.data.reshape(shape)

        def vjp(g, a=self):
            _accum(a, g.reshape(a.data.shape))

        return Tensor._node(out, (self,), vjp)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return Tensor._node(out, tuple(tensors), vjp)


def softmax(x, stash=None):
    """Softmax over the last axis. ``stash`` (a list) receives the output
    array so callers can reuse it without re-walking the graph."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    if stash is not None:
        stash.append(out)

    def vjp(g, a=x):
        _accum(a, out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return Tensor._node(out, (x,), vjp)


def log_softmax(x):
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def vjp(g, a=x):
        _accum(a, g - np.exp(out) * g.sum(axis=-1, keepdims=True))

    return Tensor._node(out, (x,), vjp)


def take_rows(x, idx):
    """Gather rows of a 2-D tensor: out[i] = x[idx[i]]. Embedding lookup."""
    idx = np.asarray(idx, dtype=np.intp)
    out = x.data[idx]

    def vjp(g, a=x):
        if not a.requires_grad:
            return
        dx = np.zeros_like(a.data)
        kernels.rows_add(dx, idx, np.ascontiguousarray(g))
        _accum(a, dx)

    return Tensor._node(out, (x,), vjp)


def take_along_last(x, idx):
    """out[...] = x[..., idx[...]] with idx shaped like x minus its last axis."""
    idx = np.asarray(idx, dtype=np.intp)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def vjp(g, a=x):
        dx = np.zeros_like(a.data)
        np.put_along_axis(dx, idx[..., None], np.asarray(g)[..., None], axis=-1)
        _accum(a, dx)

    return Tensor._node(out, (x,), vjp)


def latent_mix(weights, table):
    """Batched mixture of latent-embedding rows.

    weights: (B, M, K) simplex rows (or one-hots); table: (M, K, D).
    Returns (B, D): sum over variables of the weight-averaged rows.
    """
    out = np.einsum("bmk,mkd->bd", weights.data, table.data)

    def vjp(g, w=weights, t=table):
        if w.requires_grad:
            _accum(w, np.einsum("bd,mkd->bmk", g, t.data))
        if t.requires_grad:
            _accum(t, np.einsum("bmk,bd->mkd", w.data, g))

    return Tensor._node(out, (weights, table), vjp)


def gru_cell(gi, gh, h_prev):
    """Fused GRU cell on gate preactivations gi, gh (B, 3H) and state (B, H)."""
    gi_d = np.ascontiguousarray(gi.data)
    gh_d = np.ascontiguousarray(gh.data)
    hp_d = np.ascontiguousarray(h_prev.data)
    h_new, r, z, n = kernels.gru_cell_fwd(gi_d, gh_d, hp_d)

    def vjp(g, a=gi, b=gh, c=h_prev):
        dgi, dgh, dhp = kernels.gru_cell_bwd(
            np.ascontiguousarray(g), hp_d, gh_d, r, z, n)
        _accum(a, dgi)
        _accum(b, dgh)
        _accum(c, dhp)

    return Tensor._node(h_new, (gi, gh, h_prev), vjp)
