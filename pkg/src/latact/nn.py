"""Layers, parameter handling, and the Adam optimizer.

Parameters are plain Tensors with requires_grad=True, discovered by
walking module attributes in definition order so that parameter lists
(and therefore optimizer state and checkpoints) are deterministic.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INIT_RANGE = 0.08


class Module:
    """Container with recursive, deterministic parameter discovery.

    Every Tensor attribute is a parameter, frozen ones included, so
    checkpoints stay complete; optimizers take trainable_parameters().
    """

    def named_parameters(self, prefix=""):
        out = []
        for name, val in vars(self).items():
            if name.startswith("_"):
                continue  # underscore attrs are borrowed references, owned elsewhere
            full = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(val, Tensor):
                out.append((full, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(full))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}"))
                    elif isinstance(item, Tensor):
                        out.append((f"{full}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self):
        return [p for _, p in self.named_parameters() if p.requires_grad]

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        mine = dict(self.named_parameters())
        if set(mine) != set(state):
            missing = sorted(set(mine) - set(state))
            extra = sorted(set(state) - set(mine))
            raise KeyError(f"parameter mismatch: missing {missing}, extra {extra}")
        for name, p in mine.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def param_count(self):
        return sum(p.data.size for p in self.parameters())


def _uniform(rng, shape):
    return Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape),
                  requires_grad=True)


class Linear(Module):
    """y = x W + b with W stored (in, out) so no transpose op is needed."""

    def __init__(self, rng, in_dim, out_dim, bias=True, zero_bias=False):
        self.W = _uniform(rng, (in_dim, out_dim))
        if bias:
            init = np.zeros(out_dim) if zero_bias else rng.uniform(
                -INIT_RANGE, INIT_RANGE, size=out_dim)
            self.b = Tensor(init, requires_grad=True)
        else:
            self.b = None

    def __call__(self, x):
        out = x @ self.W
        if self.b is not None:
            out = out + self.b
        return out


class Embedding(Module):
    def __init__(self, rng, num_rows, dim):
        self.weight = _uniform(rng, (num_rows, dim))

    def __call__(self, idx):
        """idx: int array of any shape; returns (*idx.shape, dim)."""
        idx = np.asarray(idx)
        flat = ad.take_rows(self.weight, idx.ravel())
        if idx.ndim == 1:
            return flat
        return flat.reshape(idx.shape + (self.weight.data.shape[1],))


class GRU(Module):
    """Single-layer GRU. Gate blocks ordered (reset, update, candidate);
    the reset gate multiplies the hidden contribution after its bias."""

    def __init__(self, rng, input_dim, hidden_dim):
        self.hidden_dim = hidden_dim
        self.W_ih = _uniform(rng, (input_dim, 3 * hidden_dim))
        self.W_hh = _uniform(rng, (hidden_dim, 3 * hidden_dim))
        self.b_ih = _uniform(rng, (3 * hidden_dim,))
        self.b_hh = _uniform(rng, (3 * hidden_dim,))

    def step(self, x_t, h_prev):
        gi = x_t @ self.W_ih + self.b_ih
        gh = h_prev @ self.W_hh + self.b_hh
        return ad.gru_cell(gi, gh, h_prev)

    def run(self, xs, h0, mask=None):
        """xs: list of (B, in) tensors; mask: (T, B) float array or None.

        Masked steps carry the previous state through, so right-padded
        batches end with the state at each sequence's true last token.
        Returns (states, h_last) where states[t] is the output at step t.
        """
        h = h0
        states = []
        for t, x_t in enumerate(xs):
            h_new = self.step(x_t, h)
            if mask is not None:
                m = mask[t][:, None]
                h_new = h_new * m + h * (1.0 - m)
            h = h_new
            states.append(h)
        return states, h


def init_hidden(batch, dim):
    return Tensor(np.zeros((batch, dim)))


def clip_global_norm(params, max_norm):
    """Scale gradients in place so their global L2 norm is <= max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        return {"t": self.t,
                "m": [a.copy() for a in self.m],
                "v": [a.copy() for a in self.v]}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.m = [np.asarray(a, dtype=np.float64).copy() for a in state["m"]]
        self.v = [np.asarray(a, dtype=np.float64).copy() for a in state["v"]]
