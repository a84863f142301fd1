"""The discrete latent space: M K-way categorical variables, the
Gumbel-Softmax relaxation used during training, and the deterministic
argmax mapping used everywhere else."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GUMBEL_EPS = 1e-20


@dataclass(frozen=True)
class LatentSpec:
    M: int
    K: int
    tau: float = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")

    @property
    def n_actions(self):
        return self.K ** self.M


def gumbel_noise(rng, shape):
    """Standard Gumbel draws, clamped away from log(0)."""
    u = rng.uniform(GUMBEL_EPS, 1.0 - GUMBEL_EPS, size=shape)
    return -np.log(-np.log(u))


def gumbel_softmax_sample(logits, tau, rng):
    """Relaxed categorical sample: softmax((logits + g) / tau) rowwise.

    logits: ndarray (..., K). Returns an ndarray of the same shape whose
    last axis lies on the simplex. For the differentiable version used in
    training graphs see gumbel_softmax_tensor.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    y = (logits + gumbel_noise(rng, logits.shape)) / tau
    y = y - y.max(axis=-1, keepdims=True)
    e = np.exp(y)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax_tensor(logits, tau, rng, hard_out=None):
    """Differentiable relaxed sample from a logits Tensor (..., K).

    The noise is a constant w.r.t. the graph, so gradients flow only
    through the logits, matching the reparameterized estimator. When
    ``hard_out`` (a list) is given it receives the argmax codes of the
    perturbed logits, i.e. the exact categorical sample that the soft
    output relaxes.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    g = gumbel_noise(rng, logits.data.shape)
    perturbed = (logits + g) * (1.0 / tau)
    if hard_out is not None:
        hard_out.append(np.argmax(perturbed.data, axis=-1))
    return ad.softmax(perturbed)


def greedy_map(posteriors):
    """Deterministic codes: argmax per row, lowest index on ties.

    posteriors: (..., M, K) simplex rows. Returns int codes (..., M).
    np.argmax already returns the first maximal index.
    """
    return np.argmax(np.asarray(posteriors), axis=-1)


def flip_code(assignment, m, new_value, K=None):
    """Return a copy of the code tuple with component m replaced."""
    codes = np.asarray(assignment, dtype=np.intp).copy()
    if not (0 <= m < codes.shape[-1]):
        raise IndexError(f"variable index {m} out of range for M={codes.shape[-1]}")
    if new_value < 0 or (K is not None and new_value >= K):
        raise IndexError("class value out of range")
    codes[..., m] = new_value
    return codes


def assignment_string(codes):
    """Dash form used in every report: "a1-a2-...-aM"."""
    return "-".join(str(int(c)) for c in np.asarray(codes).ravel())


def parse_assignment(text, spec=None):
    codes = np.array([int(p) for p in text.strip().split("-")], dtype=np.intp)
    if spec is not None:
        if codes.shape[0] != spec.M or np.any(codes < 0) or np.any(codes >= spec.K):
            raise ValueError(f"code {text!r} invalid for M={spec.M}, K={spec.K}")
    return codes


def one_hot(codes, K):
    """Hard codes (..., M) ints -> exact one-hot stack (..., M, K)."""
    codes = np.asarray(codes, dtype=np.intp)
    out = np.zeros(codes.shape + (K,))
    np.put_along_axis(out, codes[..., None], 1.0, axis=-1)
    return out
