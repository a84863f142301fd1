"""Finite-difference gradient checking for the autodiff engine.

Central differences in float64. ``check_grads`` perturbs every entry of
every leaf tensor; keep the parameter counts small (tens, not thousands)
or the check will dominate the test run.
"""

import numpy as np

from .autodiff import Tensor


def numeric_grad(f, leaf, eps=1e-5):
    """d f() / d leaf by central differences; f is a closure over leaf.data."""
    g = np.zeros_like(leaf.data)
    flat = leaf.data.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f())
        flat[i] = orig - eps
        lo = float(f())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def check_grads(make_loss, leaves, eps=1e-5, rtol=1e-4, atol=1e-7):
    """Compare analytic and numeric gradients on each leaf.

    make_loss() must rebuild the graph from the leaves' current .data and
    return a scalar Tensor. An entry passes when
    |ana - num| <= atol + rtol * max(|ana|, |num|); atol absorbs the
    roundoff floor of central differences (~1e-10 here) on entries whose
    true gradient is itself negligible. Returns the worst relative error
    among entries above the floor.
    """
    for leaf in leaves:
        leaf.grad = None
    loss = make_loss()
    if not isinstance(loss, Tensor):
        raise TypeError("make_loss must return a Tensor")
    loss.backward()
    worst = 0.0
    for leaf in leaves:
        ana = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        num = numeric_grad(lambda: make_loss().item(), leaf, eps=eps)
        diff = np.abs(ana - num)
        bound = atol + rtol * np.maximum(np.abs(ana), np.abs(num))
        rel = np.max(diff / np.maximum(np.maximum(np.abs(ana), np.abs(num)), atol / rtol))
        worst = max(worst, float(rel))
        if np.any(diff > bound):
            i = np.unravel_index(np.argmax(diff / bound), diff.shape)
            raise AssertionError(
                f"gradient mismatch on leaf {leaf.shape} at {i}: "
                f"analytic {ana[i]:.6e} vs numeric {num[i]:.6e}")
    return worst
