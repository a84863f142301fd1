"""Hot numerical kernels with selectable backend.

The compiled Cython extension ``latact._ckernels`` is used when it imported
successfully; otherwise the pure-numpy fallbacks below take over, so the
package works without a compiler. Set ``LATACT_KERNELS=numpy`` (or
``cython``) to force a backend; ``benchmarks/bench_kernels.py`` times both.

All kernels operate on C-contiguous float64 arrays. Gate order in the GRU
preactivations is (reset, update, candidate).
"""

import os

import numpy as np


def _sigmoid(x):
    # piecewise form avoids overflow warnings for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_cell_fwd_numpy(gi, gh, h_prev):
    H = h_prev.shape[1]
    r = _sigmoid(gi[:, :H] + gh[:, :H])
    z = _sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    n = np.tanh(gi[:, 2 * H:] + r * gh[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h_prev
    return h_new, r, z, n


def gru_cell_bwd_numpy(dh, h_prev, gh, r, z, n):
    H = h_prev.shape[1]
    dz = dh * (h_prev - n)
    dn = dh * (1.0 - z)
    dh_prev = dh * z
    dpre_n = dn * (1.0 - n * n)
    dr = dpre_n * gh[:, 2 * H:]
    dpre_r = dr * r * (1.0 - r)
    dpre_z = dz * z * (1.0 - z)
    dgi = np.concatenate([dpre_r, dpre_z, dpre_n], axis=1)
    dgh = np.concatenate([dpre_r, dpre_z, dpre_n * r], axis=1)
    return dgi, dgh, dh_prev


def rows_add_numpy(out, idx, vals):
    np.add.at(out, idx, vals)


_BACKENDS = {
    "numpy": {
        "gru_cell_fwd": gru_cell_fwd_numpy,
        "gru_cell_bwd": gru_cell_bwd_numpy,
        "rows_add": rows_add_numpy,
    }
}

try:
    from . import _ckernels

    _BACKENDS["cython"] = {
        "gru_cell_fwd": _ckernels.gru_cell_fwd,
        "gru_cell_bwd": _ckernels.gru_cell_bwd,
        "rows_add": _ckernels.rows_add,
    }
except ImportError:  # extension not built on this platform
    _ckernels = None

_active = None
gru_cell_fwd = None
gru_cell_bwd = None
rows_add = None


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active


def use_backend(name):
    """Bind the module-level kernel functions to one backend."""
    global _active, gru_cell_fwd, gru_cell_bwd, rows_add
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    impl = _BACKENDS[name]
    gru_cell_fwd = impl["gru_cell_fwd"]
    gru_cell_bwd = impl["gru_cell_bwd"]
    rows_add = impl["rows_add"]
    _active = name
    return name


_requested = os.environ.get("LATACT_KERNELS")
if _requested:
    use_backend(_requested)
else:
    use_backend("cython" if "cython" in _BACKENDS else "numpy")
