# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels: GRU cell forward/backward and row scatter-add.

These carry the per-step work of the recurrent nets; the matrix products
stay in BLAS. Pure-numpy equivalents live in ``latact.kernels``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


def gru_cell_fwd(double[:, ::1] gi, double[:, ::1] gh, double[:, ::1] h_prev):
    """One GRU step from precomputed gate preactivations.

    gi = x W_ih + b_ih and gh = h_prev W_hh + b_hh, both (B, 3H) with gate
    order (reset, update, candidate). Returns (h_new, r, z, n); the three
    gate activations are kept for the backward pass.
    """
    cdef Py_ssize_t B = h_prev.shape[0]
    cdef Py_ssize_t H = h_prev.shape[1]
    h_new_arr = np.empty((B, H))
    r_arr = np.empty((B, H))
    z_arr = np.empty((B, H))
    n_arr = np.empty((B, H))
    cdef double[:, ::1] h_new = h_new_arr
    cdef double[:, ::1] r_ = r_arr
    cdef double[:, ::1] z_ = z_arr
    cdef double[:, ::1] n_ = n_arr
    cdef Py_ssize_t b, j
    cdef double r, z, n
    with nogil:
        for b in range(B):
            for j in range(H):
                r = 1.0 / (1.0 + exp(-(gi[b, j] + gh[b, j])))
                z = 1.0 / (1.0 + exp(-(gi[b, H + j] + gh[b, H + j])))
                n = tanh(gi[b, 2 * H + j] + r * gh[b, 2 * H + j])
                r_[b, j] = r
                z_[b, j] = z
                n_[b, j] = n
                h_new[b, j] = (1.0 - z) * n + z * h_prev[b, j]
    return h_new_arr, r_arr, z_arr, n_arr


def gru_cell_bwd(double[:, ::1] dh, double[:, ::1] h_prev, double[:, ::1] gh,
                 double[:, ::1] r, double[:, ::1] z, double[:, ::1] n):
    """Backward of :func:`gru_cell_fwd`.

    dh is the gradient at h_new; returns (dgi, dgh, dh_prev). dh_prev only
    carries the direct z*h_prev path; the gh matmul path is the caller's.
    """
    cdef Py_ssize_t B = h_prev.shape[0]
    cdef Py_ssize_t H = h_prev.shape[1]
    dgi_arr = np.empty((B, 3 * H))
    dgh_arr = np.empty((B, 3 * H))
    dhp_arr = np.empty((B, H))
    cdef double[:, ::1] dgi = dgi_arr
    cdef double[:, ::1] dgh = dgh_arr
    cdef double[:, ::1] dhp = dhp_arr
    cdef Py_ssize_t b, j
    cdef double g, rv, zv, nv, dn, dz, dpre_n, dr, dpre_r, dpre_z
    with nogil:
        for b in range(B):
            for j in range(H):
                g = dh[b, j]
                rv = r[b, j]
                zv = z[b, j]
                nv = n[b, j]
                dz = g * (h_prev[b, j] - nv)
                dn = g * (1.0 - zv)
                dhp[b, j] = g * zv
                dpre_n = dn * (1.0 - nv * nv)
                dr = dpre_n * gh[b, 2 * H + j]
                dpre_r = dr * rv * (1.0 - rv)
                dpre_z = dz * zv * (1.0 - zv)
                dgi[b, j] = dpre_r
                dgi[b, H + j] = dpre_z
                dgi[b, 2 * H + j] = dpre_n
                dgh[b, j] = dpre_r
                dgh[b, H + j] = dpre_z
                dgh[b, 2 * H + j] = dpre_n * rv
    return dgi_arr, dgh_arr, dhp_arr


def rows_add(double[:, ::1] out, cnp.intp_t[::1] idx, double[:, ::1] vals):
    """out[idx[i]] += vals[i] for every i, with repeated indices accumulated."""
    cdef Py_ssize_t N = idx.shape[0]
    cdef Py_ssize_t D = out.shape[1]
    cdef Py_ssize_t i, j, row
    with nogil:
        for i in range(N):
            row = idx[i]
            for j in range(D):
                out[row, j] += vals[i, j]
