# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled curvature kernel: per-point loops over a metric 2-jet."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def curvature(double[:, :, ::1] ginv, double[:, :, :, ::1] dg, double[:, :, :, :, ::1] ddg):
    """Same contract as ``_kernels_py.curvature``."""
    cdef Py_ssize_t N = ginv.shape[0]
    cdef Py_ssize_t n = ginv.shape[1]
    gamma_arr = np.zeros((N, n, n, n))
    ricci_arr = np.zeros((N, n, n))
    scalar_arr = np.zeros(N)
    c_arr = np.empty((n, n, n))
    dc_arr = np.empty((n, n, n, n))
    dginv_arr = np.empty((n, n, n))
    dgamma_arr = np.empty((n, n, n, n))
    cdef double[:, :, :, ::1] gamma = gamma_arr
    cdef double[:, :, ::1] ricci = ricci_arr
    cdef double[::1] scalar = scalar_arr
    cdef double[:, :, ::1] c = c_arr
    cdef double[:, :, :, ::1] dc = dc_arr
    cdef double[:, :, ::1] dginv = dginv_arr
    cdef double[:, :, :, ::1] dgamma = dgamma_arr
    cdef Py_ssize_t p, i, j, k, l, a, q, r
    cdef double s, t

    for p in range(N):
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    c[i, j, l] = dg[p, j, l, i] + dg[p, i, l, j] - dg[p, i, j, l]
                    for a in range(n):
                        dc[i, j, l, a] = ddg[p, j, l, i, a] + ddg[p, i, l, j, a] - ddg[p, i, j, l, a]
        # d_a g^{kl} = -g^{kq} d_a g_qr g^{rl}
        for k in range(n):
            for l in range(n):
                for a in range(n):
                    s = 0.0
                    for q in range(n):
                        t = 0.0
                        for r in range(n):
                            t += dg[p, q, r, a] * ginv[p, r, l]
                        s += ginv[p, k, q] * t
                    dginv[k, l, a] = -s
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for l in range(n):
                        s += ginv[p, k, l] * c[i, j, l]
                    gamma[p, k, i, j] = 0.5 * s
                    for a in range(n):
                        s = 0.0
                        for l in range(n):
                            s += dginv[k, l, a] * c[i, j, l] + ginv[p, k, l] * dc[i, j, l, a]
                        dgamma[k, i, j, a] = 0.5 * s
        for i in range(n):
            for j in range(n):
                s = 0.0
                for k in range(n):
                    s += dgamma[k, i, j, k] - dgamma[k, i, k, j]
                    for l in range(n):
                        s += gamma[p, k, k, l] * gamma[p, l, i, j] - gamma[p, k, j, l] * gamma[p, l, i, k]
                ricci[p, i, j] = s
        s = 0.0
        for i in range(n):
            for j in range(n):
                s += ginv[p, i, j] * ricci[p, i, j]
        scalar[p] = s
    return gamma_arr, ricci_arr, scalar_arr
