# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-sample kernels; see mnlqr.kernels for the dispatch."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dgesvd

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951


def svec_outer_rows(const double[:, ::1] Z):
    """Rows ``svec(z_i z_i^T)``."""
    cdef Py_ssize_t N = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t s = d * (d + 1) // 2
    out_arr = np.empty((N, s))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n, i, j, k
    with nogil:
        for n in range(N):
            k = 0
            for j in range(d):
                out[n, k] = Z[n, j] * Z[n, j]
                k += 1
                for i in range(j + 1, d):
                    out[n, k] = SQRT2 * Z[n, i] * Z[n, j]
                    k += 1
    return out_arr


def sample_op_norms(const double[:, ::1] G, const double[:, :, ::1] T, const double[:, ::1] S):
    """Spectral norms of ``G @ C_i^T C_i`` with ``C_i = sum_b S[i, b] T[:, b, :]``."""
    cdef Py_ssize_t N = S.shape[0], nb = S.shape[1]
    cdef Py_ssize_t na = T.shape[0], p = T.shape[2]
    if T.shape[1] != nb or G.shape[0] != p or G.shape[1] != p:
        raise ValueError("incompatible kernel operand shapes")
    out_arr = np.empty(N)
    cdef double[::1] out = out_arr
    if N == 0:
        return out_arr
    cdef int pi = <int>p, info = 0, lwork = -1, one = 1
    cdef char job = b'N'
    cdef double wq = 0.0
    cdef double *C = <double*>malloc(na * p * sizeof(double))
    cdef double *Wm = <double*>malloc(p * p * sizeof(double))
    cdef double *H = <double*>malloc(p * p * sizeof(double))
    cdef double *sv = <double*>malloc(p * sizeof(double))
    cdef double *work = NULL
    cdef Py_ssize_t n, a, b, c, e
    cdef double acc, sb
    try:
        dgesvd(&job, &job, &pi, &pi, H, &pi, sv, NULL, &one, NULL, &one, &wq, &lwork, &info)
        lwork = <int>wq + 1
        work = <double*>malloc(lwork * sizeof(double))
        with nogil:
            for n in range(N):
                for a in range(na * p):
                    C[a] = 0.0
                for b in range(nb):
                    sb = S[n, b]
                    if sb != 0.0:
                        for a in range(na):
                            for c in range(p):
                                C[a * p + c] += sb * T[a, b, c]
                for c in range(p):
                    for e in range(c, p):
                        acc = 0.0
                        for a in range(na):
                            acc += C[a * p + c] * C[a * p + e]
                        Wm[c * p + e] = acc
                        Wm[e * p + c] = acc
                # H = G Wm; storage order is irrelevant for singular values
                for c in range(p):
                    for e in range(p):
                        acc = 0.0
                        for a in range(p):
                            acc += G[c, a] * Wm[a * p + e]
                        H[c * p + e] = acc
                dgesvd(&job, &job, &pi, &pi, H, &pi, sv, NULL, &one, NULL, &one,
                       work, &lwork, &info)
                out[n] = sv[0] if info == 0 else -1.0
    finally:
        free(C)
        free(Wm)
        free(H)
        free(sv)
        free(work)
    if np.any(out_arr < 0):
        raise ArithmeticError("singular value decomposition did not converge")
    return out_arr
