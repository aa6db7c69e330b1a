# cython: language_level=3
"""Compiled versions of the kernels in ``_fallback``.

Loops are written over row pairs so no N x N x s temporaries are formed and
squared distances are exact (no ``|a|^2 + |b|^2 - 2ab`` cancellation). When
both arguments are the same buffer only the upper triangle is computed.
Dense products go through BLAS.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm, dgemv

cnp.import_array()


cdef bint _same(const double[:, ::1] A, const double[:, ::1] B) noexcept:
    return A.shape[0] == B.shape[0] and A.shape[0] > 0 and &A[0, 0] == &B[0, 0]


cdef void _sqdist(const double[:, ::1] A, const double[:, ::1] B, double[:, ::1] o,
                  bint sym) noexcept nogil:
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, k, c, k0
    cdef double acc, t
    for i in range(n):
        k0 = i if sym else 0
        for k in range(k0, m):
            acc = 0.0
            for c in range(d):
                t = A[i, c] - B[k, c]
                acc = acc + t * t
            o[i, k] = acc
            if sym:
                o[k, i] = acc


def sqdist(const double[:, ::1] A, const double[:, ::1] B):
    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef bint sym = _same(A, B)
    with nogil:
        _sqdist(A, B, o, sym)
    return out


def rbf_gram(const double[:, ::1] A, const double[:, ::1] B, double sigma2):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0]
    cdef Py_ssize_t i, k, k0
    cdef double scale = -0.5 / sigma2
    cdef bint sym = _same(A, B)
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _sqdist(A, B, o, sym)
        for i in range(n):
            k0 = i if sym else 0
            for k in range(k0, m):
                o[i, k] = exp(scale * o[i, k])
                if sym:
                    o[k, i] = o[i, k]
    return out


def rbf_coupling(const double[:, ::1] H, const double[:, ::1] H_next, double sigma2):
    # A = (H_next H_next^T) * K(H) / sigma2, then out = A H - rowsum(A) H
    cdef int n = <int>H.shape[0], s = <int>H.shape[1], t = <int>H_next.shape[1]
    cdef Py_ssize_t i, k, c
    cdef double d2, diff, rs
    cdef double scale = -0.5 / sigma2
    cdef double inv = 1.0 / sigma2, zero = 0.0, one = 1.0
    cdef char *tr_n = b"N"
    cdef char *tr_t = b"T"
    out = np.zeros((n, s), dtype=np.float64)
    if n == 0 or s == 0:
        return out
    Am = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] A = Am
    with nogil:
        if t > 0:
            # row-major H_next H_next^T == column-major (H_next^T)^T H_next^T
            dgemm(tr_t, tr_n, &n, &n, &t, &inv, <double *>&H_next[0, 0], &t,
                  <double *>&H_next[0, 0], &t, &zero, &A[0, 0], &n)
        for i in range(n):
            A[i, i] = 0.0
            for k in range(i + 1, n):
                d2 = 0.0
                for c in range(s):
                    diff = H[i, c] - H[k, c]
                    d2 = d2 + diff * diff
                A[i, k] = A[i, k] * exp(scale * d2)
                A[k, i] = A[i, k]
        for i in range(n):
            rs = 0.0
            for k in range(n):
                rs = rs + A[i, k]
            for c in range(s):
                o[i, c] = -rs * H[i, c]
        # out += A H  (A symmetric, so the column-major view needs no transpose)
        dgemm(tr_n, tr_n, &s, &n, &n, &one, <double *>&H[0, 0], &s,
              &A[0, 0], &n, &one, &o[0, 0], &s)
    return out


def pair_diff_contract(const double[:, ::1] W, const double[:, ::1] H):
    cdef int n = <int>W.shape[0], s = <int>H.shape[1], inc = 1
    cdef Py_ssize_t a, c
    cdef double one = 1.0, zero = 0.0, minus = -1.0
    cdef char *tn = b"N"
    cdef char *tt = b"T"
    out = np.zeros((n, s), dtype=np.float64)
    if n == 0 or s == 0:
        return out
    ones = np.ones(n, dtype=np.float64)
    sums = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] e = ones, rs = sums
    with nogil:
        # row sums W @ 1; row-major W is column-major W^T
        dgemv(tt, &n, &n, &one, <double *>&W[0, 0], &n, &e[0], &inc, &zero, &rs[0], &inc)
        for a in range(n):
            for c in range(s):
                o[a, c] = rs[a] * H[a, c]
        # row-major out -= W @ H, i.e. column-major out^T -= H^T W^T
        dgemm(tn, tn, &s, &n, &n, &minus, <double *>&H[0, 0], &s,
              <double *>&W[0, 0], &n, &one, &o[0, 0], &s)
    return out
    with nogil:
        for a in range(n):
            rs = 0.0
            for k in range(n):
                rs = rs + W[a, k]
            for c in range(s):
                o[a, c] = rs * H[a, c]
        # row-major out -= W @ H, i.e. column-major out^T -= H^T W^T
        dgemm(tr, tr, &s, &n, &n, &minus, <double *>&H[0, 0], &s,
              <double *>&W[0, 0], &n, &one, &o[0, 0], &s)
    return out
