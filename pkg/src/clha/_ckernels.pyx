# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the tabular language-model kernels.

Same signatures and parameter layout as ``_pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


cdef inline Py_ssize_t _row(const long long[::1] seq, Py_ssize_t pos,
                            Py_ssize_t V, Py_ssize_t C, Py_ssize_t R) noexcept nogil:
    cdef Py_ssize_t base = V + 1, mult = 1, row = 0, c, p
    for c in range(C):
        p = pos - c - 1
        if p >= 0:
            row += (seq[p] + 1) * mult
        mult *= base
    return row % R


cdef inline double _lse(const double[::1] params, Py_ssize_t off,
                        Py_ssize_t boff, Py_ssize_t V) noexcept nogil:
    cdef double m = params[off] + params[boff], z, s = 0.0
    cdef Py_ssize_t v
    for v in range(1, V):
        z = params[off + v] + params[boff + v]
        if z > m:
            m = z
    for v in range(V):
        s += exp(params[off + v] + params[boff + v] - m)
    return m + log(s)


def context_rows(seq, Py_ssize_t start, Py_ssize_t V, Py_ssize_t C, Py_ssize_t R):
    cdef const long long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], k
    out = np.empty(n - start, dtype=np.int64)
    cdef long long[::1] o = out
    for k in range(start, n):
        o[k - start] = _row(s, k, V, C, R)
    return out


def token_logprobs(const double[::1] params, Py_ssize_t V, Py_ssize_t C,
                   Py_ssize_t R, seq, Py_ssize_t start):
    cdef const long long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], k, off, boff = R * V
    out = np.empty(n - start, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(start, n):
            off = _row(s, k, V, C, R) * V
            o[k - start] = params[off + s[k]] + params[boff + s[k]] - _lse(params, off, boff, V)
    return out


def accumulate_grad(double[::1] grad, const double[::1] params, Py_ssize_t V,
                    Py_ssize_t C, Py_ssize_t R, seq, Py_ssize_t start, double scale):
    if scale == 0.0:
        return
    cdef const long long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], k, v, off, boff = R * V
    cdef double lse, d
    with nogil:
        for k in range(start, n):
            off = _row(s, k, V, C, R) * V
            lse = _lse(params, off, boff, V)
            for v in range(V):
                d = -exp(params[off + v] + params[boff + v] - lse)
                if v == s[k]:
                    d += 1.0
                grad[off + v] += scale * d
                grad[boff + v] += scale * d


def next_token_probs(const double[::1] params, Py_ssize_t V, Py_ssize_t C,
                     Py_ssize_t R, seq):
    cdef const long long[::1] s = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], v, boff = R * V
    cdef Py_ssize_t off = _row(s, n, V, C, R) * V
    cdef double lse = _lse(params, off, boff, V)
    out = np.empty(V, dtype=np.float64)
    cdef double[::1] o = out
    for v in range(V):
        o[v] = exp(params[off + v] + params[boff + v] - lse)
    return out
