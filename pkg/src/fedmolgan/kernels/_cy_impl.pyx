# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel implementations: typed loops + BLAS GEMM.

Cheap memory-bound reshapes are delegated to the numpy backend; everything on
the per-op hot path is a typed loop to cut dispatch overhead on the small
tensors this engine runs on.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expf, sqrt as csqrt, sqrtf
from scipy.linalg.cython_blas cimport dgemm, sgemm

from . import _py_impl

cnp.import_array()

ctypedef fused floating:
    float
    double

cdef extern from *:
    """
    static inline long long fmg_popcnt64(unsigned long long x) {
        return __builtin_popcountll(x);
    }
    """
    long long fmg_popcnt64(unsigned long long x) nogil


transpose_last2 = _py_impl.transpose_last2
tile_last = _py_impl.tile_last

# numpy's SIMD libm beats scalar loops for these; delegation is the win.
tanh = _py_impl.tanh
sigmoid = _py_impl.sigmoid
log = _py_impl.log


def _gemm2d(floating[:, ::1] a, floating[:, ::1] b, floating[:, ::1] c):
    # Row-major C = A @ B via column-major BLAS: C^T = B^T @ A^T.
    cdef int m = <int> a.shape[0]
    cdef int k = <int> a.shape[1]
    cdef int n = <int> b.shape[1]
    cdef floating alpha = 1
    cdef floating beta = 0
    cdef char trans = b'N'
    if m == 0 or n == 0:
        return
    if k == 0:
        c[:, :] = 0
        return
    if floating is float:
        sgemm(&trans, &trans, &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k, &beta, &c[0, 0], &n)
    else:
        dgemm(&trans, &trans, &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k, &beta, &c[0, 0], &n)


def matmul(a, b):
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    _gemm2d(a, b, out)
    return out


def bmm(a, b):
    cdef Py_ssize_t i
    out = np.empty((a.shape[0], a.shape[1], b.shape[2]), dtype=a.dtype)
    for i in range(a.shape[0]):
        _gemm2d(a[i], b[i], out[i])
    return out


def _add1(floating[::1] x, floating[::1] y, floating[::1] o):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        o[i] = x[i] + y[i]


def _sub1(floating[::1] x, floating[::1] y, floating[::1] o):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        o[i] = x[i] - y[i]


def _mul1(floating[::1] x, floating[::1] y, floating[::1] o):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        o[i] = x[i] * y[i]


def _div1(floating[::1] x, floating[::1] y, floating[::1] o):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        o[i] = x[i] / y[i]


def add(a, b):
    out = np.empty_like(a)
    _add1(a.reshape(-1), b.reshape(-1), out.reshape(-1))
    return out


def sub(a, b):
    out = np.empty_like(a)
    _sub1(a.reshape(-1), b.reshape(-1), out.reshape(-1))
    return out


def mul(a, b):
    out = np.empty_like(a)
    _mul1(a.reshape(-1), b.reshape(-1), out.reshape(-1))
    return out


def div(a, b):
    out = np.empty_like(a)
    _div1(a.reshape(-1), b.reshape(-1), out.reshape(-1))
    return out


def _add_bias2(floating[:, ::1] x, floating[::1] b, floating[:, ::1] o):
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            o[i, j] = x[i, j] + b[j]


def add_bias(x, b):
    out = np.empty_like(x)
    d = x.shape[x.ndim - 1]
    _add_bias2(x.reshape(-1, d), b, out.reshape(-1, d))
    return out


def _scale1(floating[::1] x, double c, floating[::1] o):
    cdef Py_ssize_t i
    cdef floating cc = <floating> c
    for i in range(x.shape[0]):
        o[i] = x[i] * cc


def scale(x, c):
    out = np.empty_like(x)
    _scale1(x.reshape(-1), c, out.reshape(-1))
    return out


def _add_scalar1(floating[::1] x, double c, floating[::1] o):
    cdef Py_ssize_t i
    cdef floating cc = <floating> c
    for i in range(x.shape[0]):
        o[i] = x[i] + cc


def add_scalar(x, c):
    out = np.empty_like(x)
    _add_scalar1(x.reshape(-1), c, out.reshape(-1))
    return out






def _softmax2(floating[:, ::1] x, floating[:, ::1] o):
    cdef Py_ssize_t i, j
    cdef floating m, s
    for i in range(x.shape[0]):
        m = x[i, 0]
        for j in range(1, x.shape[1]):
            if x[i, j] > m:
                m = x[i, j]
        s = 0
        for j in range(x.shape[1]):
            if floating is float:
                o[i, j] = expf(x[i, j] - m)
            else:
                o[i, j] = exp(x[i, j] - m)
            s += o[i, j]
        for j in range(x.shape[1]):
            o[i, j] /= s
    return None


def softmax_last(x):
    out = np.empty_like(x)
    d = x.shape[x.ndim - 1]
    _softmax2(x.reshape(-1, d), out.reshape(-1, d))
    return out


def _sum1(floating[::1] x):
    cdef Py_ssize_t i
    cdef floating s = 0
    for i in range(x.shape[0]):
        s += x[i]
    return s


def sum_all(x):
    return np.asarray(_sum1(x.reshape(-1)), dtype=x.dtype)


def _sum_last2(floating[:, ::1] x, floating[::1] o):
    cdef Py_ssize_t i, j
    cdef floating s
    for i in range(x.shape[0]):
        s = 0
        for j in range(x.shape[1]):
            s += x[i, j]
        o[i] = s


def sum_last(x):
    d = x.shape[x.ndim - 1]
    out = np.empty(x.shape[:-1] + (1,), dtype=x.dtype)
    _sum_last2(x.reshape(-1, d), out.reshape(-1))
    return out


def _clip_min1(floating[::1] x, double c, floating[::1] o):
    cdef Py_ssize_t i
    cdef floating cc = <floating> c
    for i in range(x.shape[0]):
        o[i] = x[i] if x[i] > cc else cc


def clip_min(x, c):
    out = np.empty_like(x)
    _clip_min1(x.reshape(-1), c, out.reshape(-1))
    return out


def _square1(floating[::1] x, floating[::1] o):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        o[i] = x[i] * x[i]


def square(x):
    out = np.empty_like(x)
    _square1(x.reshape(-1), out.reshape(-1))
    return out


def _sqrt1(floating[::1] x, floating[::1] o):
    cdef Py_ssize_t i
    if floating is float:
        for i in range(x.shape[0]):
            o[i] = sqrtf(x[i])
    else:
        for i in range(x.shape[0]):
            o[i] = csqrt(x[i])


def sqrt(x):
    out = np.empty_like(x)
    _sqrt1(x.reshape(-1), out.reshape(-1))
    return out




def _argmax_onehot2(floating[:, ::1] x, floating[:, ::1] o):
    cdef Py_ssize_t i, j, best
    for i in range(x.shape[0]):
        best = 0
        for j in range(1, x.shape[1]):
            if x[i, j] > x[i, best]:
                best = j
        for j in range(x.shape[1]):
            o[i, j] = 0
        o[i, best] = 1


def argmax_onehot_last(x):
    out = np.empty_like(x)
    d = x.shape[x.ndim - 1]
    _argmax_onehot2(x.reshape(-1, d), out.reshape(-1, d))
    return out


def pair_intersect_counts(cnp.uint64_t[:, ::1] a, cnp.uint64_t[:, ::1] b):
    cdef Py_ssize_t i, j, w
    cdef long long s
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    with nogil:
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                s = 0
                for w in range(a.shape[1]):
                    s += fmg_popcnt64(a[i, w] & b[j, w])
                o[i, j] = s
    return out


def popcount_rows(cnp.uint64_t[:, ::1] a):
    cdef Py_ssize_t i, w
    cdef long long s
    out = np.empty(a.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    for i in range(a.shape[0]):
        s = 0
        for w in range(a.shape[1]):
            s += fmg_popcnt64(a[i, w])
        o[i] = s
    return out
