# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels.

Same contracts as robod._kernels_py (the reference backend); matrix products
go through BLAS dgemm and all elementwise work is fused into single passes.
See _kernels_py for the layout conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

ACT_IDENTITY = 0
ACT_LEAKY_RELU = 1
ACT_SIGMOID = 2
ACT_RELU = 3

NAME = "c"


cdef inline double _phi(double x, int act, double slope) nogil:
    # activation codes: 0 identity, 1 leaky relu, 2 sigmoid, 3 relu
    cdef double e
    if act == 0:
        return x
    if act == 1:
        return x if x > 0.0 else slope * x
    if act == 2:
        if x >= 0.0:
            return 1.0 / (1.0 + exp(-x))
        e = exp(x)
        return e / (1.0 + e)
    return x if x > 0.0 else 0.0


cdef inline double _phi_grad_from_out(double o, int act, double slope) nogil:
    if act == 0:
        return 1.0
    if act == 1:
        return 1.0 if o > 0.0 else slope
    if act == 2:
        return o * (1.0 - o)
    return 1.0 if o > 0.0 else 0.0


cdef void _gemm(char transa, char transb, int m, int n, int k,
                double alpha, const double *a, int lda, const double *b,
                int ldb, double beta, double *c, int ldc) nogil:
    # thin wrapper so call sites read in (row-major) math order; BLAS never
    # writes through a or b, the const casts only bridge its old signature
    if m == 0 or n == 0:
        return
    dgemm(&transa, &transb, &m, &n, &k, &alpha, <double*>a, &lda,
          <double*>b, &ldb, &beta, c, &ldc)


cdef void _matmul_nn(const double[:, ::1] a, const double[:, ::1] b,
                     double[:, ::1] c, double beta) nogil:
    # c (n,r) = a (n,m) @ b (m,r) + beta*c, row-major buffers.
    # In column-major terms: C^T = B^T A^T, and each row-major buffer *is*
    # its own transpose when read column-major.
    cdef int n = <int>a.shape[0], m = <int>a.shape[1], r = <int>b.shape[1]
    if m == 0:
        return
    _gemm(b'N', b'N', r, n, m, 1.0, &b[0, 0], r, &a[0, 0], m, beta,
          &c[0, 0], r)


def act_apply(pre, int act, double slope):
    pre_c = np.ascontiguousarray(pre, dtype=np.float64)
    out_arr = np.empty(pre_c.shape, dtype=np.float64)
    cdef const double[::1] src = pre_c.ravel()
    cdef double[::1] dst = out_arr.ravel()
    cdef Py_ssize_t i, n = src.shape[0]
    with nogil:
        for i in range(n):
            dst[i] = _phi(src[i], act, slope)
    return out_arr


def act_grad_from_output(out, int act, double slope):
    out_c = np.ascontiguousarray(out, dtype=np.float64)
    g_arr = np.empty(out_c.shape, dtype=np.float64)
    cdef const double[::1] src = out_c.ravel()
    cdef double[::1] dst = g_arr.ravel()
    cdef Py_ssize_t i, n = src.shape[0]
    with nogil:
        for i in range(n):
            dst[i] = _phi_grad_from_out(src[i], act, slope)
    return g_arr


def be_forward(const double[:, ::1] x, const double[:, ::1] w,
               const double[:, ::1] s, const double[:, ::1] r_eff,
               const double[:, ::1] b_eff, int n_members, int act,
               double slope):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], r = w.shape[1]
    cdef Py_ssize_t b = n // n_members
    xs_arr = np.empty((n, m), dtype=np.float64)
    y_arr = np.empty((n, r), dtype=np.float64)
    out_arr = np.empty((n, r), dtype=np.float64)
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, j, k
    cdef double pre
    with nogil:
        for t in range(n):
            k = t // b
            for j in range(m):
                xs[t, j] = x[t, j] * s[k, j]
        _matmul_nn(xs, w, y, 0.0)
        for t in range(n):
            k = t // b
            for j in range(r):
                pre = y[t, j] * r_eff[k, j] + b_eff[k, j]
                out[t, j] = _phi(pre, act, slope)
    return out_arr, xs_arr, y_arr


def be_backward(const double[:, ::1] gout, const double[:, ::1] out,
                const double[:, ::1] y, const double[:, ::1] xs,
                const double[:, ::1] x, const double[:, ::1] w,
                const double[:, ::1] s, const double[:, ::1] r_eff,
                const double[:, ::1] mask, int n_members, int act,
                double slope):
    cdef Py_ssize_t n = gout.shape[0], r = gout.shape[1], m = x.shape[1]
    cdef Py_ssize_t b = n // n_members
    gx_arr = np.empty((n, m), dtype=np.float64)
    gw_arr = np.empty((m, r), dtype=np.float64)
    gs_arr = np.zeros((n_members, m), dtype=np.float64)
    gr_arr = np.zeros((n_members, r), dtype=np.float64)
    gb_arr = np.zeros((n_members, r), dtype=np.float64)
    gy_arr = np.empty((n, r), dtype=np.float64)
    gxs_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr, gw = gw_arr, gs = gs_arr
    cdef double[:, ::1] gr = gr_arr, gb = gb_arr
    cdef double[:, ::1] gy = gy_arr, gxs = gxs_arr
    cdef Py_ssize_t t, j, k
    cdef double gp
    with nogil:
        # gpre = gout * phi'(out); fold gr/gb sums and gy in one pass
        for t in range(n):
            k = t // b
            for j in range(r):
                gp = gout[t, j] * _phi_grad_from_out(out[t, j], act, slope)
                gb[k, j] += gp
                gr[k, j] += gp * y[t, j]
                gy[t, j] = gp * r_eff[k, j]
        for k in range(n_members):
            for j in range(r):
                gb[k, j] *= mask[k, j]
                gr[k, j] *= mask[k, j]
        # gw = xs^T @ gy  (row-major: gw^T = gy^T @ xs, both buffers direct)
        _gemm(b'N', b'T', <int>r, <int>m, <int>n, 1.0,
              &gy[0, 0], <int>r, &xs[0, 0], <int>m, 0.0, &gw[0, 0], <int>r)
        # gxs = gy @ w^T  (row-major: gxs^T = w @ gy^T)
        _gemm(b'T', b'N', <int>m, <int>n, <int>r, 1.0,
              &w[0, 0], <int>r, &gy[0, 0], <int>r, 0.0, &gxs[0, 0], <int>m)
        for t in range(n):
            k = t // b
            for j in range(m):
                gs[k, j] += gxs[t, j] * x[t, j]
                gx[t, j] = gxs[t, j] * s[k, j]
    return gx_arr, gw_arr, gs_arr, gr_arr, gb_arr


def adam_update(double[::1] p, const double[::1] g, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double eps, double weight_decay, double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi
    with nogil:
        for i in range(n):
            gi = g[i] + weight_decay * p[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
            p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)


def rowwise_sqerr(const double[:, ::1] x, const double[:, ::1] xhat):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t t, j
    cdef double acc, diff
    with nogil:
        for t in range(n):
            acc = 0.0
            for j in range(d):
                diff = x[t, j] - xhat[t, j]
                acc += diff * diff
            out[t] = acc
    return out_arr


def dropout_mask_apply(const double[:, ::1] x, const double[:, ::1] u,
                       double rate):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out_arr = np.empty((n, d), dtype=np.float64)
    scale_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] scale = scale_arr
    cdef double inv = 1.0 / (1.0 - rate)
    cdef Py_ssize_t t, j
    with nogil:
        for t in range(n):
            for j in range(d):
                if u[t, j] >= rate:
                    scale[t, j] = inv
                    out[t, j] = x[t, j] * inv
                else:
                    scale[t, j] = 0.0
                    out[t, j] = 0.0
    return out_arr, scale_arr
