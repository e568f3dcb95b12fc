# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused float32 kernels for the hot elementwise/row operations.

Every function here has a formula-identical twin in ``_numpy_kernels``;
the dispatcher in ``kernels`` picks between them. Loops are written
branch-light over contiguous memoryviews so the C compiler can vectorize
them (including the expf/tanhf calls, via libmvec under -ffast-math).
"""

import numpy as np

cimport cython
from libc.math cimport expf, fabsf, sqrtf, tanhf

cdef float GELU_C = <float> 0.7978845608028654
cdef float GELU_A = <float> 0.044715
cdef float HALF = <float> 0.5
cdef float ONE = <float> 1.0
cdef float THREE = <float> 3.0


def gelu_fwd(const float[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i
    cdef float xi, u
    with nogil:
        for i in range(n):
            xi = x[i]
            u = GELU_C * (xi + GELU_A * xi * xi * xi)
            out[i] = HALF * xi * (ONE + tanhf(u))
    return out_arr


def gelu_bwd(const float[::1] x, const float[::1] dy):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i
    cdef float xi, u, t, du
    with nogil:
        for i in range(n):
            xi = x[i]
            u = GELU_C * (xi + GELU_A * xi * xi * xi)
            t = tanhf(u)
            du = GELU_C * (ONE + THREE * GELU_A * xi * xi)
            out[i] = dy[i] * (HALF * (ONE + t) + HALF * xi * (ONE - t * t) * du)
    return out_arr


def sigmoid_fwd(const float[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i
    cdef float e, low
    with nogil:
        for i in range(n):
            e = expf(-fabsf(x[i]))
            low = e / (ONE + e)
            out[i] = low if x[i] < <float> 0.0 else ONE - low
    return out_arr


def sigmoid_bwd(const float[::1] y, const float[::1] dy):
    cdef Py_ssize_t n = y.shape[0]
    out_arr = np.empty(n, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = dy[i] * y[i] * (ONE - y[i])
    return out_arr


def softmax_fwd(const float[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t r, c
    cdef float m, s, inv
    with nogil:
        for r in range(rows):
            m = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > m:
                    m = x[r, c]
            s = <float> 0.0
            for c in range(cols):
                out[r, c] = expf(x[r, c] - m)
                s += out[r, c]
            inv = ONE / s
            for c in range(cols):
                out[r, c] *= inv
    return out_arr


def softmax_bwd(const float[:, ::1] y, const float[:, ::1] dy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t r, c
    cdef float inner
    with nogil:
        for r in range(rows):
            inner = <float> 0.0
            for c in range(cols):
                inner += dy[r, c] * y[r, c]
            for c in range(cols):
                out[r, c] = (dy[r, c] - inner) * y[r, c]
    return out_arr


def layernorm_fwd(const float[:, ::1] x, const float[::1] gain,
                  const float[::1] bias, double eps):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.float32)
    mean_arr = np.empty(rows, dtype=np.float32)
    rstd_arr = np.empty(rows, dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef float[::1] mean = mean_arr
    cdef float[::1] rstd = rstd_arr
    cdef Py_ssize_t r, c
    cdef double acc, var
    cdef float mu, rs, d
    cdef float feps = <float> eps
    with nogil:
        for r in range(rows):
            acc = 0.0
            for c in range(cols):
                acc += x[r, c]
            mu = <float> (acc / cols)
            var = 0.0
            for c in range(cols):
                d = x[r, c] - mu
                var += d * d
            rs = ONE / sqrtf(<float> (var / cols) + feps)
            mean[r] = mu
            rstd[r] = rs
            for c in range(cols):
                out[r, c] = (x[r, c] - mu) * rs * gain[c] + bias[c]
    return out_arr, mean_arr, rstd_arr


def layernorm_bwd(const float[:, ::1] dy, const float[:, ::1] x,
                  const float[::1] mean, const float[::1] rstd,
                  const float[::1] gain):
    cdef Py_ssize_t rows = dy.shape[0], cols = dy.shape[1]
    dx_arr = np.empty((rows, cols), dtype=np.float32)
    dgain_arr = np.zeros(cols, dtype=np.float64)
    dbias_arr = np.zeros(cols, dtype=np.float64)
    cdef float[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    cdef Py_ssize_t r, c
    cdef double m1, m2
    cdef float xhat, dxhat, mu, rs, fm1, fm2
    with nogil:
        for r in range(rows):
            mu = mean[r]
            rs = rstd[r]
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                xhat = (x[r, c] - mu) * rs
                dxhat = dy[r, c] * gain[c]
                m1 += dxhat
                m2 += dxhat * xhat
                dgain[c] += dy[r, c] * xhat
                dbias[c] += dy[r, c]
            fm1 = <float> (m1 / cols)
            fm2 = <float> (m2 / cols)
            for c in range(cols):
                xhat = (x[r, c] - mu) * rs
                dxhat = dy[r, c] * gain[c]
                dx[r, c] = (dxhat - fm1 - xhat * fm2) * rs
    return dx_arr, dgain_arr.astype(np.float32), dbias_arr.astype(np.float32)


def adam_update(float[::1] param, const float[::1] grad,
                float[::1] m, float[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    cdef float fb1 = <float> beta1, fb2 = <float> beta2
    cdef float c1 = <float> (1.0 - beta1), c2 = <float> (1.0 - beta2)
    cdef float flr = <float> lr, feps = <float> eps
    cdef float fbc1 = <float> bc1, fbc2 = <float> bc2
    cdef float g, mh, vh
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = fb1 * m[i] + c1 * g
            v[i] = fb2 * v[i] + c2 * g * g
            mh = m[i] / fbc1
            vh = v[i] / fbc2
            param[i] -= flr * mh / (sqrtf(vh) + feps)
