# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loss/gradient kernels; drop-in twin of ``pykernels``.

Same contracts as the pure backend: weighted cross-entropy loss and its
exact gradient over a flat parameter vector.  Results agree with the
NumPy backend to floating-point roundoff (summation order differs).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

ctypedef cnp.int64_t itype


def softmax_xent(double[::1] theta, double[:, ::1] x, itype[::1] y,
                 double[::1] sample_w, Py_ssize_t in_dim, Py_ssize_t n_classes):
    """Weighted cross-entropy and gradient for a linear softmax classifier."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nw = in_dim * n_classes
    cdef cnp.ndarray grad_arr = np.zeros(theta.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef cnp.ndarray zbuf = np.empty(n_classes, dtype=np.float64)
    cdef double[::1] z = zbuf

    cdef double loss = 0.0
    cdef Py_ssize_t i, c, d
    cdef double m, s, wi, g, xv, zy
    for i in range(n):
        for c in range(n_classes):
            z[c] = theta[nw + c]
        for d in range(in_dim):
            xv = x[i, d]
            for c in range(n_classes):
                z[c] += xv * theta[d * n_classes + c]
        m = z[0]
        for c in range(1, n_classes):
            if z[c] > m:
                m = z[c]
        zy = z[y[i]]
        s = 0.0
        for c in range(n_classes):
            z[c] = exp(z[c] - m)
            s += z[c]
        wi = sample_w[i]
        loss += wi * (log(s) + m - zy)
        for c in range(n_classes):
            g = z[c] / s
            if c == y[i]:
                g -= 1.0
            z[c] = wi * g
            grad[nw + c] += z[c]
        for d in range(in_dim):
            xv = x[i, d]
            for c in range(n_classes):
                grad[d * n_classes + c] += xv * z[c]
    return loss, grad_arr


def mlp_tanh_xent(double[::1] theta, double[:, ::1] x, itype[::1] y,
                  double[::1] sample_w, Py_ssize_t in_dim, Py_ssize_t hidden,
                  Py_ssize_t n_classes):
    """Weighted cross-entropy and gradient for a one-hidden-layer tanh MLP."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t o1 = in_dim * hidden
    cdef Py_ssize_t o2 = o1 + hidden
    cdef Py_ssize_t o3 = o2 + hidden * n_classes
    cdef cnp.ndarray grad_arr = np.zeros(theta.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef cnp.ndarray hbuf = np.empty(hidden, dtype=np.float64)
    cdef cnp.ndarray zbuf = np.empty(n_classes, dtype=np.float64)
    cdef cnp.ndarray dabuf = np.empty(hidden, dtype=np.float64)
    cdef double[::1] h = hbuf
    cdef double[::1] z = zbuf
    cdef double[::1] da = dabuf

    cdef double loss = 0.0
    cdef Py_ssize_t i, c, d, k
    cdef double m, s, wi, g, xv, acc, zy
    for i in range(n):
        for k in range(hidden):
            acc = theta[o1 + k]
            for d in range(in_dim):
                acc += x[i, d] * theta[d * hidden + k]
            h[k] = tanh(acc)
        for c in range(n_classes):
            acc = theta[o3 + c]
            for k in range(hidden):
                acc += h[k] * theta[o2 + k * n_classes + c]
            z[c] = acc
        m = z[0]
        for c in range(1, n_classes):
            if z[c] > m:
                m = z[c]
        zy = z[y[i]]
        s = 0.0
        for c in range(n_classes):
            z[c] = exp(z[c] - m)
            s += z[c]
        wi = sample_w[i]
        loss += wi * (log(s) + m - zy)
        # z becomes the weighted output delta
        for c in range(n_classes):
            g = z[c] / s
            if c == y[i]:
                g -= 1.0
            z[c] = wi * g
            grad[o3 + c] += z[c]
        for k in range(hidden):
            acc = 0.0
            for c in range(n_classes):
                grad[o2 + k * n_classes + c] += h[k] * z[c]
                acc += z[c] * theta[o2 + k * n_classes + c]
            da[k] = acc * (1.0 - h[k] * h[k])
            grad[o1 + k] += da[k]
        for d in range(in_dim):
            xv = x[i, d]
            for k in range(hidden):
                grad[d * hidden + k] += xv * da[k]
    return loss, grad_arr
