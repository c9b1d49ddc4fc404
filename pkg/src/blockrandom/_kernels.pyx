# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Fused in-place optimizer updates over flat float64 buffers.

Operation order matches ``_kernels_py`` exactly; build without fast-math or
FMA contraction so both backends round identically.
"""
from libc.math cimport sqrt


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double eta, double beta1, double beta2, double c1, double c2, double eps):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double a1 = 1.0 - beta1
    cdef double a2 = 1.0 - beta2
    cdef double gi, mi, vi
    if g.shape[0] != n or m.shape[0] != n or v.shape[0] != n:
        raise ValueError("buffer lengths differ")
    with nogil:
        for i in range(n):
            gi = g[i]
            mi = beta1 * m[i] + a1 * gi
            vi = beta2 * v[i] + a2 * (gi * gi)
            m[i] = mi
            v[i] = vi
            p[i] = p[i] - eta * (mi / c1) / (sqrt(vi / c2) + eps)


def sgd_update(double[::1] p, const double[::1] g, double eta):
    cdef Py_ssize_t i, n = p.shape[0]
    if g.shape[0] != n:
        raise ValueError("buffer lengths differ")
    with nogil:
        for i in range(n):
            p[i] = p[i] - eta * g[i]
