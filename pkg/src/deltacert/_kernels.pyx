# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels.

Each routine works on a stack of small dense matrices (leading axis = sample
index) and mirrors a function of the same name in ``_kernels_py``.
Eigenvalues come from a cyclic Jacobi sweep, which keeps full relative accuracy
for the tiny symmetric matrices seen here (k <= 16).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF MAX_SWEEPS = 60


cdef void _jacobi_extremes(double* a, Py_ssize_t k, double* lo, double* hi) noexcept nogil:
    # a is a k*k row-major scratch copy; destroyed on return
    cdef Py_ssize_t p, q, r, sweep
    cdef double off, frob, apq, app, aqq, theta, t, c, s, arp, arq
    cdef double vmin, vmax
    frob = 0.0
    for p in range(k * k):
        frob += a[p] * a[p]
    for sweep in range(MAX_SWEEPS):
        off = 0.0
        for p in range(k):
            for q in range(p + 1, k):
                off += a[p * k + q] * a[p * k + q]
        if off <= 1e-32 * frob or off == 0.0:
            break
        for p in range(k):
            for q in range(p + 1, k):
                apq = a[p * k + q]
                if apq == 0.0:
                    continue
                app = a[p * k + p]
                aqq = a[q * k + q]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for r in range(k):
                    if r == p or r == q:
                        continue
                    arp = a[r * k + p]
                    arq = a[r * k + q]
                    a[r * k + p] = c * arp - s * arq
                    a[p * k + r] = a[r * k + p]
                    a[r * k + q] = s * arp + c * arq
                    a[q * k + r] = a[r * k + q]
                a[p * k + p] = app - t * apq
                a[q * k + q] = aqq + t * apq
                a[p * k + q] = 0.0
                a[q * k + p] = 0.0
    vmin = a[0]
    vmax = a[0]
    for p in range(1, k):
        if a[p * k + p] < vmin:
            vmin = a[p * k + p]
        if a[p * k + p] > vmax:
            vmax = a[p * k + p]
    lo[0] = vmin
    hi[0] = vmax


def extreme_eigs(const double[:, :, ::1] mats):
    """Smallest and largest eigenvalue of each symmetric matrix, shape (N, 2)."""
    cdef Py_ssize_t n = mats.shape[0], k = mats.shape[1], i, j, l
    out_np = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef double* work = <double*> malloc(k * k * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(k):
                    for l in range(k):
                        work[j * k + l] = 0.5 * (mats[i, j, l] + mats[i, l, j])
                _jacobi_extremes(work, k, &out[i, 0], &out[i, 1])
    finally:
        free(work)
    return out_np


def krasovskii_lmax(const double[:, :, ::1] jx, const double[:, :, ::1] ju,
                    const double[:, :, ::1] hx, const double[:, :, ::1] hu,
                    const double[:, ::1] p, const double[:, ::1] x, double eps):
    """Largest eigenvalue of the dissipation matrix at every sample."""
    cdef Py_ssize_t N = jx.shape[0], n = jx.shape[1], m = ju.shape[2]
    cdef Py_ssize_t k = n + m, mm = 2 * m
    cdef Py_ssize_t s, i, j, l
    cdef double acc
    out_np = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef double lo
    cdef double* q = <double*> malloc(k * k * sizeof(double))
    cdef double* t = <double*> malloc(mm * k * sizeof(double))
    cdef double* xt = <double*> malloc(mm * k * sizeof(double))
    if q == NULL or t == NULL or xt == NULL:
        free(q); free(t); free(xt)
        raise MemoryError()
    try:
        with nogil:
            for s in range(N):
                # T = [[0, I], [Hx, Hu]]
                for i in range(mm * k):
                    t[i] = 0.0
                for i in range(m):
                    t[i * k + n + i] = 1.0
                    for j in range(n):
                        t[(m + i) * k + j] = hx[s, i, j]
                    for j in range(m):
                        t[(m + i) * k + n + j] = hu[s, i, j]
                for i in range(mm):
                    for j in range(k):
                        acc = 0.0
                        for l in range(mm):
                            acc = acc + x[i, l] * t[l * k + j]
                        xt[i * k + j] = acc
                for i in range(k):
                    for j in range(k):
                        acc = 0.0
                        for l in range(mm):
                            acc = acc + t[l * k + i] * xt[l * k + j]
                        q[i * k + j] = -acc
                for i in range(n):
                    for j in range(n):
                        acc = 0.0
                        for l in range(n):
                            acc = acc + jx[s, l, i] * p[l, j] + p[i, l] * jx[s, l, j]
                        q[i * k + j] += acc
                    q[i * k + i] += eps
                    for j in range(m):
                        acc = 0.0
                        for l in range(n):
                            acc = acc + p[i, l] * ju[s, l, j]
                        q[i * k + n + j] += acc
                        q[(n + j) * k + i] += acc
                for i in range(k):
                    for j in range(i + 1, k):
                        acc = 0.5 * (q[i * k + j] + q[j * k + i])
                        q[i * k + j] = acc
                        q[j * k + i] = acc
                _jacobi_extremes(q, k, &lo, &out[s])
    finally:
        free(q); free(t); free(xt)
    return out_np


def static_lmin(const double[:, :, ::1] hu, const double[:, ::1] x):
    """Smallest eigenvalue of [I; Hu]^T X [I; Hu] at every sample."""
    cdef Py_ssize_t N = hu.shape[0], m = hu.shape[1], mm = 2 * m
    cdef Py_ssize_t s, i, j, l
    cdef double acc, hi
    out_np = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef double* w = <double*> malloc(mm * m * sizeof(double))
    cdef double* xw = <double*> malloc(mm * m * sizeof(double))
    cdef double* r = <double*> malloc(m * m * sizeof(double))
    if w == NULL or xw == NULL or r == NULL:
        free(w); free(xw); free(r)
        raise MemoryError()
    try:
        with nogil:
            for s in range(N):
                for i in range(m):
                    for j in range(m):
                        w[i * m + j] = 1.0 if i == j else 0.0
                        w[(m + i) * m + j] = hu[s, i, j]
                for i in range(mm):
                    for j in range(m):
                        acc = 0.0
                        for l in range(mm):
                            acc = acc + x[i, l] * w[l * m + j]
                        xw[i * m + j] = acc
                for i in range(m):
                    for j in range(m):
                        acc = 0.0
                        for l in range(mm):
                            acc = acc + w[l * m + i] * xw[l * m + j]
                        r[i * m + j] = acc
                for i in range(m):
                    for j in range(i + 1, m):
                        acc = 0.5 * (r[i * m + j] + r[j * m + i])
                        r[i * m + j] = acc
                        r[j * m + i] = acc
                _jacobi_extremes(r, m, &out[s], &hi)
    finally:
        free(w); free(xw); free(r)
    return out_np
