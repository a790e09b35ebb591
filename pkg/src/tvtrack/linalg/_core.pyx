# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: vector primitives, packed Cholesky, fused tick loops.

Same API as ``_fallback``; the package picks whichever imports.
"""

from libc.math cimport sqrt, sin, cos, fabs, isfinite
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

import numpy as np

from tvtrack.errors import NotSPDError

BACKEND = "compiled"


cdef inline double _dot(const double* x, const double* y, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += x[i] * y[i]
    return s


cdef inline double _nrm2(const double* x, Py_ssize_t n) noexcept nogil:
    return sqrt(_dot(x, x, n))


def _as_vec(v, name):
    a = np.ascontiguousarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    return a


def dot(x, y):
    cdef double[::1] xv = _as_vec(x, "x")
    cdef double[::1] yv = _as_vec(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ValueError(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    if xv.shape[0] == 0:
        return 0.0
    return _dot(&xv[0], &yv[0], xv.shape[0])


def axpy(double a, x, y):
    """Return a*x + y."""
    cdef double[::1] xv = _as_vec(x, "x")
    cdef double[::1] yv = _as_vec(y, "y")
    cdef Py_ssize_t n = xv.shape[0], i
    if n != yv.shape[0]:
        raise ValueError(f"length mismatch: {n} vs {yv.shape[0]}")
    out = np.empty(n)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = a * xv[i] + yv[i]
    return out


def norm2(x):
    cdef double[::1] xv = _as_vec(x, "x")
    if xv.shape[0] == 0:
        return 0.0
    return _nrm2(&xv[0], xv.shape[0])


cdef int _chol_packed(double* ap, Py_ssize_t n) noexcept nogil:
    # Row-major packed lower triangle: ap[i*(i+1)/2 + j] = A[i,j], j <= i.
    cdef Py_ssize_t i, j, ri, rj
    cdef double s
    for i in range(n):
        ri = i * (i + 1) // 2
        for j in range(i + 1):
            rj = j * (j + 1) // 2
            s = ap[ri + j] - _dot(ap + ri, ap + rj, j)
            if i == j:
                if s <= 0.0 or not isfinite(s):
                    return <int>(i + 1)
                ap[ri + j] = sqrt(s)
            else:
                ap[ri + j] = s / ap[rj + j]
    return 0


def cholesky_packed(ap, Py_ssize_t n):
    """Factor a packed lower-triangle SPD matrix in place; returns the buffer."""
    a = np.ascontiguousarray(ap, dtype=np.float64)
    if a.shape[0] != n * (n + 1) // 2:
        raise ValueError("packed buffer has wrong length for order n")
    cdef double[::1] av = a
    cdef int bad
    with nogil:
        bad = _chol_packed(&av[0], n)
    if bad:
        raise NotSPDError(f"non-positive pivot at row {bad - 1}")
    return a


cdef void _solve_packed(const double* lp, Py_ssize_t n, double* z) noexcept nogil:
    cdef Py_ssize_t i, j, row
    for i in range(n):  # L w = b
        row = i * (i + 1) // 2
        z[i] = (z[i] - _dot(lp + row, z, i)) / lp[row + i]
    for i in range(n - 1, -1, -1):  # L^T z = w
        row = i * (i + 1) // 2
        z[i] /= lp[row + i]
        for j in range(i):
            z[j] -= lp[row + j] * z[i]


def solve_packed_factored(lp, Py_ssize_t n, b):
    cdef double[::1] lv = _as_vec(lp, "lp")
    z = _as_vec(b, "b").copy()
    cdef double[::1] zv = z
    if zv.shape[0] != n:
        raise ValueError(f"length mismatch: matrix order {n}, rhs {zv.shape[0]}")
    with nogil:
        _solve_packed(&lv[0], n, &zv[0])
    return z


def tracker_alg1_run(x, double a, double omega, double t0, double delta,
                     double alpha, double eps, Py_ssize_t n_ticks):
    """Prediction-update ticks for f = 0.5*||x - a sin(w t) 1||^2, mutating x."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, k
    cdef double t = t0, s, s_next, gn2, gsum, grad_t, coef, gi, t_next
    with nogil:
        for k in range(n_ticks):
            s = a * sin(omega * t)
            gn2 = 0.0
            gsum = 0.0
            for i in range(n):
                gi = xv[i] - s
                gn2 += gi * gi
                gsum += gi
            grad_t = -a * omega * cos(omega * t) * gsum
            if gn2 >= eps * eps:
                coef = delta * fabs(grad_t) / gn2
                for i in range(n):
                    xv[i] -= coef * (xv[i] - s)
            t_next = t0 + (k + 1) * delta
            s_next = a * sin(omega * t_next)
            for i in range(n):
                xv[i] -= alpha * (xv[i] - s_next)
            t = t_next
    return t


def tracker_euler2_run(x, double a, double omega, double t0, double delta,
                       double alpha, Py_ssize_t n_ticks):
    """Second-order-prediction ticks with a dense packed Cholesky per tick."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, k
    ap_arr = np.zeros(n * (n + 1) // 2)
    z_arr = np.empty(n)
    cdef double[::1] ap = ap_arr
    cdef double[::1] z = z_arr
    cdef double t = t0, s_next, gxt, t_next
    cdef int bad = 0
    with nogil:
        for k in range(n_ticks):
            for i in range(ap.shape[0]):
                ap[i] = 0.0
            for i in range(n):
                ap[i * (i + 1) // 2 + i] = 1.0
            gxt = -a * omega * cos(omega * t)
            for i in range(n):
                z[i] = gxt
            bad = _chol_packed(&ap[0], n)
            if bad:
                break
            _solve_packed(&ap[0], n, &z[0])
            for i in range(n):
                xv[i] -= delta * z[i]
            t_next = t0 + (k + 1) * delta
            s_next = a * sin(omega * t_next)
            for i in range(n):
                xv[i] -= alpha * (xv[i] - s_next)
            t = t_next
    if bad:
        raise NotSPDError(f"non-positive pivot at row {bad - 1}")
    return t


def bench_reps(kind, x, y, Py_ssize_t reps):
    """Total seconds for `reps` kernel calls, looped in C (no call overhead)."""
    cdef double[::1] xv = _as_vec(x, "x")
    cdef double[::1] yv = _as_vec(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ValueError(f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}")
    cdef Py_ssize_t n = xv.shape[0], r, i
    cdef double sink = 0.0, a = 0.5
    cdef int which
    if kind == "dot":
        which = 0
    elif kind == "norm2":
        which = 1
    elif kind == "axpy":
        which = 2
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    z_arr = np.empty(n)
    cdef double[::1] zv = z_arr
    cdef timespec t0, t1
    with nogil:
        clock_gettime(CLOCK_MONOTONIC, &t0)
        if which == 0:
            for r in range(reps):
                sink += _dot(&xv[0], &yv[0], n)
        elif which == 1:
            for r in range(reps):
                sink += _nrm2(&xv[0], n)
        else:
            for r in range(reps):
                for i in range(n):
                    zv[i] = a * xv[i] + yv[i]
                sink += zv[0]
                a += 1e-300  # data dependence across reps; keeps the stores live
        clock_gettime(CLOCK_MONOTONIC, &t1)
    if sink == float("inf"):
        raise OverflowError
    return (t1.tv_sec - t0.tv_sec) + (t1.tv_nsec - t0.tv_nsec) * 1e-9
