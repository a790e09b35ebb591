"""Pure-Python (numpy) implementations of the hot kernels.

Mirrors the API of the compiled extension ``_core`` exactly; selected at
import time when the extension is unavailable or when
``TVTRACK_FORCE_FALLBACK`` is set. Benchmarks compare the two backends.
"""

import math
import time

import numpy as np

from tvtrack.errors import NotSPDError

BACKEND = "fallback"


def _as_vec(v, name):
    a = np.ascontiguousarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    return a


def dot(x, y):
    x = _as_vec(x, "x")
    y = _as_vec(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(np.dot(x, y))


def axpy(a, x, y):
    """Return a*x + y."""
    x = _as_vec(x, "x")
    y = _as_vec(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(a) * x + y


def norm2(x):
    x = _as_vec(x, "x")
    return float(np.linalg.norm(x))


def cholesky_packed(ap, n):
    """Factor a packed lower-triangle SPD matrix in place (row-major packed).

    ``ap[i*(i+1)//2 + j]`` holds entry (i, j), j <= i. On return the same
    layout holds the Cholesky factor L. Raises NotSPDError on a
    non-positive pivot.
    """
    ap = np.ascontiguousarray(ap, dtype=np.float64)
    for i in range(n):
        row_i = i * (i + 1) // 2
        for j in range(i + 1):
            row_j = j * (j + 1) // 2
            s = ap[row_i + j] - float(np.dot(ap[row_i:row_i + j], ap[row_j:row_j + j]))
            if i == j:
                if s <= 0.0 or not math.isfinite(s):
                    raise NotSPDError(f"non-positive pivot {s!r} at row {i}")
                ap[row_i + j] = math.sqrt(s)
            else:
                ap[row_i + j] = s / ap[row_j + j]
    return ap


def solve_packed_factored(lp, n, b):
    """Solve L L^T z = b given the packed factor from cholesky_packed."""
    b = _as_vec(b, "b")
    if b.shape[0] != n:
        raise ValueError(f"length mismatch: matrix order {n}, rhs {b.shape[0]}")
    z = b.copy()
    for i in range(n):  # forward
        row = i * (i + 1) // 2
        z[i] = (z[i] - float(np.dot(lp[row:row + i], z[:i]))) / lp[row + i]
    for i in range(n - 1, -1, -1):  # backward, using L^T column-wise
        row = i * (i + 1) // 2
        z[i] /= lp[row + i]
        z[:i] -= lp[row:row + i] * z[i]
    return z


def tracker_alg1_run(x, a, omega, t0, delta, alpha, eps, n_ticks):
    """Prediction-update ticks for f = 0.5*||x - a sin(w t) 1||^2, mutating x.

    One first-order (grad-t based) prediction plus one gradient update per
    tick. Returns the final time.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = float(t0)
    for k in range(n_ticks):
        s = a * math.sin(omega * t)
        g = x - s
        gn2 = float(np.dot(g, g))
        grad_t = -a * omega * math.cos(omega * t) * float(np.sum(g))
        if gn2 >= eps * eps:
            x -= (delta * abs(grad_t) / gn2) * g
        t_next = t0 + (k + 1) * delta
        s_next = a * math.sin(omega * t_next)
        x -= alpha * (x - s_next)
        t = t_next
    return t


def tracker_euler2_run(x, a, omega, t0, delta, alpha, n_ticks):
    """Second-order-prediction ticks for the tracker cost, dense solve per tick.

    The Hessian is assembled and Cholesky-factored densely each tick, which
    is the point: this is the O(n^3) baseline the benchmark compares against.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    t = float(t0)
    for k in range(n_ticks):
        ap = np.zeros(n * (n + 1) // 2)
        idx = np.arange(n)
        ap[idx * (idx + 1) // 2 + idx] = 1.0  # identity Hessian, packed
        grad_xt = np.full(n, -a * omega * math.cos(omega * t))
        cholesky_packed(ap, n)
        z = solve_packed_factored(ap, n, grad_xt)
        x -= delta * z
        t_next = t0 + (k + 1) * delta
        s_next = a * math.sin(omega * t_next)
        x -= alpha * (x - s_next)
        t = t_next
    return t


def bench_reps(kind, x, y, reps):
    """Median-friendly timing helper: total seconds for `reps` kernel calls.

    The fallback loops in Python, so small-n timings include interpreter
    overhead; the compiled backend loops in C.
    """
    x = _as_vec(x, "x")
    y = _as_vec(y, "y")
    sink = 0.0
    if kind == "dot":
        t0 = time.perf_counter()
        for _ in range(reps):
            sink += float(np.dot(x, y))
        elapsed = time.perf_counter() - t0
    elif kind == "norm2":
        t0 = time.perf_counter()
        for _ in range(reps):
            sink += float(np.linalg.norm(x))
        elapsed = time.perf_counter() - t0
    elif kind == "axpy":
        t0 = time.perf_counter()
        for _ in range(reps):
            sink += float((0.5 * x + y)[0])
        elapsed = time.perf_counter() - t0
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    if sink == math.inf:  # keep the accumulator observable
        raise OverflowError
    return elapsed
