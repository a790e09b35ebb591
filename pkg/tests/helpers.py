"""Independent finite-difference oracles used to check analytic derivatives.

Central differences only; the package itself uses backward differences,
so these stay an independent route.
"""

import numpy as np


def central_grad_x(oracle, x, t, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (oracle.value(x + e, t) - oracle.value(x - e, t)) / (2 * h)
    return g


def central_grad_t(oracle, x, t, h=1e-6):
    return (oracle.value(x, t + h) - oracle.value(x, t - h)) / (2 * h)


def central_grad_xt(oracle, x, t, h=1e-6):
    gp = np.asarray(oracle.grad_x(x, t + h), dtype=np.float64)
    gm = np.asarray(oracle.grad_x(x, t - h), dtype=np.float64)
    return (gp - gm) / (2 * h)


def rel_err(approx, exact):
    approx = np.atleast_1d(np.asarray(approx, dtype=np.float64))
    exact = np.atleast_1d(np.asarray(exact, dtype=np.float64))
    scale = max(1.0, float(np.max(np.abs(exact))))
    return float(np.max(np.abs(approx - exact))) / scale
