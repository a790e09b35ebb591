"""Minimal dense linear algebra for the solver hot paths.

Vector primitives, packed symmetric storage, and a pivot-free Cholesky
solve back the prediction rules and the receding-horizon optimum oracle.
Kernels come from the compiled extension ``_core`` when it built, else
from the numpy fallback ``_fallback``; set ``TVTRACK_FORCE_FALLBACK=1``
to force the latter. A failed Cholesky raises :class:`NotSPDError`
instead of being patched with regularization, since a non-SPD Hessian
signals a strong-convexity violation the caller should see.
"""

import os

import numpy as np

from tvtrack.errors import NotSPDError

if os.environ.get("TVTRACK_FORCE_FALLBACK"):
    from tvtrack.linalg import _fallback as _impl
else:
    try:
        from tvtrack.linalg import _core as _impl
    except ImportError:
        from tvtrack.linalg import _fallback as _impl

BACKEND = _impl.BACKEND
USING_COMPILED_CORE = BACKEND == "compiled"

dot = _impl.dot
axpy = _impl.axpy
norm2 = _impl.norm2
cholesky_packed = _impl.cholesky_packed
solve_packed_factored = _impl.solve_packed_factored


class SymMatrix:
    """Symmetric matrix stored as a packed lower triangle (row-major).

    Entry (i, j) with j <= i lives at ``packed[i*(i+1)//2 + j]``.
    """

    __slots__ = ("n", "packed")

    def __init__(self, n, packed):
        packed = np.ascontiguousarray(packed, dtype=np.float64)
        if n < 1:
            raise ValueError("order must be >= 1")
        if packed.shape != (n * (n + 1) // 2,):
            raise ValueError("packed buffer has wrong length for order n")
        if not np.all(np.isfinite(packed)):
            raise ValueError("non-finite matrix entries")
        self.n = int(n)
        self.packed = packed

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        n = a.shape[0]
        rows, cols = np.tril_indices(n)
        return cls(n, a[rows, cols])

    @classmethod
    def identity(cls, n):
        packed = np.zeros(n * (n + 1) // 2)
        idx = np.arange(n)
        packed[idx * (idx + 1) // 2 + idx] = 1.0
        return cls(n, packed)

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        rows, cols = np.tril_indices(self.n)
        a[rows, cols] = self.packed
        a[cols, rows] = self.packed
        return a

    def __eq__(self, other):
        return (isinstance(other, SymMatrix) and self.n == other.n
                and np.array_equal(self.packed, other.packed))


def _to_sym(a):
    if isinstance(a, SymMatrix):
        return a
    return SymMatrix.from_dense(a)


def spd_solve(a, b):
    """Solve A z = b for symmetric positive definite A via Cholesky.

    ``a`` may be a SymMatrix or a dense symmetric array. Raises
    NotSPDError on a non-positive pivot.
    """
    sym = _to_sym(a)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.ndim == 0:
        b = b.reshape(1)
    if b.shape != (sym.n,):
        raise ValueError(f"length mismatch: matrix order {sym.n}, rhs {b.shape}")
    factor = cholesky_packed(sym.packed.copy(), sym.n)
    return solve_packed_factored(factor, sym.n, b)


def sym_eig_extents(a, tol=1e-13, max_iter=20000):
    """Smallest and largest eigenvalue of a symmetric matrix.

    Power iteration on Gershgorin-shifted copies; adequate for the small
    Hessians the constant estimator sees. Deterministic start vector.
    """
    dense = _to_sym(a).to_dense()
    n = dense.shape[0]
    if n == 1:
        v = float(dense[0, 0])
        return v, v
    shift = float(np.max(np.sum(np.abs(dense), axis=1)))  # >= spectral radius

    def largest(mat):
        v = np.ones(n) + 1e-3 * np.arange(n)  # breaks symmetry deterministically
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = mat @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v_new = w / nw
            lam_new = float(v_new @ (mat @ v_new))
            if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
                return lam_new
            v, lam = v_new, lam_new
        return lam

    lam_max = largest(dense + shift * np.eye(n)) - shift
    lam_min = shift - largest(shift * np.eye(n) - dense)
    return lam_min, lam_max
