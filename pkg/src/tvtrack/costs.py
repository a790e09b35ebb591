"""Cost oracles, derivative capabilities, and the benchmark problem library.

An oracle evaluates a time-varying cost f(x, t) and whichever of its
derivatives it supports analytically. Backward finite differences cover
the temporal derivatives when an oracle lacks them, and regularity
constants (strong convexity, gradient Lipschitz, temporal bounds) can be
estimated empirically over a set of visited points.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tvtrack.errors import CapabilityError
from tvtrack import linalg

DECLARED = "declared"
EMPIRICAL = "empirical-over-trajectory"


def as_vector(x):
    a = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if a.ndim != 1:
        raise ValueError("decision variable must be a scalar or 1-d vector")
    return a


@dataclass(frozen=True)
class EvalPoint:
    """A (decision variable, time) pair."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x))
        object.__setattr__(self, "t", float(self.t))
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite decision variable")
        if not math.isfinite(self.t) or self.t < 0.0:
            raise ValueError("time must be finite and >= 0")


@dataclass(frozen=True)
class CapabilitySet:
    """Which temporal/second-order derivatives an oracle computes analytically."""

    has_exact_grad_t: bool = False
    has_exact_grad_xt: bool = False
    has_exact_hessian: bool = False


@dataclass
class CostEvaluation:
    """One oracle evaluation; optional fields are absent when not requested."""

    value: float
    grad_x: np.ndarray
    grad_t: float | None = None
    grad_xt: np.ndarray | None = None
    hess_xx: np.ndarray | None = None


@dataclass(frozen=True)
class RegularityConstants:
    """Strong convexity m, gradient Lipschitz M, and temporal bounds K1-K3."""

    m: float
    M: float
    K1: float
    K2: float
    K3: float
    provenance: str = DECLARED

    def __post_init__(self):
        if not (0.0 < self.m <= self.M):
            raise ValueError(f"need 0 < m <= M, got m={self.m}, M={self.M}")
        if min(self.K1, self.K2, self.K3) < 0.0:
            raise ValueError("temporal bounds must be nonnegative")
        if self.provenance not in (DECLARED, EMPIRICAL):
            raise ValueError(f"unknown provenance {self.provenance!r}")


class CostOracle:
    """Base class for time-varying costs.

    Subclasses implement ``value`` and ``grad_x`` and whichever of
    ``grad_t``, ``grad_xt``, ``grad_tt``, ``hess_xx`` they support,
    declaring the analytic ones in ``capabilities``. Oracles are pure:
    no state mutates between calls.
    """

    n: int
    capabilities = CapabilitySet()
    constants: RegularityConstants | None = None
    curvature_bounds: tuple[float, float] | None = None  # global (m, M) when known

    def value(self, x, t) -> float:
        raise NotImplementedError

    def grad_x(self, x, t) -> np.ndarray:
        raise NotImplementedError

    def grad_t(self, x, t) -> float:
        raise CapabilityError(f"{type(self).__name__} has no analytic grad_t")

    def grad_xt(self, x, t) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} has no analytic grad_xt")

    def grad_tt(self, x, t) -> float:
        raise CapabilityError(f"{type(self).__name__} has no analytic grad_tt")

    def hess_xx(self, x, t) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} has no analytic Hessian")

    def optimum(self, t):
        """Analytic (x_star, f_star) at time t, or None when unknown."""
        return None


def evaluate(oracle, point, want=CapabilitySet(), fd_step=None):
    """Evaluate the cost and the requested derivatives at one point.

    Requested derivatives the oracle cannot compute analytically are left
    absent unless ``fd_step`` is given, in which case backward differences
    over [t - fd_step, t] fill in grad_t/grad_xt. The Hessian, when
    present, is validated for symmetry.
    """
    if not isinstance(point, EvalPoint):
        point = EvalPoint(*point)
    x, t = point.x, point.t
    if x.shape[0] != oracle.n:
        raise ValueError(f"dimension mismatch: oracle n={oracle.n}, x has {x.shape[0]}")
    caps = oracle.capabilities
    out = CostEvaluation(value=float(oracle.value(x, t)), grad_x=as_vector(oracle.grad_x(x, t)))
    if not math.isfinite(out.value) or not np.all(np.isfinite(out.grad_x)):
        raise FloatingPointError(f"non-finite evaluation at t={t}")
    if out.grad_x.shape[0] != oracle.n:
        raise ValueError("oracle returned a gradient of the wrong length")

    if want.has_exact_grad_t:
        if caps.has_exact_grad_t:
            out.grad_t = float(oracle.grad_t(x, t))
        elif fd_step is not None:
            out.grad_t = fd_grad_t(oracle, x, t, t - fd_step)
    if want.has_exact_grad_xt:
        if caps.has_exact_grad_xt:
            out.grad_xt = as_vector(oracle.grad_xt(x, t))
        elif fd_step is not None:
            out.grad_xt = fd_grad_xt(oracle, x, t, t - fd_step)
    if want.has_exact_hessian and caps.has_exact_hessian:
        h = np.atleast_2d(np.asarray(oracle.hess_xx(x, t), dtype=np.float64))
        if not np.all(np.isfinite(h)):
            raise FloatingPointError(f"non-finite Hessian at t={t}")
        scale = max(1.0, float(np.max(np.abs(h))))
        if float(np.max(np.abs(h - h.T))) > 1e-12 * scale:
            raise ValueError("oracle returned an asymmetric Hessian")
        out.hess_xx = h
    return out


def fd_grad_t(oracle, x, t_k, t_km1):
    """Backward-difference estimate of the temporal derivative of f."""
    if not t_k > t_km1:
        raise ValueError(f"need t_k > t_km1, got {t_k} <= {t_km1}")
    x = as_vector(x)
    return (oracle.value(x, t_k) - oracle.value(x, t_km1)) / (t_k - t_km1)


def fd_grad_xt(oracle, x, t_k, t_km1):
    """Backward difference of the gradient at fixed x across two times."""
    if not t_k > t_km1:
        raise ValueError(f"need t_k > t_km1, got {t_k} <= {t_km1}")
    x = as_vector(x)
    g_now = as_vector(oracle.grad_x(x, t_k))
    g_prev = as_vector(oracle.grad_x(x, t_km1))
    return (g_now - g_prev) / (t_k - t_km1)


def estimate_constants(oracle, trajectory_points, margin=0.0):
    """Empirical regularity constants over a set of visited points.

    m and M come from Hessian eigenvalue extrema, K1-K3 from the suprema
    of the temporal derivatives. Upper bounds are inflated and m deflated
    by the relative ``margin`` to cover the segments between samples.
    """
    pts = [p if isinstance(p, EvalPoint) else EvalPoint(*p) for p in trajectory_points]
    if not pts:
        raise ValueError("need at least one point")
    if margin < 0.0:
        raise ValueError("margin must be >= 0")
    caps = oracle.capabilities
    if not (caps.has_exact_grad_t and caps.has_exact_grad_xt and caps.has_exact_hessian):
        raise CapabilityError("constant estimation needs grad_t, grad_xt and the Hessian")
    m = math.inf
    M = 0.0
    K1 = K2 = K3 = 0.0
    for p in pts:
        lo, hi = linalg.sym_eig_extents(np.atleast_2d(oracle.hess_xx(p.x, p.t)))
        m = min(m, lo)
        M = max(M, hi)
        K1 = max(K1, abs(float(oracle.grad_t(p.x, p.t))))
        K2 = max(K2, linalg.norm2(as_vector(oracle.grad_xt(p.x, p.t))))
        K3 = max(K3, abs(float(oracle.grad_tt(p.x, p.t))))
    if m <= 0.0:
        raise ValueError(f"smallest observed Hessian eigenvalue {m} is not positive")
    grow = 1.0 + margin
    return RegularityConstants(m=m / grow, M=M * grow, K1=K1 * grow,
                               K2=K2 * grow, K3=K3 * grow, provenance=EMPIRICAL)


# ---------------------------------------------------------------------------
# problem library


class ScalarSinusoid(CostOracle):
    """f(x, t) = 0.5 (x - 2 sin t)^2 + cos(3t) x, the scalar tracking example."""

    n = 1
    capabilities = CapabilitySet(True, True, True)
    curvature_bounds = (1.0, 1.0)  # unit Hessian; temporal bounds grow with |x|

    def value(self, x, t):
        x0 = float(as_vector(x)[0])
        return 0.5 * (x0 - 2.0 * math.sin(t)) ** 2 + math.cos(3.0 * t) * x0

    def grad_x(self, x, t):
        x0 = float(as_vector(x)[0])
        return np.array([x0 - 2.0 * math.sin(t) + math.cos(3.0 * t)])

    def grad_t(self, x, t):
        x0 = float(as_vector(x)[0])
        return -2.0 * math.cos(t) * (x0 - 2.0 * math.sin(t)) - 3.0 * math.sin(3.0 * t) * x0

    def grad_xt(self, x, t):
        return np.array([-2.0 * math.cos(t) - 3.0 * math.sin(3.0 * t)])

    def grad_tt(self, x, t):
        x0 = float(as_vector(x)[0])
        r = x0 - 2.0 * math.sin(t)
        return 2.0 * math.sin(t) * r + 4.0 * math.cos(t) ** 2 - 9.0 * math.cos(3.0 * t) * x0

    def hess_xx(self, x, t):
        return np.array([[1.0]])

    def optimum(self, t):
        xs = 2.0 * math.sin(t) - math.cos(3.0 * t)
        fs = -0.5 * math.cos(3.0 * t) ** 2 + 2.0 * math.sin(t) * math.cos(3.0 * t)
        return np.array([xs]), fs


class QuadraticTracker(CostOracle):
    """Separable tracker f(x, t) = 0.5 ||x - a sin(w t) 1||^2, any dimension.

    With a = 0 this is a static strongly convex quadratic, handy as the
    time-invariant reference problem.
    """

    capabilities = CapabilitySet(True, True, True)

    curvature_bounds = (1.0, 1.0)

    def __init__(self, n=2, a=1.0, omega=1.0):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = int(n)
        self.a = float(a)
        self.omega = float(omega)
        self.constants = RegularityConstants(m=1.0, M=1.0, K1=0.0, K2=0.0, K3=0.0) \
            if a == 0.0 else None

    def _s(self, t):
        return self.a * math.sin(self.omega * t)

    def _sdot(self, t):
        return self.a * self.omega * math.cos(self.omega * t)

    def value(self, x, t):
        r = as_vector(x) - self._s(t)
        return 0.5 * float(np.dot(r, r))

    def grad_x(self, x, t):
        return as_vector(x) - self._s(t)

    def grad_t(self, x, t):
        return -self._sdot(t) * float(np.sum(as_vector(x) - self._s(t)))

    def grad_xt(self, x, t):
        return np.full(self.n, -self._sdot(t))

    def grad_tt(self, x, t):
        sddot = -self.a * self.omega ** 2 * math.sin(self.omega * t)
        resid_sum = float(np.sum(as_vector(x) - self._s(t)))
        return -sddot * resid_sum + self._sdot(t) ** 2 * self.n

    def hess_xx(self, x, t):
        return np.eye(self.n)

    def optimum(self, t):
        return np.full(self.n, self._s(t)), 0.0


class DriftQuadratic(CostOracle):
    """f(x, t) = 0.5 x^T A x + b(t)^T x with SPD A and b(t) = b0 + t b1.

    The gradient shifts linearly with time, which makes the second-order
    prediction rule exact for this family.
    """

    capabilities = CapabilitySet(True, True, True)

    def __init__(self, A, b0, b1):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.b0 = as_vector(b0)
        self.b1 = as_vector(b1)
        self.n = self.A.shape[0]
        if self.A.shape != (self.n, self.n) or np.max(np.abs(self.A - self.A.T)) > 1e-12:
            raise ValueError("A must be square symmetric")
        if self.b0.shape != (self.n,) or self.b1.shape != (self.n,):
            raise ValueError("b0/b1 length mismatch")
        lo, hi = linalg.sym_eig_extents(self.A)
        if lo <= 0.0:
            raise ValueError("A must be positive definite")
        self.constants = None  # K1 depends on the visited region
        self.curvature_bounds = (lo, hi)

    def _b(self, t):
        return self.b0 + t * self.b1

    def value(self, x, t):
        x = as_vector(x)
        return 0.5 * float(x @ self.A @ x) + float(self._b(t) @ x)

    def grad_x(self, x, t):
        return self.A @ as_vector(x) + self._b(t)

    def grad_t(self, x, t):
        return float(self.b1 @ as_vector(x))

    def grad_xt(self, x, t):
        return self.b1.copy()

    def grad_tt(self, x, t):
        return 0.0

    def hess_xx(self, x, t):
        return self.A.copy()

    def optimum(self, t):
        xs = linalg.spd_solve(self.A, -self._b(t))
        return xs, 0.5 * float(xs @ self.A @ xs) + float(self._b(t) @ xs)


def _make_drift(params):
    if "A" in params:
        A = np.asarray(params["A"], dtype=np.float64)
        b0 = np.asarray(params["b0"], dtype=np.float64)
        b1 = np.asarray(params["b1"], dtype=np.float64)
    else:
        n = int(params.get("n", 2))
        rng = np.random.default_rng(int(params.get("seed", 0)))
        G = rng.standard_normal((n, n))
        A = G @ G.T + np.eye(n)
        b0 = rng.standard_normal(n)
        b1 = rng.standard_normal(n)
    return DriftQuadratic(A, b0, b1)


PROBLEMS = {
    "scalar-sinusoid": lambda params: ScalarSinusoid(),
    "quadratic-tracker": lambda params: QuadraticTracker(
        n=int(params.get("n", 2)), a=float(params.get("a", 1.0)),
        omega=float(params.get("omega", 1.0))),
    "drift-quadratic": _make_drift,
}


def make_problem(problem_id, params=None):
    """Instantiate a library problem from its string id and parameter map."""
    try:
        factory = PROBLEMS[problem_id]
    except KeyError:
        raise KeyError(f"unknown problem {problem_id!r}; known: {sorted(PROBLEMS)}") from None
    return factory(params or {})
