"""Closed-form tracking-error bounds and trajectory checks against them.

Given regularity constants and the run parameters (alpha, delta, eps),
this module computes the per-tick drift bound of the optimal cost, the
contraction rate, and the ultimate error neighborhoods E1-E4 of the four
prediction rules, and verifies recorded trajectories against the
resulting geometric envelopes.
"""

import math
from dataclasses import dataclass, asdict

from tvtrack.costs import RegularityConstants
from tvtrack.errors import ConfigError


def psi(c, delta):
    """Per-tick bound on how much the optimal cost itself can move."""
    if not delta > 0.0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    return (delta * (c.K1 + 0.5 * delta * c.K3)
            + (c.K2 ** 2 * delta ** 2) / (2.0 * c.m) * (c.M * delta / c.m + 2.0))


@dataclass(frozen=True)
class BoundReport:
    """Every closed-form constant entering the tracking-error envelopes.

    ``mu_alg3_literal`` keeps the variant with the quadratic delta factor
    that appears only in the third rule's statement; it disagrees with
    the value the other rules share (``mu_alg13``), so both are reported
    and E3 uses the shared one.
    """

    psi: float
    kappa: float
    rate: float  # geometric contraction factor 1 - 2*kappa*alpha*m
    gamma: float
    gamma_prime: float
    eta: float
    mu_alg13: float
    mu_alg3_literal: float
    mu_alg4: float
    E1: float
    E2: float
    E3: float
    E4: float
    delta_max_lemma2: float
    delta_max_remark3: float
    alpha_ok: bool
    m: float
    M: float
    K1: float
    K2: float
    K3: float
    provenance: str
    alpha: float
    delta: float
    epsilon: float

    def to_dict(self):
        return asdict(self)


def bound_report(c, alpha, delta, epsilon):
    """Assemble all bound constants for one (constants, alpha, delta, eps) tuple."""
    if not (c.m > 0.0 and epsilon > 0.0 and delta > 0.0):
        raise ConfigError("need m > 0, epsilon > 0 and delta > 0")
    if not alpha > 0.0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    m, M, K1, K2, K3 = c.m, c.M, c.K1, c.K2, c.K3
    alpha_ok = alpha <= 1.0 / (2.0 * M)

    p = psi(c, delta)
    kappa = 1.0 - alpha * M / 2.0
    rate = 1.0 - 2.0 * kappa * alpha * m
    gamma = 2.0 * K1 / delta + M / (2.0 * epsilon ** 2) * K1 ** 2 + 0.5 * K3 \
        + K1 * K2 / epsilon
    gamma_prime = K3 + 2.0 * K1 / delta + K1 ** 2 * M / epsilon ** 2 \
        + K2 * (K1 + 0.5 * delta * K3) / epsilon \
        + delta ** 2 * K3 ** 2 * M / (4.0 * epsilon ** 2)
    eta = 2.0 * K1 / delta + 0.5 * K3 + 2.0 * K1 * K2 / epsilon \
        + M / (2.0 * epsilon ** 2) * K1 ** 2
    mu_alg13 = K1 + 0.5 * delta * K3
    mu_alg3_literal = K1 + 0.5 * delta ** 2 * K3
    mu_alg4 = epsilon * m * K2 + K1 + 0.5 * delta * K3 + 1.5 * m * delta * K2 ** 2

    scale1 = 4.0 * kappa ** 2 * alpha ** 2 * m
    scale2 = 4.0 * kappa ** 2 * alpha ** 2 * m ** 2

    def envelope(max_arg):
        return p / scale1 + max_arg / scale2

    d2 = delta ** 2
    report = BoundReport(
        psi=p, kappa=kappa, rate=rate, gamma=gamma, gamma_prime=gamma_prime,
        eta=eta, mu_alg13=mu_alg13, mu_alg3_literal=mu_alg3_literal, mu_alg4=mu_alg4,
        E1=envelope(max(gamma * d2, mu_alg13 * delta)),
        E2=envelope(max(gamma_prime * d2, mu_alg13 * delta)),
        E3=envelope(max(gamma * d2, mu_alg13 * delta, eta * d2)),
        E4=envelope(max(gamma * d2, mu_alg4 * delta)),
        delta_max_lemma2=(2.0 * epsilon ** 2 / (K1 * M + 2.0 * epsilon * K2)
                          if K1 * M + 2.0 * epsilon * K2 > 0.0 else math.inf),
        delta_max_remark3=(2.0 * epsilon ** 2 / ((K1 + 0.5 * delta * K3) * M
                                                 + 2.0 * epsilon * K2)
                           if (K1 + 0.5 * delta * K3) * M + 2.0 * epsilon * K2 > 0.0
                           else math.inf),
        alpha_ok=alpha_ok, m=m, M=M, K1=K1, K2=K2, K3=K3, provenance=c.provenance,
        alpha=alpha, delta=delta, epsilon=epsilon)
    return report


ENVELOPES = {"E1": "alg1", "E2": "alg2", "E3": "alg3", "E4": "alg4"}


@dataclass(frozen=True)
class BoundCheck:
    """Verdict of one trajectory against one geometric envelope."""

    which: str
    holds: bool
    worst_margin: float
    worst_k: int
    envelope: float

    def to_dict(self):
        return asdict(self)


def check_bound(traj, report, which):
    """Check err_f(k) against the geometric envelope built from E_which.

    The envelope at record k >= 1 is rate^(k-1) * err_f(0) plus the
    steady-state neighborhood weighted by the spent contraction; the
    reported margin is the minimum of envelope - err over all records.
    """
    if which not in ENVELOPES:
        raise ConfigError(f"which must be one of {sorted(ENVELOPES)}")
    errs = traj.err_f
    if len(errs) == 0:
        raise ConfigError("empty trajectory")
    if math.isnan(errs[0]) or any(math.isnan(e) for e in errs):
        raise ConfigError("bound checks need f_star at every record")
    E = getattr(report, which)
    rate = report.rate
    err0 = errs[0]
    worst_margin = math.inf
    worst_k = 0
    for k, err in enumerate(errs):
        decay = rate ** (k - 1) if k >= 1 else 1.0
        rhs = decay * err0 + (1.0 - decay) * E
        margin = rhs - err
        if margin < worst_margin:
            worst_margin = margin
            worst_k = k
    # allowance for rounding in the envelope evaluation itself (ulp scale)
    tol = 8.0 * 2.22e-16 * max(1.0, abs(E), abs(err0))
    return BoundCheck(which=which, holds=bool(worst_margin >= -tol),
                      worst_margin=float(worst_margin), worst_k=int(worst_k),
                      envelope=float(E))


@dataclass(frozen=True)
class EpsilonStarResult:
    """Outcome of the optimal-guard equation gamma(eps) * delta^2 = mu * delta."""

    status: str  # "degenerate" | "no-root" | "converged"
    value: float | None
    residual: float | None


def epsilon_star(c, alpha, delta, eps_hi=1e6, tol=1e-10):
    """Solve gamma(eps) * delta^2 = mu * delta for the guard eps by bisection.

    With zero temporal drift (K1 = 0) every guard works and the result is
    flagged degenerate. For K1 > 0 the difference gamma*delta^2 - mu*delta
    is monotone decreasing in eps with limit K1*delta > 0, so no root
    exists for any constant set; the bracket scan reports that honestly
    instead of fabricating a crossing. (``alpha`` does not enter the
    equation; it is accepted for signature parity with the report.)
    """
    if not delta > 0.0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    if c.K1 == 0.0:
        return EpsilonStarResult(status="degenerate", value=None, residual=None)

    mu_delta = (c.K1 + 0.5 * delta * c.K3) * delta

    def h(eps):
        gamma = (2.0 * c.K1 / delta + c.M / (2.0 * eps ** 2) * c.K1 ** 2
                 + 0.5 * c.K3 + c.K1 * c.K2 / eps)
        return gamma * delta ** 2 - mu_delta

    lo = 1e-12
    hi = lo
    sign_lo = math.copysign(1.0, h(lo))
    found = False
    while hi < eps_hi:
        hi = min(hi * 10.0, eps_hi)
        if math.copysign(1.0, h(hi)) != sign_lo:
            found = True
            break
        lo = hi
    if not found:
        return EpsilonStarResult(status="no-root", value=None, residual=None)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.copysign(1.0, h(mid)) == sign_lo:
            lo = mid
        else:
            hi = mid
        if abs(h(mid)) <= tol:
            return EpsilonStarResult(status="converged", value=mid, residual=h(mid))
    mid = 0.5 * (lo + hi)
    return EpsilonStarResult(status="converged", value=mid, residual=h(mid))


def remark2_diagnostics(traj, report):
    """Per-branch geometric sums splitting the envelope by guard activity.

    Diagnostic only: partitions ticks into those where the gradient-norm
    guard let the prediction fire and those where it did not, and
    accumulates the corresponding geometric weights. Nothing is asserted
    against these sums.
    """
    rate = report.rate
    eps = report.epsilon
    ticks = len(traj.records)
    active = [r.grad_norm >= eps for r in traj.records]
    k_last = ticks - 1
    sum_active = sum(rate ** (k_last - i) for i in range(ticks) if active[i])
    sum_inactive = sum(rate ** (k_last - i) for i in range(ticks) if not active[i])
    scale = 4.0 * report.kappa ** 2 * report.alpha ** 2 * report.m
    refined_tail = (report.gamma * report.delta ** 2 * sum_active
                    + report.mu_alg13 * report.delta * sum_inactive) / scale
    return {
        "active_ticks": int(sum(active)),
        "inactive_ticks": int(ticks - sum(active)),
        "geometric_sum_active": sum_active,
        "geometric_sum_inactive": sum_inactive,
        "refined_tail_term": refined_tail,
    }
