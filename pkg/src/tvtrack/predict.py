"""Prediction rules for the prediction-update tracking loop.

Each rule maps the state at the current sample time to a warm start for
the gradient update at the next one. The first-order rules move along
the (possibly time-extrapolated) gradient direction, scaled by the
temporal drift of the cost; a gradient-norm guard ``eps`` skips the move
when the denominator would get close to zero. The hybrid rule replaces
the skipped move with a Hessian-solve step, and the unconditional
Hessian-solve rule serves as the second-order baseline.

All rules are pure functions of their inputs. Extension point: the
extrapolated rule could fold second-order temporal terms into its
direction at the same per-tick cost; only the first-order variants are
implemented.
"""

import enum
from dataclasses import dataclass

import numpy as np

from tvtrack import linalg
from tvtrack.costs import as_vector


class Branch(str, enum.Enum):
    """Which displacement a prediction actually applied."""

    IDENTITY = "identity"
    FIRST_ORDER_GRAD_T = "first-order-grad-t"
    FIRST_ORDER_XT = "first-order-xt"
    SECOND_ORDER = "second-order"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PredictionOutcome:
    """Predicted point, the branch that produced it, and the step length.

    ``branch`` is IDENTITY exactly when ``x_pred`` equals the input
    point bitwise (a fired rule whose displacement is exactly zero
    reports IDENTITY too).
    """

    x_pred: np.ndarray
    branch: Branch
    step_norm: float


def _finish(x, x_pred, branch):
    if np.array_equal(x_pred, x):
        return PredictionOutcome(x_pred=x.copy(), branch=Branch.IDENTITY, step_norm=0.0)
    return PredictionOutcome(x_pred=x_pred, branch=branch,
                             step_norm=linalg.norm2(x_pred - x))


def _check_finite(**kwargs):
    for name, v in kwargs.items():
        if v is None:
            continue
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite {name}")


def _check_pos(**kwargs):
    for name, v in kwargs.items():
        if not v > 0.0:
            raise ValueError(f"{name} must be > 0, got {v}")


def predict_identity(x):
    """Keep the current point: the prediction step of plain gradient descent."""
    x = as_vector(x)
    return PredictionOutcome(x_pred=x.copy(), branch=Branch.IDENTITY, step_norm=0.0)


def predict_alg1(x, grad_x, grad_t, delta, eps):
    """First-order rule driven by the exact temporal derivative.

    When ||grad_x|| >= eps the point moves against the gradient by
    delta*|grad_t|/||grad_x||^2; otherwise it stays put.
    """
    x = as_vector(x)
    grad_x = as_vector(grad_x)
    _check_pos(delta=delta, eps=eps)
    _check_finite(x=x, grad_x=grad_x, grad_t=grad_t)
    gn2 = linalg.dot(grad_x, grad_x)
    if gn2 >= eps * eps:
        x_pred = x - (delta * abs(grad_t) / gn2) * grad_x
        return _finish(x, x_pred, Branch.FIRST_ORDER_GRAD_T)
    return _finish(x, x.copy(), Branch.IDENTITY)


def predict_alg2(x, grad_x, f_now, f_prev, delta, eps):
    """First-order rule from sampled cost values instead of grad_t.

    ``f_now`` and ``f_prev`` are the cost at the current point evaluated
    at the current and previous sample times; their undivided difference
    already carries the delta factor of the exact rule when the grid is
    uniform.
    """
    x = as_vector(x)
    grad_x = as_vector(grad_x)
    _check_pos(delta=delta, eps=eps)
    _check_finite(x=x, grad_x=grad_x, f_now=f_now, f_prev=f_prev)
    gn2 = linalg.dot(grad_x, grad_x)
    if gn2 >= eps * eps:
        x_pred = x - (abs(f_now - f_prev) / gn2) * grad_x
        return _finish(x, x_pred, Branch.FIRST_ORDER_GRAD_T)
    return _finish(x, x.copy(), Branch.IDENTITY)


def predict_alg3(x, grad_x, grad_t, grad_xt, delta, eps):
    """First-order rule that extrapolates the gradient through time.

    Steps along g' = grad_x + delta*grad_xt when that direction is long
    enough and grad_xt opposes grad_x; otherwise falls back to the plain
    first-order rule, then to identity.
    """
    x = as_vector(x)
    grad_x = as_vector(grad_x)
    grad_xt = as_vector(grad_xt)
    _check_pos(delta=delta, eps=eps)
    _check_finite(x=x, grad_x=grad_x, grad_t=grad_t, grad_xt=grad_xt)
    if not np.any(grad_xt):
        # no extrapolation to add; identical to the plain drift rule, bitwise
        return predict_alg1(x, grad_x, grad_t, delta, eps)
    g_ext = grad_x + delta * grad_xt
    gn2_ext = linalg.dot(g_ext, g_ext)
    if gn2_ext >= eps * eps and linalg.dot(grad_xt, grad_x) <= 0.0:
        x_pred = x - (delta * abs(grad_t) / gn2_ext) * g_ext
        return _finish(x, x_pred, Branch.FIRST_ORDER_XT)
    return predict_alg1(x, grad_x, grad_t, delta, eps)


def predict_alg4(x, grad_x, grad_t, grad_xt, hess, delta, eps):
    """Hybrid rule: first-order step, switching to a Hessian solve at small gradients.

    ``grad_xt`` and ``hess`` are only touched when ||grad_x|| < eps, so
    callers may pass None for them on the large-gradient path. Raises
    NotSPDError when the Hessian solve hits a non-positive pivot.
    """
    x = as_vector(x)
    grad_x = as_vector(grad_x)
    _check_pos(delta=delta, eps=eps)
    _check_finite(x=x, grad_x=grad_x, grad_t=grad_t)
    gn2 = linalg.dot(grad_x, grad_x)
    if gn2 >= eps * eps:
        x_pred = x - (delta * abs(grad_t) / gn2) * grad_x
        return _finish(x, x_pred, Branch.FIRST_ORDER_GRAD_T)
    if grad_xt is None or hess is None:
        raise ValueError("the small-gradient branch needs grad_xt and the Hessian")
    grad_xt = as_vector(grad_xt)
    _check_finite(grad_xt=grad_xt)
    x_pred = x - delta * linalg.spd_solve(hess, grad_xt)
    return _finish(x, x_pred, Branch.SECOND_ORDER)


def predict_euler_second_order(x, grad_xt, hess, delta):
    """Unconditional Hessian-solve prediction, the second-order baseline."""
    x = as_vector(x)
    grad_xt = as_vector(grad_xt)
    _check_pos(delta=delta)
    _check_finite(x=x, grad_xt=grad_xt)
    x_pred = x - delta * linalg.spd_solve(hess, grad_xt)
    return _finish(x, x_pred, Branch.SECOND_ORDER)


def first_order_model(f, grad_x, grad_t, x, x_pred, delta):
    """Cost predicted by the first-order expansion at (x, t) for the step to x_pred."""
    return float(f) + linalg.dot(as_vector(grad_x), as_vector(x_pred) - as_vector(x)) \
        + float(grad_t) * float(delta)
