"""Prediction-update loop over a uniform time grid, with trajectory recording.

``run`` drives one algorithm over a sampled cost, recording state, branch
taken, and tracking error against an optimum oracle at every tick.
Trajectories serialize to CSV (fixed header) and to JSON with full
fidelity.
"""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from tvtrack import linalg, predict
from tvtrack.costs import CostOracle, as_vector, fd_grad_xt
from tvtrack.errors import CapabilityError, ConfigError, NumericalAbort
from tvtrack.predict import Branch

ALGORITHMS = ("gd", "alg1", "alg2", "alg3", "alg4", "alg4-approx", "euler2")

_NEEDS = {
    "gd": (),
    "alg1": ("grad_t",),
    "alg2": (),
    "alg3": ("grad_t", "grad_xt"),
    "alg4": ("grad_t", "grad_xt", "hessian"),
    "alg4-approx": ("hessian",),  # temporal derivatives via backward differences
    "euler2": ("grad_xt", "hessian"),
}

CSV_FIELDS = ["k", "t", "f", "f_star", "err_f", "err_x", "grad_norm", "branch"]


@dataclass
class SolverConfig:
    """Algorithm choice plus the step sizes and grid of one run."""

    algorithm: str
    alpha: float
    epsilon: float
    delta: float
    t_end: float
    x0: np.ndarray
    updates_per_tick: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; known: {ALGORITHMS}")
        for name in ("alpha", "epsilon", "delta"):
            v = float(getattr(self, name))
            setattr(self, name, v)
            if not (v > 0.0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        self.t_end = float(self.t_end)
        if self.t_end < 0.0:
            raise ConfigError("t_end must be >= 0")
        self.updates_per_tick = int(self.updates_per_tick)
        if self.updates_per_tick < 1:
            raise ConfigError("updates_per_tick must be >= 1")
        self.x0 = as_vector(self.x0)
        if not np.all(np.isfinite(self.x0)):
            raise ConfigError("x0 must be finite")

    def to_dict(self):
        return {"algorithm": self.algorithm, "alpha": self.alpha,
                "epsilon": self.epsilon, "delta": self.delta, "t_end": self.t_end,
                "x0": [float(v) for v in self.x0],
                "updates_per_tick": self.updates_per_tick}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class StepRecord:
    """State at one tick; x_pred/branch describe the prediction that led here."""

    k: int
    t: float
    x: np.ndarray
    x_pred: np.ndarray | None
    branch: Branch
    f: float
    grad_norm: float
    f_star: float | None = None
    err_f: float | None = None
    err_x: float | None = None

    def __post_init__(self):
        if self.err_f is not None and self.err_f < -1e-9:
            raise ValueError(f"err_f = {self.err_f} below the optimum at k={self.k}; "
                             "the optimum oracle looks wrong")


@dataclass
class Trajectory:
    config: SolverConfig
    records: list[StepRecord] = field(default_factory=list)
    alpha_warning: str | None = None

    @property
    def err_f(self):
        return np.array([r.err_f if r.err_f is not None else np.nan for r in self.records])

    def branches(self):
        return [r.branch for r in self.records]


def update_gd(x_pred, grad_at_pred, alpha):
    """One gradient update from the warm start at the new sample time."""
    if not alpha > 0.0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    return as_vector(x_pred) - alpha * as_vector(grad_at_pred)


def check_capabilities(oracle, algorithm):
    caps = oracle.capabilities
    missing = [need for need in _NEEDS[algorithm]
               if not getattr(caps, f"has_exact_{need}" if need != "hessian"
                              else "has_exact_hessian")]
    if missing:
        raise CapabilityError(
            f"{algorithm} needs analytic {', '.join(missing)} which "
            f"{type(oracle).__name__} does not provide")


def _predict_at(oracle, algorithm, x, t_k, k, cfg):
    """Dispatch one prediction at (x, t_k). Returns a PredictionOutcome."""
    delta, eps = cfg.delta, cfg.epsilon
    if algorithm == "gd":
        return predict.predict_identity(x)
    if algorithm == "alg1":
        return predict.predict_alg1(x, oracle.grad_x(x, t_k), oracle.grad_t(x, t_k),
                                    delta, eps)
    if algorithm == "alg2":
        if k == 0:
            return predict.predict_identity(x)  # no previous sample yet
        f_now = oracle.value(x, t_k)
        f_prev = oracle.value(x, t_k - delta)
        return predict.predict_alg2(x, oracle.grad_x(x, t_k), f_now, f_prev, delta, eps)
    if algorithm == "alg3":
        return predict.predict_alg3(x, oracle.grad_x(x, t_k), oracle.grad_t(x, t_k),
                                    oracle.grad_xt(x, t_k), delta, eps)
    if algorithm == "alg4":
        g = oracle.grad_x(x, t_k)
        gt = oracle.grad_t(x, t_k)
        if linalg.dot(g, g) >= eps * eps:
            return predict.predict_alg4(x, g, gt, None, None, delta, eps)
        return predict.predict_alg4(x, g, gt, oracle.grad_xt(x, t_k),
                                    oracle.hess_xx(x, t_k), delta, eps)
    if algorithm == "alg4-approx":
        if k == 0:
            return predict.predict_identity(x)
        g = oracle.grad_x(x, t_k)
        if linalg.dot(g, g) >= eps * eps:
            f_now = oracle.value(x, t_k)
            f_prev = oracle.value(x, t_k - delta)
            return predict.predict_alg2(x, g, f_now, f_prev, delta, eps)
        gxt = fd_grad_xt(oracle, x, t_k, t_k - delta)
        return predict.predict_alg4(x, g, 0.0, gxt, oracle.hess_xx(x, t_k), delta, eps)
    if algorithm == "euler2":
        return predict.predict_euler_second_order(
            x, oracle.grad_xt(x, t_k), oracle.hess_xx(x, t_k), delta)
    raise ConfigError(f"unknown algorithm {algorithm!r}")


def run(oracle, config, optimum=None):
    """Run the prediction-update loop and record the trajectory.

    ``optimum`` maps t to (x_star, f_star); when None, the oracle's own
    analytic optimum is used if it has one, otherwise tracking errors are
    left unset. Deterministic: identical inputs give bit-identical
    trajectories. Raises NumericalAbort (with the partial trajectory
    attached) if the state stops being finite.
    """
    check_capabilities(oracle, config.algorithm)
    if optimum is None and oracle.optimum(0.0) is not None:
        optimum = oracle.optimum

    traj = Trajectory(config=config)
    m_M = getattr(oracle, "constants", None)
    upper = m_M.M if m_M is not None else (
        oracle.curvature_bounds[1] if getattr(oracle, "curvature_bounds", None) else None)
    if upper is None:
        traj.alpha_warning = ("no declared gradient-Lipschitz constant; "
                              "cannot verify alpha <= 1/(2M)")
        warnings.warn(traj.alpha_warning, stacklevel=2)
    elif config.alpha > 1.0 / (2.0 * upper):
        traj.alpha_warning = (f"alpha = {config.alpha} exceeds 1/(2M) = "
                              f"{1.0 / (2.0 * upper)}; convergence guarantees void")
        warnings.warn(traj.alpha_warning, stacklevel=2)

    n_ticks = int(math.floor(config.t_end / config.delta + 1e-9))
    x = config.x0.copy()
    arriving_pred = x.copy()
    arriving_branch = Branch.IDENTITY

    for k in range(n_ticks + 1):
        t_k = k * config.delta
        f_k = float(oracle.value(x, t_k))
        g_k = as_vector(oracle.grad_x(x, t_k))
        grad_norm = float(np.linalg.norm(g_k))
        if not (math.isfinite(f_k) and np.all(np.isfinite(x)) and math.isfinite(grad_norm)):
            traj.records.append(StepRecord(
                k=k, t=t_k, x=x.copy(), x_pred=arriving_pred, branch=arriving_branch,
                f=f_k, grad_norm=grad_norm))
            raise NumericalAbort(f"non-finite state at tick {k} (t={t_k})", traj)
        f_star = err_f = err_x = None
        x_star = None
        if optimum is not None:
            x_star, f_star = optimum(t_k)
            err_f = f_k - float(f_star)
            err_x = float(np.linalg.norm(x - as_vector(x_star)))
        traj.records.append(StepRecord(
            k=k, t=t_k, x=x.copy(), x_pred=arriving_pred, branch=arriving_branch,
            f=f_k, grad_norm=grad_norm, f_star=f_star, err_f=err_f, err_x=err_x))
        if k == n_ticks:
            break
        outcome = _predict_at(oracle, config.algorithm, x, t_k, k, config)
        t_next = (k + 1) * config.delta
        x_new = outcome.x_pred
        for _ in range(config.updates_per_tick):
            x_new = update_gd(x_new, oracle.grad_x(x_new, t_next), config.alpha)
        x = x_new
        arriving_pred = outcome.x_pred
        arriving_branch = outcome.branch
    return traj


def numerical_optimum(oracle, tol=1e-10, max_iter=200_000):
    """Offline high-accuracy optimum oracle via warm-started gradient descent.

    Returns a callable t -> (x_star, f_star). Step size comes from the
    oracle's curvature bounds when declared, else from a Hessian
    eigenvalue probe at the warm start.
    """
    state = {"x": np.zeros(oracle.n)}

    def solve_loop(t):
        x = state["x"].copy()
        if getattr(oracle, "curvature_bounds", None):
            m, M = oracle.curvature_bounds
        else:
            m, M = linalg.sym_eig_extents(np.atleast_2d(oracle.hess_xx(x, t)))
        step = 2.0 / (m + M)
        for _ in range(max_iter):
            g = as_vector(oracle.grad_x(x, t))
            if float(np.linalg.norm(g)) <= tol:
                state["x"] = x
                return x, float(oracle.value(x, t))
            x = x - step * g
        raise RuntimeError(f"inner solver did not reach ||grad|| <= {tol} at t={t}")

    return solve_loop


@dataclass
class TrackingSummary:
    """Tail statistics of the tracking error of one trajectory."""

    max_tail_err_f: float
    mean_tail_err_f: float
    err_sequence: np.ndarray

    def first_k_below(self, threshold):
        """Earliest k with err_f below the threshold, or None."""
        hits = np.nonzero(self.err_sequence < threshold)[0]
        return int(hits[0]) if hits.size else None


def tracking_error_summary(traj, tail_fraction):
    """Summarize err_f over the last ``tail_fraction`` of the records."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    errs = traj.err_f
    if np.isnan(errs).any():
        raise ValueError("trajectory has records without f_star")
    n_tail = int(math.floor(len(errs) * tail_fraction))
    if n_tail < 1:
        raise ValueError(f"tail of fraction {tail_fraction} over {len(errs)} records is empty")
    tail = errs[len(errs) - n_tail:]
    return TrackingSummary(max_tail_err_f=float(np.max(tail)),
                           mean_tail_err_f=float(np.mean(tail)),
                           err_sequence=errs)


# ---------------------------------------------------------------------------
# serialization


def _fmt(v):
    return "" if v is None else repr(float(v))


def trajectory_to_csv(traj):
    """Fixed-header CSV, one record per row; x components as trailing columns."""
    n = traj.config.x0.shape[0]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS + [f"x{i}" for i in range(n)])
    for r in traj.records:
        writer.writerow([r.k, repr(r.t), repr(r.f), _fmt(r.f_star), _fmt(r.err_f),
                         _fmt(r.err_x), repr(r.grad_norm), str(r.branch)]
                        + [repr(float(v)) for v in r.x])
    return buf.getvalue()


def trajectory_from_csv(text, config):
    """Rebuild the CSV-carried fields of a trajectory (x_pred is not in CSV)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    n = len(header) - len(CSV_FIELDS)
    traj = Trajectory(config=config)
    for row in reader:
        k, t, f, f_star, err_f, err_x, grad_norm, branch = row[:8]
        x = np.array([float(v) for v in row[8:8 + n]])
        traj.records.append(StepRecord(
            k=int(k), t=float(t), x=x, x_pred=None, branch=Branch(branch),
            f=float(f), grad_norm=float(grad_norm),
            f_star=float(f_star) if f_star else None,
            err_f=float(err_f) if err_f else None,
            err_x=float(err_x) if err_x else None))
    return traj


def trajectory_to_json(traj):
    """Full-fidelity JSON (Python float repr round-trips exactly)."""
    return json.dumps({
        "config": traj.config.to_dict(),
        "alpha_warning": traj.alpha_warning,
        "records": [{
            "k": r.k, "t": r.t, "x": [float(v) for v in r.x],
            "x_pred": None if r.x_pred is None else [float(v) for v in r.x_pred],
            "branch": str(r.branch), "f": r.f, "grad_norm": r.grad_norm,
            "f_star": r.f_star, "err_f": r.err_f, "err_x": r.err_x,
        } for r in traj.records],
    }, indent=1)


def trajectory_from_json(text):
    d = json.loads(text)
    traj = Trajectory(config=SolverConfig.from_dict(d["config"]),
                      alpha_warning=d.get("alpha_warning"))
    for r in d["records"]:
        traj.records.append(StepRecord(
            k=r["k"], t=r["t"], x=np.array(r["x"], dtype=np.float64),
            x_pred=None if r["x_pred"] is None else np.array(r["x_pred"], dtype=np.float64),
            branch=Branch(r["branch"]), f=r["f"], grad_norm=r["grad_norm"],
            f_star=r["f_star"], err_f=r["err_f"], err_x=r["err_x"]))
    return traj
