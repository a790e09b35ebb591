"""Receding-horizon point tracking as a streaming time-varying cost.

A planar robot head point follows a reference path; each axis solves an
independent horizon-quadratic cost whose data (reference window and
current position) shift every tick. The costs expose no analytic
temporal derivatives, so only the sampled-difference solvers apply. The
per-tick optimum is available in closed form, which gives an exact
controller error signal.
"""

from dataclasses import dataclass

import numpy as np

from tvtrack import engine, linalg
from tvtrack.costs import CapabilitySet, CostOracle, as_vector
from tvtrack.engine import SolverConfig, StepRecord, Trajectory, update_gd
from tvtrack.errors import CapabilityError, ConfigError
from tvtrack.predict import Branch

CLOSED_LOOP_ALGORITHMS = ("gd", "alg2", "alg4-approx")


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights, and simulation length of the tracking problem.

    The control penalty enters the cost as (1/lam) * ||u||^2.
    """

    Hp: int = 10
    Hu: int = 10
    lam: float = 10.0
    delta: float = 0.1
    sim_steps: int = 400
    x_h0: float = 0.0
    y_h0: float = 0.0
    u_init: float = 10.0

    def __post_init__(self):
        if self.Hp != self.Hu:
            raise ConfigError("prediction and control horizons must match here")
        if self.Hp < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.lam > 0.0:
            raise ConfigError("lam must be > 0")
        if not self.delta > 0.0:
            raise ConfigError("delta must be > 0")
        if self.sim_steps < 1:
            raise ConfigError("sim_steps must be >= 1")


@dataclass(frozen=True)
class ReferencePath:
    """Per-tick reference samples (r_x, r_y); must cover every horizon window."""

    samples: np.ndarray  # shape (len, 2)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != 2:
            raise ConfigError("samples must have shape (len, 2)")
        if not np.all(np.isfinite(s)):
            raise ConfigError("non-finite reference samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    def axis(self, axis):
        return self.samples[:, {"x": 0, "y": 1}[axis]]

    @classmethod
    def sine(cls, cfg, period_ticks=230):
        """The bundled path: y = sin(pi x), x in [-1, 1], patrolled back and forth.

        The path parameter follows s(k) = -cos(2 pi k / period). Smooth
        periodic pacing keeps the per-tick optimum moving for the whole
        run (so steady-state errors are meaningful) while the turnaround
        lulls give every solver windows to cross error thresholds. The
        default period places those windows inside the default run.
        """
        j = np.arange(cfg.sim_steps + cfg.Hp + 1)
        s = -np.cos(2.0 * np.pi * j / period_ticks)
        return cls(np.column_stack([s, np.sin(np.pi * s)]))


def accumulation_matrix(h):
    """Strictly lower triangular ones: position i accumulates inputs j < i."""
    return np.tril(np.ones((h, h)), -1)


class MpcAxisCost(CostOracle):
    """One axis of the tracking cost, over the horizon input vector.

    f(u, t_k) = ||r_window - (p_k + delta L u)||^2 + (1/lam) ||u||^2 with
    p_k read from the recorded position history. Time enters through the
    tick index, so t must sit on the sampling grid; the Hessian is
    analytic and constant but the temporal derivatives are not available.
    """

    def __init__(self, axis, cfg, path, positions):
        if len(path) < cfg.sim_steps + cfg.Hp:
            raise ConfigError(f"path must hold at least sim_steps + Hp = "
                              f"{cfg.sim_steps + cfg.Hp} samples, got {len(path)}")
        self.axis = axis
        self.cfg = cfg
        self.n = cfg.Hu
        self.capabilities = CapabilitySet(has_exact_grad_t=False,
                                          has_exact_grad_xt=False,
                                          has_exact_hessian=True)
        self._ref = path.axis(axis)
        self._positions = positions  # list of per-tick positions, appended by the loop
        self._L = accumulation_matrix(cfg.Hu)
        self._H = 2.0 * cfg.delta ** 2 * (self._L.T @ self._L) \
            + (2.0 / cfg.lam) * np.eye(cfg.Hu)
        lo, hi = linalg.sym_eig_extents(self._H)
        self.curvature_bounds = (lo, hi)

    def _tick(self, t):
        j = int(round(t / self.cfg.delta))
        if abs(t - j * self.cfg.delta) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not on the sampling grid")
        if not 0 <= j < len(self._positions):
            raise ValueError(f"no recorded position for tick {j}")
        if j + self.cfg.Hp > self._ref.shape[0]:
            raise ValueError(f"horizon window at tick {j} runs off the path")
        return j

    def _residual(self, u, j):
        window = self._ref[j:j + self.cfg.Hp]
        pos = self._positions[j] + self.cfg.delta * (self._L @ u)
        return window - pos

    def value(self, u, t):
        u = as_vector(u)
        j = self._tick(t)
        r = self._residual(u, j)
        return float(r @ r) + float(u @ u) / self.cfg.lam

    def grad_x(self, u, t):
        u = as_vector(u)
        j = self._tick(t)
        r = self._residual(u, j)
        return -2.0 * self.cfg.delta * (self._L.T @ r) + (2.0 / self.cfg.lam) * u

    def hess_xx(self, u, t):
        return self._H.copy()

    def optimum(self, t):
        j = self._tick(t)
        return mpc_optimum(self.axis, self.cfg, self._ref, j, self._positions[j],
                           value_fn=lambda u: self.value(u, t))


def mpc_optimum(axis, cfg, ref, k, p_k, value_fn=None):
    """Closed-form per-tick optimum of one axis cost via the normal equations."""
    ref = np.asarray(ref, dtype=np.float64)
    if ref.ndim == 2:
        ref = ref[:, {"x": 0, "y": 1}[axis]]
    if k + cfg.Hp > ref.shape[0]:
        raise ValueError(f"horizon window at tick {k} runs off the path")
    L = accumulation_matrix(cfg.Hu)
    window = ref[k:k + cfg.Hp]
    A = cfg.delta ** 2 * (L.T @ L) + np.eye(cfg.Hu) / cfg.lam
    b = cfg.delta * (L.T @ (window - p_k))
    u_star = linalg.spd_solve(A, b)
    if value_fn is None:
        r = window - (p_k + cfg.delta * (L @ u_star))
        j_star = float(r @ r) + float(u_star @ u_star) / cfg.lam
    else:
        j_star = float(value_fn(u_star))
    return u_star, j_star


def axis_solver_config(cfg, algorithm, alpha, epsilon, updates_per_tick=1):
    """A SolverConfig consistent with the closed-loop grid and warm start."""
    return SolverConfig(algorithm=algorithm, alpha=alpha, epsilon=epsilon,
                        delta=cfg.delta, t_end=cfg.sim_steps * cfg.delta,
                        x0=np.full(cfg.Hu, cfg.u_init),
                        updates_per_tick=updates_per_tick)


@dataclass
class ClosedLoopResult:
    traj_u1: Trajectory
    traj_u2: Trajectory
    robot_path: np.ndarray  # columns: k, t, x_h, y_h, r_x, r_y

    def robot_path_csv(self):
        lines = ["k,t,x_h,y_h,r_x,r_y"]
        for row in self.robot_path:
            lines.append(",".join([str(int(row[0]))] + [repr(v) for v in row[1:]]))
        return "\n".join(lines) + "\n"


def run_closed_loop(cfg, path, solver_cfg):
    """Simulate the receding-horizon loop with one solver pass per tick and axis.

    ``solver_cfg`` is a SolverConfig shared by both axes or a pair of
    them (x axis, y axis); algorithms are restricted to the ones that
    work without analytic temporal derivatives. The input vector carries
    over between ticks unshifted, the first input component drives the
    dynamics, and the recorded err_x column is the controller error
    ||u_k - u_star_k||.
    """
    cfgs = solver_cfg if isinstance(solver_cfg, (tuple, list)) else (solver_cfg, solver_cfg)
    if len(cfgs) != 2:
        raise ConfigError("need one solver config or a pair (x axis, y axis)")
    for sc in cfgs:
        if sc.algorithm not in CLOSED_LOOP_ALGORITHMS:
            raise CapabilityError(
                f"{sc.algorithm} needs analytic temporal derivatives the "
                f"streaming cost does not expose; use one of {CLOSED_LOOP_ALGORITHMS}")
        if abs(sc.delta - cfg.delta) > 1e-15:
            raise ConfigError("solver delta must match the simulation delta")
        if sc.x0.shape[0] != cfg.Hu:
            raise ConfigError("solver x0 must have horizon length")

    positions = {"x": [cfg.x_h0], "y": [cfg.y_h0]}
    oracles = {a: MpcAxisCost(a, cfg, path, positions[a]) for a in ("x", "y")}
    axis_cfg = {"x": cfgs[0], "y": cfgs[1]}
    u = {"x": axis_cfg["x"].x0.copy(), "y": axis_cfg["y"].x0.copy()}
    trajs = {}
    for a in ("x", "y"):
        tr = Trajectory(config=axis_cfg[a])
        hi = oracles[a].curvature_bounds[1]
        if axis_cfg[a].alpha > 1.0 / (2.0 * hi):
            tr.alpha_warning = (f"alpha = {axis_cfg[a].alpha} exceeds 1/(2M) = "
                                f"{1.0 / (2.0 * hi)}; convergence guarantees void")
        trajs[a] = tr

    arriving = {a: (u[a].copy(), Branch.IDENTITY) for a in ("x", "y")}
    path_rows = []
    for k in range(cfg.sim_steps + 1):
        t_k = k * cfg.delta
        for a in ("x", "y"):
            oracle = oracles[a]
            u_k = u[a]
            f_k = oracle.value(u_k, t_k)
            g_k = oracle.grad_x(u_k, t_k)
            u_star, j_star = oracle.optimum(t_k)
            pred, branch = arriving[a]
            trajs[a].records.append(StepRecord(
                k=k, t=t_k, x=u_k.copy(), x_pred=pred, branch=branch,
                f=f_k, grad_norm=float(np.linalg.norm(g_k)),
                f_star=j_star, err_f=f_k - j_star,
                err_x=float(np.linalg.norm(u_k - u_star))))
        path_rows.append([k, t_k, positions["x"][k], positions["y"][k],
                          path.axis("x")[k], path.axis("y")[k]])
        if k == cfg.sim_steps:
            break
        # apply the first input component, then predict and update on the new cost
        positions["x"].append(positions["x"][k] + cfg.delta * u["x"][0])
        positions["y"].append(positions["y"][k] + cfg.delta * u["y"][0])
        t_next = (k + 1) * cfg.delta
        for a in ("x", "y"):
            oracle, sc = oracles[a], axis_cfg[a]
            outcome = engine._predict_at(oracle, sc.algorithm, u[a], t_k, k, sc)
            u_new = outcome.x_pred
            for _ in range(sc.updates_per_tick):
                u_new = update_gd(u_new, oracle.grad_x(u_new, t_next), sc.alpha)
            u[a] = u_new
            arriving[a] = (outcome.x_pred, outcome.branch)
    return ClosedLoopResult(traj_u1=trajs["x"], traj_u2=trajs["y"],
                            robot_path=np.array(path_rows))
