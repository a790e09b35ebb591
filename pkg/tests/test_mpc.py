import numpy as np
import pytest

from tvtrack import mpc
from tvtrack.costs import CapabilitySet
from tvtrack.errors import CapabilityError, ConfigError
from tvtrack.mpc import (ClosedLoopResult, MpcAxisCost, MpcConfig,
                         ReferencePath, accumulation_matrix, axis_solver_config,
                         mpc_optimum, run_closed_loop)

from helpers import central_grad_x, rel_err


def tiny_cfg(**kw):
    base = dict(Hp=2, Hu=2, lam=1.0, delta=1.0, sim_steps=3, u_init=0.0)
    base.update(kw)
    return MpcConfig(**base)


def flat_path(cfg, rx=0.0, ry=0.0):
    n = cfg.sim_steps + cfg.Hp + 1
    return ReferencePath(np.column_stack([np.full(n, rx), np.full(n, ry)]))


def oracle_at(cfg, path, axis="x", positions=None):
    return MpcAxisCost(axis, cfg, path, positions if positions is not None else [0.0])


def test_config_validation():
    with pytest.raises(ConfigError):
        MpcConfig(Hp=3, Hu=2)
    with pytest.raises(ConfigError):
        MpcConfig(lam=0.0)
    with pytest.raises(ConfigError):
        MpcConfig(sim_steps=0)


def test_cost_value_hand_example():
    # horizon 2, unit weight: positions (0, u0); residuals (1, 1-u0); plus ||u||^2
    cfg = tiny_cfg()
    path = flat_path(cfg, rx=1.0)
    o = oracle_at(cfg, path)
    assert o.value(np.array([1.0, 0.0]), 0.0) == pytest.approx(2.0, abs=1e-14)
    assert o.value(np.zeros(2), 0.0) == pytest.approx(2.0, abs=1e-14)  # 1 + 1 + 0


def test_cost_zero_when_on_target():
    cfg = tiny_cfg()
    path = flat_path(cfg, rx=0.5)
    o = oracle_at(cfg, path, positions=[0.5])
    assert o.value(np.zeros(2), 0.0) == 0.0


def test_gradient_matches_central_differences():
    cfg = MpcConfig(Hp=10, Hu=10, lam=10.0, delta=0.1, sim_steps=5, u_init=0.0)
    path = ReferencePath.sine(cfg)
    o = oracle_at(cfg, path, positions=[0.3])
    rng = np.random.default_rng(21)
    for _ in range(20):
        u = rng.uniform(-2.0, 2.0, cfg.Hu)
        assert rel_err(central_grad_x(o, u, 0.0), o.grad_x(u, 0.0)) <= 1e-8


def test_capability_set_reflects_streaming_cost():
    cfg = tiny_cfg()
    o = oracle_at(cfg, flat_path(cfg))
    assert o.capabilities == CapabilitySet(False, False, True)
    with pytest.raises(CapabilityError):
        o.grad_t(np.zeros(2), 0.0)


def test_hessian_strong_convexity_constants():
    cfg = MpcConfig()  # Hp = Hu = 10, lam = 10, delta = 0.1
    path = ReferencePath.sine(cfg)
    o = oracle_at(cfg, path)
    h = o.hess_xx(np.zeros(10), 0.0)
    ev = np.linalg.eigvalsh(h)
    L = accumulation_matrix(10)
    lmax = np.linalg.eigvalsh(L.T @ L)[-1]
    assert abs(ev[0] - 2.0 / cfg.lam) <= 1e-10
    assert abs(ev[-1] - (2.0 / cfg.lam + 2.0 * cfg.delta ** 2 * lmax)) <= 1e-10


def test_optimum_zero_when_path_at_position():
    cfg = tiny_cfg()
    u_star, j_star = mpc_optimum("x", cfg, flat_path(cfg, rx=0.7).axis("x"), 0, 0.7)
    assert np.allclose(u_star, 0.0) and j_star == pytest.approx(0.0)


def test_optimum_single_step_horizon_cannot_act():
    cfg = MpcConfig(Hp=1, Hu=1, lam=1.0, delta=1.0, sim_steps=2)
    u_star, j_star = mpc_optimum("x", cfg, np.array([1.0, 1.0, 1.0]), 0, 0.0)
    assert u_star[0] == 0.0  # the lone tracking term ignores u
    assert j_star == pytest.approx(1.0)


def test_optimum_hand_example_and_brute_force():
    cfg = tiny_cfg()
    ref = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    u_star, j_star = mpc_optimum("x", cfg, ref, 0, 0.0)
    assert np.allclose(u_star, [0.5, 0.0], atol=1e-12)
    assert j_star == pytest.approx(1.5, abs=1e-12)

    # dense grid search over [-3, 3]^2 at 1e-3 resolution, evaluated row-wise
    grid = np.arange(-3.0, 3.0 + 1e-12, 1e-3)
    best = np.inf
    arg = None
    for u0 in grid:
        pos1 = 0.0 + cfg.delta * u0
        j = (1.0 - 0.0) ** 2 + (1.0 - pos1) ** 2 + (u0 ** 2 + grid ** 2) / cfg.lam
        i = int(np.argmin(j))
        if j[i] < best:
            best, arg = float(j[i]), (u0, grid[i])
    assert best == pytest.approx(j_star, abs=1e-6)
    assert abs(arg[0] - u_star[0]) <= 1e-3 and abs(arg[1] - u_star[1]) <= 1e-3


def test_normal_equation_residual():
    cfg = MpcConfig()
    path = ReferencePath.sine(cfg)
    rng = np.random.default_rng(31)
    L = accumulation_matrix(cfg.Hu)
    A = cfg.delta ** 2 * (L.T @ L) + np.eye(cfg.Hu) / cfg.lam
    for _ in range(25):
        k = int(rng.integers(0, cfg.sim_steps))
        p = float(rng.uniform(-2, 2))
        u_star, _ = mpc_optimum("y", cfg, path.axis("y"), k, p)
        b = cfg.delta * (L.T @ (path.axis("y")[k:k + cfg.Hp] - p))
        assert np.linalg.norm(A @ u_star - b) <= 1e-10


def test_reference_path_validation_and_length():
    cfg = MpcConfig()
    path = ReferencePath.sine(cfg)
    assert len(path) >= cfg.sim_steps + cfg.Hp
    with pytest.raises(ConfigError):
        ReferencePath(np.array([[np.inf, 0.0]]))
    short = ReferencePath(np.zeros((3, 2)))
    with pytest.raises(ConfigError):
        MpcAxisCost("x", cfg, short, [0.0])


def test_horizon_window_out_of_range():
    cfg = tiny_cfg()
    o = oracle_at(cfg, flat_path(cfg), positions=[0.0] * 10)
    with pytest.raises(ValueError):
        o.value(np.zeros(2), 9.0)  # window would run off the path


def test_closed_loop_rejects_exact_derivative_algorithms():
    cfg = MpcConfig(sim_steps=5)
    path = ReferencePath.sine(cfg)
    for alg in ("alg1", "alg3", "alg4", "euler2"):
        with pytest.raises(CapabilityError):
            run_closed_loop(cfg, path, axis_solver_config(cfg, alg, 0.5, 0.03))


def test_closed_loop_stays_at_optimum_on_flat_path():
    cfg = tiny_cfg(sim_steps=5, u_init=0.0)
    path = flat_path(cfg, rx=0.0, ry=0.0)  # robot starts on target
    res = run_closed_loop(cfg, path, axis_solver_config(cfg, "gd", 0.3, 0.03))
    for traj in (res.traj_u1, res.traj_u2):
        for r in traj.records:
            assert np.allclose(r.x, 0.0, atol=1e-14)
            assert r.err_x <= 1e-12
    assert np.allclose(res.robot_path[:, 2:4], 0.0)


def test_closed_loop_is_deterministic():
    cfg = MpcConfig(sim_steps=30)
    path = ReferencePath.sine(cfg)
    sc = axis_solver_config(cfg, "alg2", 0.5, 0.03)
    a = run_closed_loop(cfg, path, sc)
    b = run_closed_loop(cfg, path, sc)
    assert np.array_equal(a.robot_path, b.robot_path)
    for ta, tb in zip((a.traj_u1, a.traj_u2), (b.traj_u1, b.traj_u2)):
        for ra, rb in zip(ta.records, tb.records):
            assert np.array_equal(ra.x, rb.x) and ra.err_x == rb.err_x


def test_closed_loop_robot_path_csv():
    cfg = MpcConfig(sim_steps=4)
    path = ReferencePath.sine(cfg)
    res = run_closed_loop(cfg, path, axis_solver_config(cfg, "gd", 0.5, 0.03))
    text = res.robot_path_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "k,t,x_h,y_h,r_x,r_y"
    assert len(lines) == cfg.sim_steps + 2


def test_closed_loop_mixed_axis_configs():
    cfg = MpcConfig(sim_steps=10)
    path = ReferencePath.sine(cfg)
    res = run_closed_loop(cfg, path, (axis_solver_config(cfg, "alg2", 0.5, 0.03),
                                      axis_solver_config(cfg, "gd", 0.5, 0.03)))
    assert res.traj_u1.config.algorithm == "alg2"
    assert res.traj_u2.config.algorithm == "gd"
