import numpy as np
import pytest

from tvtrack import predict
from tvtrack.errors import NotSPDError
from tvtrack.predict import (Branch, first_order_model, predict_alg1,
                             predict_alg2, predict_alg3, predict_alg4,
                             predict_euler_second_order, predict_identity)


def test_identity_prediction():
    out = predict_identity([1.0, 2.0])
    assert np.array_equal(out.x_pred, [1.0, 2.0])
    assert out.branch is Branch.IDENTITY
    assert out.step_norm == 0.0


def test_alg1_scalar_hand_value():
    out = predict_alg1([2.0], [4.0], 3.0, delta=0.1, eps=0.3)
    assert out.x_pred[0] == pytest.approx(1.925, abs=1e-15)
    assert out.branch is Branch.FIRST_ORDER_GRAD_T
    assert out.step_norm == pytest.approx(0.075, abs=1e-15)


def test_alg1_zero_drift_keeps_point():
    out = predict_alg1([5.0, -1.0], [2.0, 1.0], 0.0, delta=0.1, eps=0.3)
    assert np.array_equal(out.x_pred, [5.0, -1.0])
    assert out.branch is Branch.IDENTITY


def test_alg1_guard_blocks_small_gradient():
    out = predict_alg1([1.0], [0.15], 2.0, delta=0.1, eps=0.3)
    assert out.branch is Branch.IDENTITY
    assert np.array_equal(out.x_pred, [1.0])


def test_alg1_guard_tie_fires():
    # comparison is >=, so a gradient norm exactly at eps takes the step
    out = predict_alg1([1.0], [0.3], 1.0, delta=0.1, eps=0.3)
    assert out.branch is Branch.FIRST_ORDER_GRAD_T


def test_alg1_direction_antiparallel_with_exact_magnitude():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 6))
        x = rng.standard_normal(n)
        g = rng.standard_normal(n)
        gt = float(rng.standard_normal())
        delta, eps = 0.05, 0.2
        out = predict_alg1(x, g, gt, delta, eps)
        gn = np.linalg.norm(g)
        if gn >= eps and gt != 0.0:
            step = out.x_pred - x
            assert out.step_norm == pytest.approx(delta * abs(gt) / gn, rel=1e-12)
            cos = float(step @ g) / (np.linalg.norm(step) * gn)
            assert cos == pytest.approx(-1.0, abs=1e-12)


def test_alg2_matches_alg1_when_difference_equals_drift():
    # |f_now - f_prev| = 0.3 carries the same information as delta*|grad_t|
    out = predict_alg2([2.0], [4.0], f_now=1.0, f_prev=0.7, delta=0.1, eps=0.3)
    ref = predict_alg1([2.0], [4.0], 3.0, delta=0.1, eps=0.3)
    assert out.x_pred[0] == pytest.approx(ref.x_pred[0], abs=1e-15)


def test_alg2_zero_difference_is_identity_displacement():
    out = predict_alg2([2.0], [4.0], f_now=1.0, f_prev=1.0, delta=0.1, eps=0.3)
    assert out.step_norm == 0.0
    assert out.branch is Branch.IDENTITY


def test_alg2_guard():
    out = predict_alg2([2.0], [0.1], f_now=1.0, f_prev=0.0, delta=0.1, eps=0.3)
    assert out.branch is Branch.IDENTITY


def test_alg3_hand_value():
    out = predict_alg3([0.0], [2.0], grad_t=1.0, grad_xt=[-1.0], delta=0.5, eps=0.1)
    assert out.x_pred[0] == pytest.approx(-1.0 / 3.0, rel=1e-15)
    assert out.branch is Branch.FIRST_ORDER_XT


def test_alg3_zero_mixed_derivative_is_bit_identical_to_alg1():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        x = rng.standard_normal(n)
        g = rng.standard_normal(n) + 0.5
        gt = float(rng.standard_normal())
        o3 = predict_alg3(x, g, gt, np.zeros(n), delta=0.1, eps=0.2)
        o1 = predict_alg1(x, g, gt, delta=0.1, eps=0.2)
        assert np.array_equal(o3.x_pred, o1.x_pred)
        assert o3.branch == o1.branch


def test_alg3_positive_alignment_falls_back_to_alg1():
    x, g, gt = np.array([1.0, 1.0]), np.array([1.0, 0.5]), 2.0
    gxt = np.array([0.3, 0.3])  # gxt . g > 0
    o3 = predict_alg3(x, g, gt, gxt, delta=0.1, eps=0.2)
    o1 = predict_alg1(x, g, gt, delta=0.1, eps=0.2)
    assert np.array_equal(o3.x_pred, o1.x_pred)
    assert o3.branch is Branch.FIRST_ORDER_GRAD_T


def test_alg3_short_extrapolated_gradient_falls_back():
    # ||g + delta*gxt|| < eps but ||g|| >= eps: line-4 fallback to alg1
    x, g, gt = np.array([0.0]), np.array([0.35]), 1.0
    gxt = np.array([-3.0])
    o3 = predict_alg3(x, g, gt, gxt, delta=0.1, eps=0.3)
    o1 = predict_alg1(x, g, gt, delta=0.1, eps=0.3)
    assert np.array_equal(o3.x_pred, o1.x_pred)


def test_alg4_small_gradient_zero_mixed_derivative():
    out = predict_alg4([1.0, 1.0], [0.01, 0.0], 0.5, [0.0, 0.0], np.eye(2),
                       delta=0.1, eps=0.3)
    assert out.step_norm == 0.0
    assert out.branch is Branch.IDENTITY


def test_alg4_hessian_solve_hand_value():
    x = np.array([1.0, -1.0])
    out = predict_alg4(x, [0.01, 0.01], 0.2, [1.0, 1.0], np.diag([2.0, 4.0]),
                       delta=0.1, eps=0.3)
    assert np.allclose(out.x_pred, x - 0.1 * np.array([0.5, 0.25]), atol=1e-15)
    assert out.branch is Branch.SECOND_ORDER


def test_alg4_large_gradient_equals_alg1():
    x, g, gt = np.array([2.0]), np.array([4.0]), 3.0
    o4 = predict_alg4(x, g, gt, None, None, delta=0.1, eps=0.3)
    o1 = predict_alg1(x, g, gt, delta=0.1, eps=0.3)
    assert np.array_equal(o4.x_pred, o1.x_pred)


def test_alg4_non_spd_hessian_raises():
    with pytest.raises(NotSPDError):
        predict_alg4([0.0], [0.0], 0.0, [1.0], np.array([[-1.0]]), delta=0.1, eps=0.3)


def test_euler_second_order():
    out = predict_euler_second_order([1.0], [3.0], np.eye(1), delta=0.1)
    assert out.x_pred[0] == pytest.approx(0.7, abs=1e-15)
    assert out.branch is Branch.SECOND_ORDER
    zero = predict_euler_second_order([1.0, 2.0], [0.0, 0.0], np.eye(2), delta=0.1)
    assert zero.step_norm == 0.0


def test_non_finite_inputs_rejected():
    with pytest.raises(ValueError):
        predict_alg1([np.inf], [1.0], 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        predict_alg1([1.0], [np.nan], 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        predict_alg1([1.0], [1.0], 1.0, -0.1, 0.1)


def test_model_ordering_alg1_never_above_gd():
    rng = np.random.default_rng(9)
    for _ in range(500):
        n = int(rng.integers(1, 4))
        x = rng.standard_normal(n)
        g = rng.standard_normal(n)
        gt = float(rng.standard_normal())
        delta, eps = 0.1, 0.3
        f = float(rng.standard_normal())
        fg = first_order_model(f, g, gt, x, predict_identity(x).x_pred, delta)
        f1 = first_order_model(f, g, gt, x, predict_alg1(x, g, gt, delta, eps).x_pred, delta)
        assert f1 <= fg + 1e-12


def test_model_ordering_alg3_boundary():
    """The extrapolated step helps the model exactly when gxt . (g + delta gxt) <= 0.

    The guard only checks gxt . g <= 0, so when the time-shifted gradient
    reverses direction the modeled cost of the extrapolated step exceeds
    the plain first-order one; with the stricter alignment it never does.
    """
    delta, eps = 0.1, 0.1
    f, gt = 0.0, 1.0
    # sign reversal: g + delta*gxt points the other way
    x, g, gxt = np.array([0.0]), np.array([0.2]), np.array([-5.0])
    o3 = predict_alg3(x, g, gt, gxt, delta, eps)
    o1 = predict_alg1(x, g, gt, delta, eps)
    assert o3.branch is Branch.FIRST_ORDER_XT
    f3 = first_order_model(f, g, gt, x, o3.x_pred, delta)
    f1 = first_order_model(f, g, gt, x, o1.x_pred, delta)
    assert f3 > f1  # documented failure mode of the ordering claim

    rng = np.random.default_rng(13)
    checked = 0
    for _ in range(2000):
        n = int(rng.integers(1, 4))
        x = rng.standard_normal(n)
        g = rng.standard_normal(n)
        gxt = rng.standard_normal(n)
        gt = float(rng.standard_normal())
        gp = g + delta * gxt
        o3 = predict_alg3(x, g, gt, gxt, delta, eps)
        if o3.branch is Branch.FIRST_ORDER_XT and float(gxt @ gp) <= 0.0:
            o1 = predict_alg1(x, g, gt, delta, eps)
            f3 = first_order_model(f, g, gt, x, o3.x_pred, delta)
            f1 = first_order_model(f, g, gt, x, o1.x_pred, delta)
            assert f3 <= f1 + 1e-12
            checked += 1
    assert checked > 100
