import numpy as np
import pytest

from tvtrack import linalg
from tvtrack.errors import NotSPDError
from tvtrack.linalg import SymMatrix, _fallback

BACKENDS = [_fallback]
if linalg.USING_COMPILED_CORE:
    from tvtrack.linalg import _core
    BACKENDS.insert(0, _core)


def test_vector_primitives():
    assert linalg.dot([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert linalg.norm2([3.0, 4.0]) == 5.0
    assert np.array_equal(linalg.axpy(2.0, [1.0, 0.0], [0.0, 1.0]), [2.0, 1.0])


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        linalg.dot([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        linalg.axpy(1.0, [1.0], [1.0, 2.0])


def test_spd_solve_identity_and_diag():
    assert np.allclose(linalg.spd_solve(np.eye(2), [3.0, -1.0]), [3.0, -1.0])
    assert np.allclose(linalg.spd_solve(np.diag([2.0, 4.0]), [1.0, 1.0]), [0.5, 0.25])


def test_spd_solve_zero_pivot_raises():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])  # singular, zero second pivot
    with pytest.raises(NotSPDError):
        linalg.spd_solve(a, [1.0, 1.0])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_cholesky_not_spd_both_backends(impl):
    bad = SymMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSPDError):
        impl.cholesky_packed(bad.packed.copy(), 2)


def test_spd_solve_residual_bound_random():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        g = rng.standard_normal((n, n))
        a = g @ g.T + np.eye(n)
        b = rng.standard_normal(n)
        z = linalg.spd_solve(a, b)
        resid = np.linalg.norm(a @ z - b)
        bound = 1e-10 * (np.linalg.norm(a) * np.linalg.norm(z) + np.linalg.norm(b))
        assert resid <= bound


def test_sym_matrix_round_trip():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((5, 5))
    a = g + g.T
    sym = SymMatrix.from_dense(a)
    assert np.array_equal(sym.to_dense(), a)
    assert SymMatrix.identity(3).to_dense().tolist() == np.eye(3).tolist()


def test_sym_matrix_validation():
    with pytest.raises(ValueError):
        SymMatrix(2, np.array([1.0, np.inf, 1.0]))
    with pytest.raises(ValueError):
        SymMatrix(2, np.array([1.0, 2.0]))  # wrong packed length


def test_eig_extents_against_numpy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        g = rng.standard_normal((n, n))
        a = g @ g.T + np.eye(n)
        lo, hi = linalg.sym_eig_extents(a)
        ev = np.linalg.eigvalsh(a)
        assert abs(lo - ev[0]) <= 1e-8 * max(1.0, ev[-1])
        assert abs(hi - ev[-1]) <= 1e-8 * max(1.0, ev[-1])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.BACKEND)
def test_backend_solve_parity(impl):
    rng = np.random.default_rng(3)
    g = rng.standard_normal((8, 8))
    a = g @ g.T + np.eye(8)
    b = rng.standard_normal(8)
    sym = SymMatrix.from_dense(a)
    factor = impl.cholesky_packed(sym.packed.copy(), 8)
    z = impl.solve_packed_factored(factor, 8, b)
    assert np.allclose(a @ z, b, rtol=0, atol=1e-10)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")
def test_backends_agree_on_tracker_kernels():
    core, fb = BACKENDS[0], BACKENDS[1]
    x1 = np.linspace(-2.0, 2.0, 33)
    x2 = x1.copy()
    # few ticks, eps below the running gradient norm: near the moving optimum
    # the prediction coefficient delta*|grad_t|/||g||^2 makes the tick map
    # locally expansive and ulp noise amplifies, so parity is only meaningful
    # over the approach phase
    core.tracker_alg1_run(x1, 1.5, 1.1, 0.0, 0.1, 0.25, 1e-9, 12)
    fb.tracker_alg1_run(x2, 1.5, 1.1, 0.0, 0.1, 0.25, 1e-9, 12)
    assert np.allclose(x1, x2, rtol=1e-12, atol=5e-15)
    y1 = np.linspace(-1.0, 3.0, 17)
    y2 = y1.copy()
    core.tracker_euler2_run(y1, 1.5, 1.1, 0.0, 0.1, 0.25, 25)
    fb.tracker_euler2_run(y2, 1.5, 1.1, 0.0, 0.1, 0.25, 25)
    assert np.allclose(y1, y2, rtol=1e-10, atol=1e-14)


@pytest.mark.skipif(not linalg.USING_COMPILED_CORE,
                    reason="per-call timing needs the overhead-free compiled loops")
def test_vector_primitive_cost_is_linear():
    # per-call time ratio between n=1e4 and n=1e3 sits in a loose linear band
    from tvtrack.linalg import _core
    x3, y3 = np.arange(1000.0) + 1.0, np.ones(1000)
    x4, y4 = np.arange(10000.0) + 1.0, np.ones(10000)
    for kind in ("dot", "norm2", "axpy"):
        t3 = min(_core.bench_reps(kind, x3, y3, 50_000) / 50_000 for _ in range(3))
        t4 = min(_core.bench_reps(kind, x4, y4, 5_000) / 5_000 for _ in range(3))
        assert 5.0 <= t4 / t3 <= 30.0, f"{kind} ratio {t4 / t3}"
