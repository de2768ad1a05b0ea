import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import crandn, random_quadratic, random_unit
from ris_mimo.reflector import (ReflectorQuadratic, complex_from_real, eval_reflector_objective,
                                lift_to_real, real_vector)
from ris_mimo.scf import (DegenerateConstraintError, _Kernel, lambda_bound,
                          reflector_kkt_residual, scf_constraint_matrix, scf_solve, scf_step)


def _power_iteration(m, iters=5000):
    v = np.ones(m.shape[0], complex)
    for _ in range(iters):
        v = m @ v
        v /= np.linalg.norm(v)
    return np.vdot(v, m @ v).real


def test_lambda_bound_examples(rng):
    zero = ReflectorQuadratic(np.zeros(6, complex), np.zeros((6, 3), complex))
    assert lambda_bound(zero) == 0.0
    q, _ = np.linalg.qr(crandn(rng, 16, 8))
    assert lambda_bound(ReflectorQuadratic(np.zeros(16, complex), q)) == pytest.approx(1.0)
    q = random_quadratic(rng, 7, 3)
    oracle = 7 / 8 * _power_iteration(q.gram()) + np.linalg.norm(q.a_mat.conj().T @ q.a_r)
    assert abs(lambda_bound(q) - oracle) <= 1e-6


def test_constraint_matrix(rng):
    b = scf_constraint_matrix(np.ones(3))
    expected = np.zeros((4, 7))
    expected[[0, 1, 2, 3], [0, 1, 2, 6]] = 1
    np.testing.assert_array_equal(b, expected)
    th = crandn(rng, 5)
    b = scf_constraint_matrix(th)
    np.testing.assert_allclose(b @ b.T, np.eye(6), atol=1e-15)
    np.testing.assert_allclose(b @ real_vector(np.exp(1j * np.angle(th))), np.ones(6), atol=1e-15)
    with pytest.raises(ValueError, match="undefined phase"):
        scf_constraint_matrix(np.array([1.0, 0.0]))


def test_step_with_zero_quadratic_returns_projection(rng):
    q = ReflectorQuadratic(np.zeros(8, complex), np.zeros((8, 4), complex))
    th = crandn(rng, 4)
    x = scf_step(lift_to_real(q, 0.3), scf_constraint_matrix(th))
    np.testing.assert_allclose(x, real_vector(np.exp(1j * np.angle(th))), atol=1e-14)


def test_step_feasible_and_optimal(rng):
    for _ in range(20):
        q = random_quadratic(rng, 5, 2)
        lift = lift_to_real(q, lambda_bound(q))
        b = scf_constraint_matrix(crandn(rng, 5))
        x = scf_step(lift, b)
        assert np.max(np.abs(b @ x - 1)) <= 1e-10
        rbar = 2 * lift.shifted()
        proj = np.eye(11) - b.T @ b  # null space of B (orthonormal rows)
        for _ in range(10):
            d = proj @ rng.standard_normal(11)
            assert (x + d) @ rbar @ (x + d) >= x @ rbar @ x - 1e-9


def test_step_requires_positive_definite_shift():
    q = ReflectorQuadratic(np.zeros(4, complex), np.zeros((4, 2), complex))
    with pytest.raises(DegenerateConstraintError):
        scf_step(lift_to_real(q, 0.0), scf_constraint_matrix(np.ones(2)))


def test_kernel_matches_dense_step(rng):
    q = random_quadratic(rng, 6, 3)
    lift = lift_to_real(q, lambda_bound(q))
    kernel = _Kernel(lift)
    for _ in range(5):
        th = random_unit(rng, 6)
        dense = scf_step(lift, scf_constraint_matrix(th))
        np.testing.assert_allclose(kernel.step(th.real, th.imag), dense, atol=1e-12)
        # same constraint, same iterate
        np.testing.assert_array_equal(scf_step(lift, scf_constraint_matrix(th)), dense)


def test_zero_instance_stops_immediately(rng):
    q = ReflectorQuadratic(np.zeros(6, complex), np.zeros((6, 3), complex))
    th0 = random_unit(rng, 3)
    th, state = scf_solve(q, th0)
    assert state.iterations == 1 and state.converged
    assert state.objective_trace[-1] == 0.0
    np.testing.assert_allclose(th, th0, atol=1e-12)


def test_single_element_phase_scan(rng):
    u = crandn(rng, 4)
    q = ReflectorQuadratic(1.7 * np.exp(0.9j) * u + 0.2 * crandn(rng, 4), u[:, None])
    grid = np.linspace(-np.pi, np.pi, 200001)
    h = [eval_reflector_objective(q, np.array([np.exp(1j * a)])) for a in grid[::100]]
    coarse = grid[::100][int(np.argmin(h))]
    res = minimize(lambda a: eval_reflector_objective(q, np.exp(1j * a)), [coarse], tol=1e-14)
    best = res.x[0]
    assert np.angle(np.exp(1j * (best - np.angle(np.vdot(u, q.a_r))))) == pytest.approx(0, abs=1e-6)
    th, state = scf_solve(q, np.ones(1), eps=1e-14, max_iter=10000)
    assert abs(np.angle(th[0] * np.exp(-1j * best))) <= 1e-4


def test_four_elements_against_grid(rng):
    q = random_quadratic(np.random.default_rng(3), 4, 2)
    pts = 64
    ph = np.exp(2j * np.pi * np.arange(pts) / pts)
    gram, lin, r = q.gram(), q.linear(), np.vdot(q.a_r, q.a_r).real
    best, arg = np.inf, None
    rest = np.stack(np.meshgrid(ph, ph, ph, indexing="ij"), -1).reshape(-1, 3)
    for p0 in ph:
        th = np.concatenate([np.full((rest.shape[0], 1), p0), rest], axis=1)
        h = (np.einsum("bi,ij,bj->b", th.conj(), gram, th)
             - 2 * (th.conj() @ lin)).real + r
        j = int(np.argmin(h))
        if h[j] < best:
            best, arg = h[j], th[j]
    res = minimize(lambda a: eval_reflector_objective(q, np.exp(1j * a)), np.angle(arg),
                   method="BFGS", options={"gtol": 1e-12})
    reference = min(best, res.fun)
    _, state = scf_solve(q, np.ones(4), eps=1e-13, max_iter=100000)
    assert state.objective_trace[-1] <= reference + 1e-3


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 16), ns=st.integers(1, 4))
def test_monotone_under_lambda_bound(seed, n, ns):
    rng = np.random.default_rng(seed)
    q = random_quadratic(rng, n, ns)
    _, state = scf_solve(q, random_unit(rng, n), eps=1e-10, max_iter=300)
    assert np.all(np.diff(state.objective_trace) <= 1e-9)
    assert state.x[-1] == pytest.approx(1.0, abs=1e-12)


def test_converged_iterate_is_kkt(rng):
    for n in (2, 6, 12):
        q = random_quadratic(rng, n, 2)
        th, state = scf_solve(q, np.ones(n), eps=1e-13, max_iter=200000)
        lift = lift_to_real(q, state.lambda_shift)
        rbar = 2 * lift.shifted()
        assert np.all(np.abs(np.abs(th) - 1) < 1e-15)
        assert state.modulus_error <= 1e-4
        scaled = reflector_kkt_residual(lift, real_vector(th)) / np.linalg.norm(rbar, 2)
        assert scaled <= 1e-6
        # the pre-projection iterate has modulus at least one
        assert np.all(np.abs(complex_from_real(state.x)) >= 1 - 1e-12)


def test_kkt_residual_positive_off_optimum(rng):
    q = random_quadratic(rng, 5, 2)
    lift = lift_to_real(q, lambda_bound(q))
    assert reflector_kkt_residual(lift, real_vector(random_unit(rng, 5))) > 1e-3


def test_invalid_eps(rng):
    with pytest.raises(ValueError):
        scf_solve(random_quadratic(rng, 2), np.ones(2), eps=0.0)
