import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn, random_channels, random_pd, random_unit
from ris_mimo.channel import ChannelSet
from ris_mimo.wmmse import (SingularMatrixError, SystemConfig, TransceiverState, achievable_rate,
                            bisection_mu, effective_channel, mmse_combiner, mse_matrix,
                            precoder_update, rate_from_mse, weight_update, wmse_objective)


def test_system_config_snr_mapping():
    cfg = SystemConfig.from_snr_db(2, 10.0)
    assert cfg.power_budget == 1.0
    assert cfg.noise_power == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SystemConfig(0)
    with pytest.raises(ValueError):
        SystemConfig(1, noise_power=0.0)


def test_check_dims(rng):
    ch = random_channels(rng, 4, 3, 2)
    SystemConfig(2).check_dims(ch)
    with pytest.raises(ValueError):
        SystemConfig(3).check_dims(ch)


def test_effective_channel_cases(rng):
    ch = random_channels(rng, 5, 3, 2)
    no_ris = ch.without_ris()
    np.testing.assert_array_equal(effective_channel(no_ris, random_unit(rng, 5)), ch.h_direct)
    np.testing.assert_allclose(effective_channel(ch, np.ones(5)),
                               ch.g_ue_ris.conj().T @ ch.h_bs_ris + ch.h_direct)
    s = ChannelSet(np.array([[2 + 1j]]), np.array([[1 - 1j]]), np.array([[0.5j]]))
    th = np.exp(0.3j)
    assert effective_channel(s, np.array([th]))[0, 0] == pytest.approx(
        np.conj(1 - 1j) * th * (2 + 1j) + 0.5j)
    with pytest.raises(ValueError):
        effective_channel(ch, np.ones(4))


def test_mse_matrix_limits(rng):
    h = crandn(rng, 3, 4)
    e = mse_matrix(h, np.zeros((4, 2)), np.zeros((3, 2)), 1.0)
    np.testing.assert_allclose(e, np.eye(2))
    # W_d^H H W_s = I with vanishing noise
    w_s = crandn(rng, 4, 2)
    w_d = np.linalg.pinv(h @ w_s).conj().T
    assert np.linalg.norm(mse_matrix(h, w_s, w_d, 1e-14)) < 1e-10


def test_mse_closed_form_with_mmse_combiner(rng):
    for _ in range(20):
        h, w_s, s2 = crandn(rng, 4, 3), crandn(rng, 3, 2), rng.uniform(0.1, 2)
        w_d = mmse_combiner(h, w_s, s2)
        e = mse_matrix(h, w_s, w_d, s2)
        hw = h @ w_s
        closed = np.eye(2) - hw.conj().T @ np.linalg.solve(s2 * np.eye(4) + hw @ hw.conj().T, hw)
        np.testing.assert_allclose(e, closed, atol=1e-10)
        assert np.linalg.eigvalsh(e)[0] >= -1e-10


def test_rate_scalar_reduction():
    h, w_s, s2 = 0.7 - 0.2j, 0.9 + 0.1j, 0.3
    expected = np.log2(1 + abs(h * w_s) ** 2 / s2)
    for w_d in (1.0, -2j, 0.01 + 3j):
        r = achievable_rate(np.array([[h]]), np.array([[w_s]]), np.array([[w_d]]), s2)
        assert r == pytest.approx(expected, abs=1e-12)


def test_rate_zero_precoder_and_singular_combiner(rng):
    h = crandn(rng, 3, 3)
    assert achievable_rate(h, np.zeros((3, 2)), crandn(rng, 3, 2), 1.0) == pytest.approx(0.0)
    w_d = crandn(rng, 3, 1) @ np.ones((1, 2))  # rank one, two columns
    with pytest.raises(SingularMatrixError, match="singular combiner Gram"):
        achievable_rate(h, crandn(rng, 3, 2), w_d, 1.0)


def test_rate_mse_identity(rng):
    for _ in range(200):
        nt, nr = rng.integers(1, 6, size=2)
        ns = int(rng.integers(1, min(nt, nr) + 1))
        h, w_s, s2 = crandn(rng, nr, nt), crandn(rng, nt, ns), 10 ** rng.uniform(-2, 1)
        w_d = mmse_combiner(h, w_s, s2)
        r = achievable_rate(h, w_s, w_d, s2)
        assert abs(r - rate_from_mse(mse_matrix(h, w_s, w_d, s2))) <= 1e-9


def test_mmse_scalar_and_norm_bound(rng):
    h, w_s, s2 = 1.3 - 0.4j, 0.5 + 0.5j, 0.7
    w_d = mmse_combiner(np.array([[h]]), np.array([[w_s]]), s2)[0, 0]
    assert w_d == pytest.approx(h * w_s / (s2 + abs(h * w_s) ** 2))
    for _ in range(20):
        hh, ww = crandn(rng, 4, 3), crandn(rng, 3, 2)
        s = rng.uniform(0.05, 3)
        assert np.linalg.norm(mmse_combiner(hh, ww, s)) <= np.linalg.norm(hh @ ww) / s + 1e-12


def test_mmse_combiner_is_stationary(rng):
    h, w_s, s2 = crandn(rng, 3, 3), crandn(rng, 3, 2), 0.5
    w = random_pd(rng, 2)
    w_d = mmse_combiner(h, w_s, s2)

    def f(wd):
        return np.trace(w @ mse_matrix(h, w_s, wd, s2)).real

    step = 1e-6
    grad = np.zeros(w_d.shape, complex)
    for idx in np.ndindex(*w_d.shape):
        for unit in (1.0, 1j):
            d = np.zeros(w_d.shape, complex)
            d[idx] = unit * step
            g = (f(w_d + d) - f(w_d - d)) / (2 * step)
            grad[idx] += g if unit == 1.0 else 1j * g
    assert np.linalg.norm(grad) < 1e-5


def test_weight_update_cases(rng):
    np.testing.assert_allclose(weight_update(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(weight_update(np.diag([0.5, 2.0])), np.diag([2.0, 0.5]))
    for _ in range(10):
        e = random_pd(rng, 3)
        np.testing.assert_allclose(weight_update(e) @ e, np.eye(3), atol=1e-10)
    with pytest.raises(SingularMatrixError, match="MSE matrix singular"):
        weight_update(np.diag([1.0, 1e-14]))


def test_bisection_examples():
    assert bisection_mu([1.0], [4.0], 1.0) == pytest.approx(1.0, rel=1e-8)
    assert bisection_mu([0.0], [1.0], 4.0) == pytest.approx(0.5, rel=1e-8)
    with pytest.raises(ValueError, match="zero objective coupling"):
        bisection_mu([1.0, 2.0], [0.0, 0.0], 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_bisection_residual(seed):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0, 1, 4) * (rng.random(4) > 0.2)
    phi = rng.uniform(0.1, 5, 4)
    power = rng.uniform(0.1, 2.0)
    mu = bisection_mu(lam, phi, power)
    total = np.sum(phi / (lam + mu) ** 2)
    if mu > 0:
        assert abs(total - power) <= 1e-8 * power
    else:
        assert total <= power


def test_precoder_unconstrained_branch(rng):
    h, w_d, w = crandn(rng, 3, 3), crandn(rng, 3, 3), random_pd(rng, 3)
    w_s, mu = precoder_update(h, w_d, w, 1e6, return_mu=True)
    assert mu == 0.0
    a = h.conj().T @ w_d @ w @ w_d.conj().T @ h
    np.testing.assert_allclose(w_s, np.linalg.solve(a, h.conj().T @ w_d @ w), atol=1e-9)


def test_precoder_active_power(rng):
    for _ in range(50):
        nt, ns = 4, 2
        h, w_d, w = crandn(rng, 3, nt), crandn(rng, 3, ns), random_pd(rng, ns)
        p = rng.uniform(0.01, 2.0)
        w_s, mu = precoder_update(h, w_d, w, p, return_mu=True)
        power = np.vdot(w_s, w_s).real
        assert power <= p + 1e-8
        if mu > 0:
            assert abs(power - p) <= 1e-8 * max(p, 1.0)


def test_precoder_scalar_oracle():
    h, w_d, w, p = 0.8 + 0.3j, 0.4 - 0.2j, 2.5, 0.05
    w_s, mu = precoder_update(np.array([[h]]), np.array([[w_d]]), np.array([[w]]), p,
                              return_mu=True)
    # |w_s|^2 = p fixes mu in closed form
    mu_ref = abs(h * w_d) * w / np.sqrt(p) - abs(h * w_d) ** 2 * w
    assert mu == pytest.approx(mu_ref, rel=1e-9)
    assert w_s[0, 0] == pytest.approx(np.conj(h) * w_d * w /
                                      (abs(h * w_d) ** 2 * w + mu_ref), rel=1e-9)


def test_transceiver_sweep_descends(rng):
    for _ in range(30):
        n, nt, nr, ns = 4, 3, 3, 2
        ch = random_channels(rng, n, nt, nr)
        s2 = 10 ** rng.uniform(-1, 1)
        h = effective_channel(ch, random_unit(rng, n))
        w_s = crandn(rng, nt, ns)
        w_s /= np.linalg.norm(w_s)
        w = random_pd(rng, ns)
        w_d = crandn(rng, nr, ns)
        f = [wmse_objective(mse_matrix(h, w_s, w_d, s2), w)]
        w_d = mmse_combiner(h, w_s, s2)
        f.append(wmse_objective(mse_matrix(h, w_s, w_d, s2), w))
        w = weight_update(mse_matrix(h, w_s, w_d, s2))
        f.append(wmse_objective(mse_matrix(h, w_s, w_d, s2), w))
        w_s = precoder_update(h, w_d, w, 1.0)
        f.append(wmse_objective(mse_matrix(h, w_s, w_d, s2), w))
        assert np.all(np.diff(f) <= 1e-9)


def test_state_is_mutable_record(rng):
    st_ = TransceiverState(np.zeros((2, 1)), np.zeros((2, 1)), np.eye(1), np.ones(3))
    st_.mu = 0.5
    assert st_.mu == 0.5
