import numpy as np
import pytest

from l96param.chaos import (
    LyapunovConfig,
    classify_exponents,
    error_doubling_time,
    kaplan_yorke,
    ks_entropy,
    lyapunov_spectrum,
    lyapunov_spectrum_general,
    slow_jacobian,
    _mgs_columns,
)
from l96param.config import ModelParams
from l96param.dynamics import slow_tendency
from l96param.errors import ConfigError


def finite_difference_jacobian(f, x, eps=1e-6):
    n = x.size
    J = np.empty((n, n))
    for m in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[m] += eps
        xm[m] -= eps
        J[:, m] = (f(xp) - f(xm)) / (2 * eps)
    return J


class TestSlowJacobian:
    def test_zero_state_is_minus_identity(self):
        p = ModelParams(K=6, J=1)
        assert np.allclose(slow_jacobian(np.zeros(6), p), -np.eye(6))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        p = ModelParams(K=5, J=1, F=10.0)
        X = rng.normal(size=5)
        J = slow_jacobian(X, p)
        J_fd = finite_difference_jacobian(lambda x: slow_tendency(x, p.F), X)
        assert np.allclose(J, J_fd, rtol=1e-6, atol=1e-6)

    def test_stencil_has_four_nonzeros_per_row(self):
        rng = np.random.default_rng(8)
        p = ModelParams(K=7, J=1)
        X = rng.normal(size=7) + 2.0  # keep entries away from zero
        J = slow_jacobian(X, p)
        assert np.all((J != 0).sum(axis=1) == 4)


class TestSpectrum:
    def test_linear_diagonal_system(self):
        rates = np.array([0.5, -0.2, -1.0])
        cfg = LyapunovConfig(spinup=0.1, renorm_interval=0.1, total_time=5.0, dt=0.01)
        res = lyapunov_spectrum_general(
            lambda x: rates * x, lambda x: np.diag(rates), np.ones(3), cfg
        )
        assert np.allclose(res.exponents, np.sort(rates)[::-1], atol=1e-6)

    def test_mgs_orthonormalizes(self):
        rng = np.random.default_rng(3)
        V = rng.normal(size=(12, 12))
        Q, diag = _mgs_columns(V)
        assert np.allclose(Q.T @ Q, np.eye(12), atol=1e-12)
        assert np.all(diag > 0)

    def test_spectrum_sum_matches_flow_divergence(self):
        # the slow system has constant divergence -K
        p = ModelParams(K=8, J=1, F=10.0)
        cfg = LyapunovConfig(spinup=20.0, renorm_interval=0.2, total_time=220.0, dt=0.01)
        res = lyapunov_spectrum(p, cfg, np.random.default_rng(0))
        assert abs(res.exponents.sum() + p.K) < 0.02 * p.K

    def test_history_shape_and_monotone_times(self):
        p = ModelParams(K=5, J=1, F=8.0)
        cfg = LyapunovConfig(spinup=5.0, renorm_interval=0.5, total_time=15.0, dt=0.01)
        res = lyapunov_spectrum(p, cfg, np.random.default_rng(1))
        assert res.history.shape == (20, 5)
        assert np.all(np.diff(res.history_times) > 0)
        assert res.d == 5

    def test_renorm_interval_must_divide(self):
        with pytest.raises(ConfigError):
            LyapunovConfig(spinup=1.0, renorm_interval=0.25, total_time=2.0, dt=0.1)


class TestKaplanYorke:
    def test_two_exponents(self):
        assert kaplan_yorke(np.array([1.0, -2.0])) == pytest.approx(1.5)

    def test_all_negative(self):
        assert kaplan_yorke(np.array([-0.5, -1.0])) == 0.0

    def test_saturation_warns(self):
        with pytest.warns(UserWarning):
            assert kaplan_yorke(np.array([2.0, 1.0])) == 2.0

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            kaplan_yorke(np.array([]))

    def test_unsorted_rejected(self):
        with pytest.raises(ConfigError):
            kaplan_yorke(np.array([-1.0, 2.0]))


class TestEntropyAndDoubling:
    def test_ks_entropy(self):
        assert ks_entropy(np.array([2.0, 0.5, -1.0])) == pytest.approx(2.5)
        assert ks_entropy(np.array([-2.0, -0.5])) == 0.0

    def test_doubling_examples(self):
        assert error_doubling_time(np.log(2.0)) == pytest.approx(1.0)
        assert error_doubling_time(2.3098) == pytest.approx(0.3001, abs=1e-4)
        assert error_doubling_time(2.0 * np.log(2.0)) == pytest.approx(0.5)

    def test_doubling_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            error_doubling_time(0.0)

    def test_classification(self):
        counts = classify_exponents(np.array([2.0, 0.005, -0.003, -1.0]))
        assert counts == {"n_positive": 2, "n_neutral": 2, "n_negative": 2}
