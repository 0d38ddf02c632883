import math

import numpy as np
import pytest

from l96param.config import ModelParams
from l96param.dynamics import (
    FullState,
    ReducedState,
    Trajectory,
    coupling_forcing,
    default_initial_state,
    full_rhs,
    full_rhs_flat,
    integrate,
    reduced_rhs,
    rk4_step,
    simulate,
    simulate_reduced,
    slow_tendency,
)
from l96param.errors import BlowupError, ConfigError, NumericsError


def brute_force_slow_rhs(X, Z, p):
    """Loop-free-of-cleverness expansion of the slow equation, term by term."""
    K, J = p.K, p.J
    dX = np.empty(K)
    for k in range(K):
        xm1 = X[(k - 1) % K]
        xm2 = X[(k - 2) % K]
        xp1 = X[(k + 1) % K]
        forcing = 0.0
        for j in range(J):
            forcing += Z[k * J + j]
        dX[k] = -xm1 * (xm2 - xp1) - X[k] + p.F - (p.h * p.c / p.b) * forcing
    return dX


def brute_force_fast_rhs(X, Z, p):
    """Direct expansion of the fast equation using the (j, k) index rules."""
    K, J = p.K, p.J

    def z(j, k):
        # wrap j through sectors first, then wrap the sector index
        while j >= J:
            j -= J
            k += 1
        while j < 0:
            j += J
            k -= 1
        return Z[(k % K) * J + j]

    dZ = np.empty(K * J)
    for k in range(K):
        for j in range(J):
            adv = -p.c * p.b * z(j + 1, k) * (z(j + 2, k) - z(j - 1, k))
            dZ[k * J + j] = adv - p.c * z(j, k) + (p.h * p.c / p.b) * X[k]
    return dZ


class TestFullRhs:
    def test_zero_state_gives_pure_forcing(self):
        p = ModelParams(K=6, J=3)
        s = FullState(X=np.zeros(6), Z=np.zeros(18))
        d = full_rhs(s, p)
        assert np.allclose(d.X, p.F)
        assert np.allclose(d.Z, 0.0)

    def test_symmetric_state(self):
        p = ModelParams(K=4, J=2, F=10.0)
        s = FullState(X=np.ones(4), Z=np.zeros(8))
        d = full_rhs(s, p)
        # advection cancels on a uniform ring: -1*(1-1) - 1 + 10
        assert np.allclose(d.X, 9.0)

    def test_against_brute_force_expansion(self):
        rng = np.random.default_rng(7)
        p = ModelParams(K=5, J=4, F=8.0, h=1.0, c=10.0, b=10.0)
        X = rng.normal(size=5)
        Z = rng.normal(scale=0.3, size=20)
        d = full_rhs(FullState(X=X, Z=Z), p)
        assert np.allclose(d.X, brute_force_slow_rhs(X, Z, p), atol=1e-12)
        assert np.allclose(d.Z, brute_force_fast_rhs(X, Z, p), atol=1e-12)

    def test_slow_only_against_brute_force(self):
        rng = np.random.default_rng(3)
        p = ModelParams(K=5, J=1, F=10.0)
        X = rng.normal(size=5)
        d = full_rhs(FullState(X=X, Z=np.zeros(5)), p)
        assert np.allclose(d.X, brute_force_slow_rhs(X, np.zeros(5), p), atol=1e-13)

    def test_dimension_mismatch_rejected(self):
        p = ModelParams(K=6, J=3)
        with pytest.raises(ConfigError):
            full_rhs(FullState(X=np.zeros(5), Z=np.zeros(18)), p)

    def test_advection_energy_cancellation(self):
        # sum_k X_k * advection_k vanishes identically on the cyclic ring
        rng = np.random.default_rng(11)
        for K in (4, 7, 40):
            p = ModelParams(K=K, J=1, F=0.0)
            X = rng.normal(scale=3.0, size=K)
            adv = slow_tendency(X, 0.0) + X  # strip the -X and F terms
            assert abs(np.dot(X, adv)) < 1e-10

    def test_cyclic_equivariance(self):
        rng = np.random.default_rng(5)
        p = ModelParams(K=8, J=3)
        X = rng.normal(size=8)
        Z = rng.normal(scale=0.2, size=24)
        rotated = FullState(X=np.roll(X, 1), Z=np.roll(Z, p.J))
        d = full_rhs(FullState(X=X, Z=Z), p)
        d_rot = full_rhs(rotated, p)
        assert np.allclose(d_rot.X, np.roll(d.X, 1), atol=1e-12)
        assert np.allclose(d_rot.Z, np.roll(d.Z, p.J), atol=1e-12)


class TestCouplingForcing:
    def test_zero(self):
        p = ModelParams(K=4, J=10)
        assert np.allclose(coupling_forcing(np.zeros(40), p), 0.0)

    def test_all_ones(self):
        p = ModelParams(K=4, J=10, h=1.0, c=10.0, b=10.0)
        assert np.allclose(coupling_forcing(np.ones(40), p), -10.0)

    def test_symmetric_cancellation(self):
        p = ModelParams(K=4, J=2, h=1.0, c=10.0, b=10.0)
        Z = np.array([0.5, -0.5] * 4)
        assert np.allclose(coupling_forcing(Z, p), 0.0)

    def test_dimension_check(self):
        p = ModelParams(K=4, J=10)
        with pytest.raises(ConfigError):
            coupling_forcing(np.zeros(39), p)


class TestReducedRhs:
    def test_zero_parameterization_reduces_to_slow_tendency(self):
        rng = np.random.default_rng(2)
        p = ModelParams(K=6, J=1)
        X = rng.normal(size=6)
        out = reduced_rhs(ReducedState(X=X), p, lambda x: np.zeros_like(x))
        assert np.allclose(out, slow_tendency(X, p.F))

    def test_zero_state(self):
        p = ModelParams(K=6, J=1, F=10.0)
        out = reduced_rhs(ReducedState(X=np.zeros(6)), p, lambda x: np.zeros_like(x))
        assert np.allclose(out, 10.0)

    def test_wilks_polynomial_value_at_one(self):
        # hand sum of the published quartic at X_k = 1
        coeffs = [-0.03779, -0.47362, 0.005197, 0.004882, -0.0003142]
        expected = math.fsum(coeffs)  # -0.5016452
        p = ModelParams(K=4, J=1, F=0.0)
        poly = lambda x: sum(c * x**i for i, c in enumerate(coeffs))
        out = reduced_rhs(ReducedState(X=np.ones(4)), p, poly)
        # G(1,...,1) with F=0 is -1; the parameterization adds the quartic value
        assert np.allclose(out, -1.0 + expected, atol=1e-5)
        assert abs(expected - (-0.5016452)) < 1e-7

    def test_true_coupling_reproduces_full_slow_rhs(self):
        rng = np.random.default_rng(9)
        p = ModelParams(K=6, J=4)
        X = rng.normal(size=6)
        Z = rng.normal(scale=0.2, size=24)
        full = full_rhs(FullState(X=X, Z=Z), p)
        red = reduced_rhs(ReducedState(X=X), p, lambda x: coupling_forcing(Z, p))
        assert np.allclose(red, full.X, atol=1e-14)

    def test_residual_enters_additively(self):
        p = ModelParams(K=4, J=1)
        e = np.array([1.0, -2.0, 0.5, 0.0])
        base = reduced_rhs(ReducedState(X=np.zeros(4)), p, lambda x: np.zeros_like(x))
        bumped = reduced_rhs(ReducedState(X=np.zeros(4), e=e), p, lambda x: np.zeros_like(x))
        assert np.allclose(bumped - base, e)

    def test_nonfinite_parameterization_aborts(self):
        p = ModelParams(K=4, J=1)
        with pytest.raises(NumericsError):
            reduced_rhs(ReducedState(X=np.zeros(4)), p, lambda x: np.full_like(x, np.nan))


class TestRK4:
    def test_zero_rhs_keeps_state(self):
        x = np.array([1.0, -2.0, 3.0])
        assert np.allclose(rk4_step(lambda y: np.zeros_like(y), x, 0.1), x)

    def test_linear_ode_closed_form(self):
        # RK4 on x' = x multiplies the state by the quartic Taylor polynomial of e^dt
        dt = 0.01
        factor = math.fsum([1.0, dt, dt**2 / 2.0, dt**3 / 6.0, dt**4 / 24.0])
        out = rk4_step(lambda y: y, np.array([1.0]), dt)
        assert abs(out[0] - factor) < 1e-15

    def test_fourth_order_convergence(self):
        # global error at t = 1 for x' = x shrinks ~16x when dt halves
        def global_error(dt):
            x = np.array([1.0])
            for _ in range(int(round(1.0 / dt))):
                x = rk4_step(lambda y: y, x, dt)
            return abs(x[0] - math.e)

        ratio = global_error(0.02) / global_error(0.01)
        assert 15.0 < ratio < 17.0

    def test_order_estimate(self):
        def global_error(dt):
            x = np.array([1.0])
            for _ in range(int(round(1.0 / dt))):
                x = rk4_step(lambda y: y, x, dt)
            return abs(x[0] - math.e)

        order = math.log2(global_error(0.02) / global_error(0.01))
        assert abs(order - 4.0) < 0.1

    def test_nonfinite_stage_rejected(self):
        def bad(y):
            return np.full_like(y, np.inf)

        with pytest.raises(NumericsError):
            rk4_step(bad, np.array([1.0]), 0.1)


class TestSimulate:
    def test_zero_steps_returns_initial(self):
        p = ModelParams(K=4, J=2)
        s = FullState(X=np.ones(4), Z=np.zeros(8))
        traj = simulate(s, p, 0.0, 0.0)
        assert len(traj) == 1
        assert np.allclose(traj.states[0], s.pack())

    def test_determinism(self):
        p = ModelParams(K=6, J=4)
        rng = np.random.default_rng(1)
        s = default_initial_state(p, rng)
        a = simulate(s, p, 0.0, 1.0)
        b = simulate(s, p, 0.0, 1.0)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.times, b.times)

    def test_record_every(self):
        p = ModelParams(K=4, J=2)
        s = FullState(X=np.ones(4) * 0.5, Z=np.zeros(8))
        traj = simulate(s, p, 0.0, 0.1, record_every=5)
        assert len(traj) == 3  # t = 0, 0.05, 0.1
        assert np.allclose(np.diff(traj.times), 0.05)

    def test_observe_hook(self):
        p = ModelParams(K=4, J=2)
        s = FullState(X=np.ones(4) * 0.5, Z=np.zeros(8))
        traj = simulate(s, p, 0.0, 0.05, observe=lambda y: y[: p.K])
        assert traj.states.shape[1] == 4

    def test_blowup_guard(self):
        with pytest.raises(BlowupError) as err:
            integrate(lambda y: y, np.array([1.0]), 0.0, 100.0, dt=0.1, guard=1e3)
        assert err.value.last_valid_time is not None

    def test_reduced_stochastic_needs_rng(self):
        from l96param.ar import ARModel

        p = ModelParams(K=4, J=1)
        model = ARModel(phi=0.5, sigma=0.1)
        with pytest.raises(ConfigError):
            simulate_reduced(ReducedState(X=np.zeros(4)), p, lambda x: np.zeros_like(x),
                             0.0, 0.1, ar_model=model)

    def test_reduced_matches_full_under_true_coupling_one_step(self):
        # single RK4 step where the parameterization is frozen at the true forcing
        rng = np.random.default_rng(4)
        p = ModelParams(K=5, J=3)
        s = default_initial_state(p, rng)
        U = coupling_forcing(s.Z, p)
        red = simulate_reduced(ReducedState(X=s.X), p, lambda x: U, 0.0, p.dt)
        assert red.states.shape == (2, 5)


class TestTrajectoryCsv:
    def test_roundtrip_full_precision(self, tmp_path):
        p = ModelParams(K=4, J=2)
        rng = np.random.default_rng(12)
        s = default_initial_state(p, rng)
        traj = simulate(s, p, 0.0, 0.05)
        path = tmp_path / "traj.csv"
        traj.to_csv(path, n_slow=p.K)
        header = path.read_text().splitlines()[0]
        assert header == "t,X1,X2,X3,X4,Z1,Z2,Z3,Z4,Z5,Z6,Z7,Z8"
        back = Trajectory.from_csv(path)
        assert np.array_equal(back.states, traj.states)
        assert np.array_equal(back.times, traj.times)


class TestBatchedEvaluation:
    def test_full_rhs_flat_batched(self):
        rng = np.random.default_rng(21)
        p = ModelParams(K=5, J=2)
        batch = rng.normal(size=(7, p.n_full))
        out = full_rhs_flat(batch, p)
        for i in range(7):
            assert np.allclose(out[i], full_rhs_flat(batch[i], p))
