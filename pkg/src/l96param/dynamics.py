"""Two-scale Lorenz-96 vector fields, reduced parameterized models, and a
fixed-step RK4 integrator with trajectory recording.

State layout: the slow vector X has length K; the fast vector Z has length
J*K, flattened so that z[k*J + j] is subsector j of sector k (zero-based).
With the cyclic rules X_{k+K} = X_k, Z_{j,k+K} = Z_{j,k}, Z_{j+J,k} =
Z_{j,k+1}, the flattened fast vector forms a single ring of length J*K, so
all neighbor couplings reduce to rolls of the flat array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ModelParams
from .errors import BlowupError, ConfigError, NumericsError

#: guard threshold: the attractor never approaches this; trips only on
#: genuinely diverging runs (bad parameterizations).
BLOWUP_GUARD = 1e8


@dataclass
class FullState:
    """Slow vector X (length K) and fast vector Z (length J*K)."""

    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Z))):
            raise ConfigError("state contains non-finite entries")

    def validate(self, p: ModelParams) -> None:
        if self.X.shape != (p.K,):
            raise ConfigError(f"X has shape {self.X.shape}, expected ({p.K},)")
        if self.Z.shape != (p.n_fast,):
            raise ConfigError(f"Z has shape {self.Z.shape}, expected ({p.n_fast},)")

    def pack(self) -> np.ndarray:
        return np.concatenate([self.X, self.Z])

    @classmethod
    def unpack(cls, y: np.ndarray, p: ModelParams) -> "FullState":
        return cls(X=y[: p.K], Z=y[p.K :])


@dataclass
class ReducedState:
    """Slow vector X plus the per-component AR residual e (zero when the
    reduced model runs deterministically)."""

    X: np.ndarray
    e: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.e is None:
            self.e = np.zeros_like(self.X)
        else:
            self.e = np.asarray(self.e, dtype=float)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.e))):
            raise ConfigError("state contains non-finite entries")


def slow_tendency(X: np.ndarray, F: float) -> np.ndarray:
    """Tendency of the slow ring without fast-scale forcing:
    G_k(X) = -X_{k-1} (X_{k-2} - X_{k+1}) - X_k + F.

    Works on batched input with components along the last axis.
    """
    xm1 = np.roll(X, 1, axis=-1)
    xm2 = np.roll(X, 2, axis=-1)
    xp1 = np.roll(X, -1, axis=-1)
    return -xm1 * (xm2 - xp1) - X + F


def fast_tendency(Z: np.ndarray, X: np.ndarray, p: ModelParams) -> np.ndarray:
    """Tendency of the fast ring, driven by the slow variables."""
    zp1 = np.roll(Z, -1, axis=-1)
    zp2 = np.roll(Z, -2, axis=-1)
    zm1 = np.roll(Z, 1, axis=-1)
    drive = (p.h * p.c / p.b) * np.repeat(X, p.J, axis=-1)
    return -p.c * p.b * zp1 * (zp2 - zm1) - p.c * Z + drive


def coupling_forcing(Z: np.ndarray, p: ModelParams) -> np.ndarray:
    """Fast-scale forcing on each slow component:
    U_k = -(h c / b) * sum_j Z_{j,k}.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != p.n_fast:
        raise ConfigError(f"Z has last dim {Z.shape[-1]}, expected {p.n_fast}")
    sums = Z.reshape(Z.shape[:-1] + (p.K, p.J)).sum(axis=-1)
    return -(p.h * p.c / p.b) * sums


def full_rhs(state: FullState, p: ModelParams) -> FullState:
    """Time derivative of the coupled system."""
    state.validate(p)
    dX = slow_tendency(state.X, p.F) + coupling_forcing(state.Z, p)
    dZ = fast_tendency(state.Z, state.X, p)
    return FullState(X=dX, Z=dZ)


def full_rhs_flat(y: np.ndarray, p: ModelParams) -> np.ndarray:
    """full_rhs on packed [X, Z] vectors; supports batched leading axes."""
    X = y[..., : p.K]
    Z = y[..., p.K :]
    dX = slow_tendency(X, p.F) + coupling_forcing(Z, p)
    dZ = fast_tendency(Z, X, p)
    return np.concatenate([dX, dZ], axis=-1)


#: a parameterization maps slow states (..., K) to per-component forcing values
Parameterization = Callable[[np.ndarray], np.ndarray]


def reduced_rhs(s: ReducedState, p: ModelParams, param_model: Parameterization) -> np.ndarray:
    """Tendency of the reduced model: dX_k = G_k(X) + f_k(X) + e_k."""
    return reduced_tendency(s.X, p, param_model, s.e)


def reduced_tendency(X, p: ModelParams, param_model: Parameterization, residual=None):
    """Array version of reduced_rhs; X may carry batch axes."""
    f = np.asarray(param_model(X), dtype=float)
    if f.shape != np.shape(X):
        raise ConfigError(f"parameterization returned shape {f.shape} for input {np.shape(X)}")
    if not np.all(np.isfinite(f)):
        raise NumericsError("parameterization produced non-finite output")
    out = slow_tendency(X, p.F) + f
    if residual is not None:
        out = out + residual
    return out


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], state: np.ndarray, dt: float) -> np.ndarray:
    """Classical 4-stage Runge-Kutta update."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericsError("non-finite RK4 stage or update")
    return out


@dataclass
class Trajectory:
    """Recorded states at uniform time spacing (one row per record)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ConfigError("times and states disagree on record count")

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self, path: str | Path, n_slow: int | None = None) -> None:
        """Write `t,X1..XK[,Z1..ZJK]` rows at full double precision."""
        width = self.states.shape[1]
        if n_slow is None:
            n_slow = width
        labels = [f"X{i}" for i in range(1, n_slow + 1)]
        labels += [f"Z{i}" for i in range(1, width - n_slow + 1)]
        header = ",".join(["t"] + labels)
        data = np.column_stack([self.times, self.states])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(times=data[:, 0], states=data[:, 1:])


def integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
    record_every: int = 1,
    guard: float = BLOWUP_GUARD,
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Trajectory:
    """Step y' = rhs(y) from t0 to t1 and record every `record_every` steps.

    `observe`, when given, maps the raw state to the recorded row (used to
    record derived quantities without storing the full state). Deterministic
    for fixed inputs; aborts with the last valid time on blow-up.
    """
    if not t1 > t0 and not np.isclose(t1, t0):
        raise ConfigError(f"need t1 >= t0, got ({t0}, {t1})")
    n_steps = int(round((t1 - t0) / dt))
    y = np.array(y0, dtype=float)
    row = observe(y) if observe is not None else y
    records = [np.array(row, dtype=float)]
    rec_times = [t0]
    t = t0
    for step in range(1, n_steps + 1):
        try:
            y = rk4_step(rhs, y, dt)
        except NumericsError:
            raise BlowupError(f"trajectory blew up between t={t:.6g} and t={t + dt:.6g}",
                              last_valid_time=t)
        t = t0 + step * dt
        if np.max(np.abs(y)) > guard:
            raise BlowupError(f"trajectory exceeded guard {guard:g} at t={t:.6g}",
                              last_valid_time=t - dt)
        if step % record_every == 0:
            records.append(np.array(observe(y) if observe is not None else y))
            rec_times.append(t)
    return Trajectory(times=np.array(rec_times), states=np.array(records))


def simulate(
    initial: FullState,
    p: ModelParams,
    t0: float,
    t1: float,
    record_every: int = 1,
    guard: float = BLOWUP_GUARD,
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Trajectory:
    """Integrate the coupled two-scale system, recording packed [X, Z] rows
    (or `observe` of them)."""
    initial.validate(p)
    return integrate(lambda y: full_rhs_flat(y, p), initial.pack(), t0, t1, p.dt,
                     record_every=record_every, guard=guard, observe=observe)


def simulate_reduced(
    initial: ReducedState,
    p: ModelParams,
    param_model: Parameterization,
    t0: float,
    t1: float,
    record_every: int = 1,
    ar_model=None,
    rng: np.random.Generator | None = None,
    guard: float = BLOWUP_GUARD,
) -> Trajectory:
    """Integrate the reduced model dX = G(X) + f(X) + e.

    With `ar_model` set, e follows the first-order autoregression
    e <- phi e + sigma z once per step (held constant within the step),
    starting from `initial.e`; otherwise e stays at `initial.e`.
    """
    if initial.X.shape != (p.K,):
        raise ConfigError(f"X has shape {initial.X.shape}, expected ({p.K},)")
    if ar_model is not None and rng is None:
        raise ConfigError("stochastic reduced run needs an rng")
    n_steps = int(round((t1 - t0) / p.dt))
    X = initial.X.copy()
    e = initial.e.copy()
    records = [X.copy()]
    rec_times = [t0]
    rhs = lambda x: reduced_tendency(x, p, param_model, e)
    t = t0
    for step in range(1, n_steps + 1):
        try:
            X = rk4_step(rhs, X, p.dt)
        except NumericsError:
            raise BlowupError(f"reduced trajectory blew up between t={t:.6g} and "
                              f"t={t + p.dt:.6g}", last_valid_time=t)
        t = t0 + step * p.dt
        if np.max(np.abs(X)) > guard:
            raise BlowupError(f"reduced trajectory exceeded guard {guard:g} at t={t:.6g}",
                              last_valid_time=t - p.dt)
        if ar_model is not None:
            e = ar_model.phi * e + ar_model.sigma * rng.standard_normal(p.K)
        if step % record_every == 0:
            records.append(X.copy())
            rec_times.append(t)
    return Trajectory(times=np.array(rec_times), states=np.array(records))


def default_initial_state(p: ModelParams, rng: np.random.Generator) -> FullState:
    """Random initial condition: X ~ U(-1, 1), Z ~ U(-0.1, 0.1)."""
    X = rng.uniform(-1.0, 1.0, size=p.K)
    Z = rng.uniform(-0.1, 0.1, size=p.n_fast)
    if np.ptp(X) == 0.0:  # degenerate all-equal draw would stay symmetric forever
        X[0] += p.F / 10.0
    return FullState(X=X, Z=Z)
