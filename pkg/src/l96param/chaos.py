"""Lyapunov spectrum of the slow system via tangent-space integration with
periodic Gram-Schmidt re-orthonormalization, plus the derived attractor
diagnostics (Kaplan-Yorke dimension, KS entropy, error-doubling time)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ModelParams
from .errors import ConfigError, NumericsError
from .dynamics import rk4_step, slow_tendency

NEUTRAL_BAND = 1e-2


@dataclass(frozen=True)
class LyapunovConfig:
    spinup: float = 500.0
    renorm_interval: float = 0.2
    total_time: float = 1500.0
    dt: float = 0.01

    def __post_init__(self):
        if not self.total_time > self.spinup:
            raise ConfigError("total_time must exceed spinup")
        steps = self.renorm_interval / self.dt
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigError("renorm_interval must be a positive integer multiple of dt")

    @property
    def steps_per_renorm(self) -> int:
        return int(round(self.renorm_interval / self.dt))


@dataclass
class LyapunovResult:
    """Exponents sorted descending, plus per-renormalization running
    estimates for convergence plots."""

    exponents: np.ndarray
    history_times: np.ndarray
    history: np.ndarray  # (n_renorms, d) running estimates

    @property
    def d(self) -> int:
        return len(self.exponents)


def slow_jacobian(X: np.ndarray, p: ModelParams) -> np.ndarray:
    """Jacobian of the slow-only tendency G; nonzero on the cyclic stencil
    {k-2, k-1, k, k+1}."""
    X = np.asarray(X, dtype=float)
    if X.shape != (p.K,):
        raise ConfigError(f"X has shape {X.shape}, expected ({p.K},)")
    K = p.K
    k = np.arange(K)
    xm1 = np.roll(X, 1)
    xm2 = np.roll(X, 2)
    xp1 = np.roll(X, -1)
    J = np.zeros((K, K))
    J[k, (k - 2) % K] += -xm1
    J[k, (k - 1) % K] += -(xm2 - xp1)
    J[k, k] += -1.0
    J[k, (k + 1) % K] += xm1
    return J


def _mgs_columns(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt on the columns of V.

    Returns (Q, diag) with orthonormal columns and the positive norms that
    played the role of the R diagonal.
    """
    d = V.shape[1]
    Q = V.copy()
    diag = np.empty(d)
    for j in range(d):
        v = Q[:, j]
        if j > 0:
            v = v - Q[:, :j] @ (Q[:, :j].T @ v)
        norm = np.linalg.norm(v)
        if norm == 0.0 or not np.isfinite(norm):
            raise NumericsError(f"degenerate tangent vector at column {j}")
        Q[:, j] = v / norm
        diag[j] = norm
    return Q, diag


def lyapunov_spectrum_general(
    rhs: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    cfg: LyapunovConfig,
) -> LyapunovResult:
    """Benettin-style spectrum for an arbitrary smooth flow.

    Integrates the state together with a full tangent basis (RK4 on the
    variational equation v' = J(x(t)) v, Jacobian evaluated at each stage
    state), re-orthonormalizing every `renorm_interval` and accumulating the
    log norms.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size

    def packed_rhs(y):
        x = y[:d]
        V = y[d:].reshape(d, d)
        return np.concatenate([rhs(x), (jacobian(x) @ V).ravel()])

    # spinup: transient decay on the state alone
    x = x0.copy()
    n_spin = int(round(cfg.spinup / cfg.dt))
    for _ in range(n_spin):
        x = rk4_step(rhs, x, cfg.dt)

    y = np.concatenate([x, np.eye(d).ravel()])
    accum = np.zeros(d)
    n_renorms = int(round((cfg.total_time - cfg.spinup) / cfg.renorm_interval))
    history = np.empty((n_renorms, d))
    history_times = np.empty(n_renorms)
    for i in range(n_renorms):
        for _ in range(cfg.steps_per_renorm):
            y = rk4_step(packed_rhs, y, cfg.dt)
        V = y[d:].reshape(d, d)
        Q, diag = _mgs_columns(V)
        y[d:] = Q.ravel()
        accum += np.log(diag)
        elapsed = (i + 1) * cfg.renorm_interval
        history[i] = accum / elapsed
        history_times[i] = cfg.spinup + elapsed
    exponents = np.sort(history[-1])[::-1].copy()
    return LyapunovResult(exponents=exponents, history_times=history_times, history=history)


def lyapunov_spectrum(
    p: ModelParams, cfg: LyapunovConfig, rng: np.random.Generator
) -> LyapunovResult:
    """Spectrum of the uncoupled slow system (the h = 0 regime)."""
    x0 = rng.uniform(-1.0, 1.0, size=p.K)
    x0[0] += p.F / 10.0
    return lyapunov_spectrum_general(
        lambda x: slow_tendency(x, p.F), lambda x: slow_jacobian(x, p), x0, cfg
    )


def kaplan_yorke(exponents: np.ndarray) -> float:
    """Attractor dimension from the exponent partial sums."""
    lam = np.asarray(exponents, dtype=float)
    if lam.size == 0:
        raise ConfigError("empty exponent vector")
    if np.any(np.diff(lam) > 0):
        raise ConfigError("exponents must be sorted descending")
    partial = np.cumsum(lam)
    positive = np.nonzero(partial > 0)[0]
    if positive.size == 0:
        return 0.0
    r = positive[-1] + 1  # number of leading exponents with positive partial sum
    if r == lam.size:
        warnings.warn("all partial sums positive; Kaplan-Yorke dimension saturates at d")
        return float(lam.size)
    return float(r + partial[r - 1] / abs(lam[r]))


def ks_entropy(exponents: np.ndarray) -> float:
    """Upper bound on the Kolmogorov-Sinai entropy: sum of positive exponents."""
    lam = np.asarray(exponents, dtype=float)
    return float(lam[lam > 0].sum())


def error_doubling_time(lam1: float) -> float:
    if not lam1 > 0:
        raise ConfigError(f"doubling time undefined for lambda1 = {lam1}")
    return float(np.log(2.0) / lam1)


def classify_exponents(exponents: np.ndarray, band: float = NEUTRAL_BAND) -> dict:
    """Counts of strictly positive / strictly negative exponents plus the
    (overlapping) neutral band around zero."""
    lam = np.asarray(exponents, dtype=float)
    return {
        "n_positive": int(np.sum(lam > 0)),
        "n_neutral": int(np.sum(np.abs(lam) <= band)),
        "n_negative": int(np.sum(lam < 0)),
    }


def lyapunov_report(result: LyapunovResult) -> dict:
    """JSON-ready summary of a spectrum run."""
    lam = result.exponents
    report = {"exponents": lam.tolist(), "d_ky": kaplan_yorke(lam), "h_ks": ks_entropy(lam)}
    report["doubling_time"] = error_doubling_time(lam[0]) if lam[0] > 0 else None
    report.update(classify_exponents(lam))
    return report
