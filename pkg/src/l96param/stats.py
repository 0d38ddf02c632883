"""Distributional and trajectory diagnostics: Gaussian kernel density
estimates, autocorrelation functions, Kullback-Leibler divergence, and mean
squared prediction error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_SQRT_2PI = np.sqrt(2.0 * np.pi)
KL_FLOOR = 1e-12


@dataclass
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapz(self.density, self.grid))


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 min(std, IQR/1.34) N^(-1/5); falls back to the nonzero member
    when one spread measure degenerates."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        raise ConfigError("need at least two samples for a bandwidth rule")
    std = float(np.std(s))
    iqr = float(np.percentile(s, 75) - np.percentile(s, 25))
    spread = min(std, iqr / 1.34)
    if spread == 0.0:
        spread = max(std, iqr / 1.34)
    if spread == 0.0:
        raise ConfigError("constant samples admit no bandwidth")
    return 0.9 * spread * s.size ** (-0.2)


def kde(samples: np.ndarray, grid: np.ndarray, bandwidth: float,
        chunk: int = 4096) -> DensityEstimate:
    """Gaussian kernel density estimate on a grid:
    p(x) = (1/N) sum_j exp(-(x_j - x)^2 / 2 lambda^2) / sqrt(2 pi lambda^2).

    Samples are processed in chunks to bound memory on long series.
    """
    s = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    if s.size == 0:
        raise ConfigError("empty sample set")
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be positive")
    acc = np.zeros(grid.shape)
    inv = 1.0 / (2.0 * bandwidth * bandwidth)
    for lo in range(0, s.size, chunk):
        block = s[lo : lo + chunk]
        acc += np.exp(-inv * (block[None, :] - grid[:, None]) ** 2).sum(axis=1)
    density = acc / (s.size * bandwidth * _SQRT_2PI)
    return DensityEstimate(grid=grid, density=density, bandwidth=bandwidth)


def density_grid(samples: np.ndarray, bandwidth: float, n_points: int = 512,
                 pad_bandwidths: float = 5.0) -> np.ndarray:
    s = np.asarray(samples, dtype=float)
    lo = s.min() - pad_bandwidths * bandwidth
    hi = s.max() + pad_bandwidths * bandwidth
    return np.linspace(lo, hi, n_points)


def acf(series: np.ndarray, max_lag: int, dt: float = 1.0,
        normalized: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Autocovariance at lags 0..max_lag:
    C(m dt) = (1/(M-m)) sum_h (x_h - xbar)(x_{h+m} - xbar), with the global
    mean xbar over all M points. Returns (lag times, values); the normalized
    variant divides by C(0).
    """
    x = np.asarray(series, dtype=float).ravel()
    M = x.size
    if not 0 <= max_lag < M:
        raise ConfigError(f"max_lag must be in [0, {M - 1}]")
    centered = x - x.mean()
    values = np.empty(max_lag + 1)
    for m in range(max_lag + 1):
        n = M - m
        values[m] = np.dot(centered[:n], centered[m:]) / n
    if normalized:
        if values[0] == 0.0:
            raise ConfigError("constant series: normalized ACF undefined")
        values = values / values[0]
    return np.arange(max_lag + 1) * dt, values


def kl_divergence(P: np.ndarray, Q: np.ndarray, floor: float = KL_FLOOR) -> float:
    """Discrete D_KL(P || Q) = sum P log(P/Q) over grid cells with P > 0.

    Both inputs are renormalized to sum to one; Q is floored at `floor`
    before the log so KDE tails cannot produce infinities.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ConfigError("P and Q must share one grid")
    if np.any(P < 0) or np.any(Q < 0):
        raise ConfigError("densities must be nonnegative")
    ps = P.sum()
    qs = Q.sum()
    if ps <= 0 or qs <= 0:
        raise ConfigError("densities must have positive mass")
    p = P / ps
    q = np.maximum(Q / qs, floor)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_between_samples(a: np.ndarray, b: np.ndarray, n_grid: int = 512,
                       pad_bandwidths: float = 3.0) -> float:
    """KL divergence between the KDE densities of two sample sets, evaluated
    on a shared uniform grid spanning both sample ranges."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    ba = silverman_bandwidth(a)
    bb = silverman_bandwidth(b)
    lo = min(a.min(), b.min()) - pad_bandwidths * max(ba, bb)
    hi = max(a.max(), b.max()) + pad_bandwidths * max(ba, bb)
    grid = np.linspace(lo, hi, n_grid)
    pa = kde(a, grid, ba).density
    pb = kde(b, grid, bb).density
    return kl_divergence(pa, pb)


def mspe(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Mean squared prediction error, averaged over times then components:
    (1/K) sum_k (1/I) sum_i (pred_k(t_i) - truth_k(t_i))^2. Rows are times,
    columns components, on aligned time grids."""
    truth = np.asarray(truth, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if truth.shape != predicted.shape:
        raise ConfigError(f"shape mismatch {truth.shape} vs {predicted.shape}")
    return float(np.mean((predicted - truth) ** 2))
