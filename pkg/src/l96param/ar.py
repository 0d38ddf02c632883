"""First-order autoregressive modeling of parameterization residuals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError


@dataclass(frozen=True)
class ARModel:
    """e(t_i) = phi e(t_{i-1}) + sigma z_i with z iid standard normal.

    sigma is the innovation std; sigma_e the stationary process std,
    sigma_e = sigma / sqrt(1 - phi^2). Non-stationary fits (|phi| >= 1)
    carry sigma_e = nan.
    """

    phi: float
    sigma: float
    sigma_e: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.sigma_e is None:
            object.__setattr__(self, "sigma_e", stationary_std(self.phi, self.sigma))

    @property
    def stationary(self) -> bool:
        return abs(self.phi) < 1.0

    def to_dict(self) -> dict:
        return {"phi": self.phi, "sigma": self.sigma, "sigma_e": self.sigma_e}


def stationary_std(phi: float, sigma: float) -> float:
    if abs(phi) >= 1.0:
        return math.nan
    return sigma / math.sqrt(1.0 - phi * phi)


def fit_ar1(residuals: np.ndarray) -> ARModel:
    """Pooled least-squares AR(1) fit over components.

    `residuals` is a K x I matrix e_k(t_i) (rows are components, columns
    times). phi minimizes C(phi) = sum_{k,i>=2} (e_k(t_i) - phi e_k(t_{i-1}))^2
    in closed form; sigma^2 = C(phi) / (K (I-1) - 1).
    """
    e = np.atleast_2d(np.asarray(residuals, dtype=float))
    K, I = e.shape
    if I < 2:
        raise ConfigError("need at least two time points per component")
    lead = e[:, 1:]
    lag = e[:, :-1]
    denom = float(np.sum(lag * lag))
    if denom == 0.0:
        raise NumericsError("all lagged residuals are zero; phi undefined")
    phi = float(np.sum(lead * lag)) / denom
    cost = float(np.sum((lead - phi * lag) ** 2))
    dof = K * (I - 1) - 1
    if dof <= 0:
        raise ConfigError("not enough samples for the degrees-of-freedom correction")
    sigma = math.sqrt(cost / dof)
    return ARModel(phi=phi, sigma=sigma)


def simulate_ar1(model: ARModel, n_steps: int, rng: np.random.Generator,
                 e0: float = 0.0) -> np.ndarray:
    """Run the recursion for n_steps, returning e(t_1..t_n) (e0 excluded)."""
    if not model.stationary:
        raise ConfigError(f"non-stationary model (phi = {model.phi})")
    z = rng.standard_normal(n_steps)
    out = np.empty(n_steps)
    e = e0
    for i in range(n_steps):
        e = model.phi * e + model.sigma * z[i]
        out[i] = e
    return out
