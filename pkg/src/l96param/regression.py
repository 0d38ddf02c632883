"""Degree-4 polynomial regression baseline: one shared polynomial P(X_k)
fit across all components by pooled ordinary least squares."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericsError

DEGREE = 4


@dataclass(frozen=True)
class WilksModel:
    """P(x) = a0 + a1 x + a2 x^2 + a3 x^3 + a4 x^4."""

    a0: float
    a1: float
    a2: float
    a3: float
    a4: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.a3, self.a4])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return eval_poly(self, x)

    def to_dict(self) -> dict:
        return {"a0": self.a0, "a1": self.a1, "a2": self.a2, "a3": self.a3, "a4": self.a4}

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "WilksModel":
        data = json.loads(Path(path).read_text())
        return cls(**{k: data[k] for k in ("a0", "a1", "a2", "a3", "a4")})


def eval_poly(model: WilksModel, x) -> np.ndarray:
    """Horner evaluation of P at x (scalar or array)."""
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, model.a4)
    for a in (model.a3, model.a2, model.a1, model.a0):
        out = out * x + a
    return out


def fit_wilks(X_train: np.ndarray, U_train: np.ndarray,
              cond_threshold: float = 1e12) -> WilksModel:
    """Pooled least squares of U against (1, x, x^2, x^3, x^4).

    All (X_k(t_i), U_k(t_i)) pairs share one polynomial. Columns are scaled
    by their max-abs before solving for conditioning and unscaled afterwards.
    Near rank-deficient designs (e.g. constant X) are rejected rather than
    silently pseudo-inverted.
    """
    X_train = np.asarray(X_train, dtype=float)
    U_train = np.asarray(U_train, dtype=float)
    if X_train.shape != U_train.shape:
        raise ConfigError("X_train and U_train must have matching shapes")
    x = X_train.ravel()
    u = U_train.ravel()
    if x.size <= DEGREE:
        raise ConfigError("not enough samples for a quartic fit")
    V = np.vander(x, DEGREE + 1, increasing=True)
    scale = np.abs(V).max(axis=0)
    scale[scale == 0.0] = 1.0
    Vs = V / scale
    cond = np.linalg.cond(Vs)
    if not np.isfinite(cond) or cond > cond_threshold:
        raise NumericsError(f"design matrix condition {cond:.3g} exceeds "
                            f"{cond_threshold:g} (degenerate X data)")
    coef, *_ = np.linalg.lstsq(Vs, u, rcond=None)
    coef = coef / scale
    return WilksModel(*[float(c) for c in coef])
