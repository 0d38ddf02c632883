"""Model parameters, experiment configuration, and seeded RNG fan-out."""
from __future__ import annotations

import dataclasses
import json
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the two-scale system.

    K slow sectors, J fast subsectors per sector, forcing F, coupling h,
    fast time-scale ratio c, fast amplitude ratio b, integration step dt.
    """

    K: int = 40
    J: int = 10
    F: float = 10.0
    h: float = 1.0
    c: float = 10.0
    b: float = 10.0
    dt: float = 0.01

    def __post_init__(self):
        # The advection stencil couples k-2, k-1, k+1: needs K >= 4 distinct sites.
        if self.K < 4:
            raise ConfigError(f"K must be >= 4, got {self.K}")
        if self.J < 1:
            raise ConfigError(f"J must be >= 1, got {self.J}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.c > 0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if self.b == 0:
            raise ConfigError("b must be nonzero")

    @property
    def n_fast(self) -> int:
        return self.K * self.J

    @property
    def n_full(self) -> int:
        return self.K + self.K * self.J

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model parameter(s): {sorted(extra)}")
        return cls(**d)


def named_seed(master_seed: int, label: str) -> np.random.SeedSequence:
    """Derive an independent, reproducible seed stream for a named pipeline stage.

    The label is hashed so streams do not depend on the order stages run in.
    """
    return np.random.SeedSequence((int(master_seed), zlib.crc32(label.encode())))


def named_rng(master_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(named_seed(master_seed, label))


@dataclass(frozen=True)
class EnkfSettings:
    """Assimilation experiment settings."""

    n_members: int = 40
    obs_every: int = 20          # integration steps between observations
    obs_sigma: float = 0.15      # observation noise std per component
    window: float = 10.0         # assimilation window length (time units)
    init_spread: float = 0.1     # initial ensemble perturbation std

    def __post_init__(self):
        if self.n_members < 2:
            raise ConfigError("n_members must be >= 2")
        if self.obs_every < 1:
            raise ConfigError("obs_every must be >= 1")
        if not self.obs_sigma > 0:
            raise ConfigError("obs_sigma must be positive")
        if not self.window > 0:
            raise ConfigError("window must be positive")


METHODS = ("wilks", "cs-raw", "cs-zero-bias", "cs-avg-bias", "cs-noisy-bias")


@dataclass(frozen=True)
class ExperimentConfig:
    """End-to-end experiment configuration with a single master seed."""

    params: ModelParams = field(default_factory=ModelParams)
    train_window: tuple[float, float] = (500.0, 1000.0)
    test_window: tuple[float, float] = (1000.0, 2000.0)
    pdf_window: tuple[float, float] = (500.0, 2000.0)
    horizon: float = 0.9          # prediction horizon: three error-doubling times
    methods: tuple[str, ...] = METHODS
    sigma_bias: float = 0.07      # bias-noise std for the noisy-bias variant
    ar_enabled: bool = True
    pdf_stride: int = 10          # snapshot thinning for density estimates
    kl_grid_size: int = 512
    lambda_grid_size: int = 50
    lambda_min_ratio: float = 1e-4
    cv_folds: int = 5
    enkf: EnkfSettings = field(default_factory=EnkfSettings)
    master_seed: int = 0

    def __post_init__(self):
        t0, t1 = self.train_window
        u0, u1 = self.test_window
        if not (0.0 <= t0 < t1):
            raise ConfigError(f"train window must be ordered, got {self.train_window}")
        if not (u0 < u1):
            raise ConfigError(f"test window must be ordered, got {self.test_window}")
        if u0 < t1:
            raise ConfigError("test window may not overlap the training window")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.pdf_window[0] >= self.pdf_window[1]:
            raise ConfigError("pdf window must be ordered")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown method(s): {sorted(unknown)}")
        if self.pdf_stride < 1:
            raise ConfigError("pdf_stride must be >= 1")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")

    def rng(self, label: str) -> np.random.Generator:
        return named_rng(self.master_seed, label)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = self.params.to_dict()
        d["enkf"] = dataclasses.asdict(self.enkf)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "params" in d:
            d["params"] = ModelParams.from_dict(d["params"])
        if "enkf" in d:
            d["enkf"] = EnkfSettings(**d["enkf"])
        for key in ("train_window", "test_window", "pdf_window", "methods"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config key(s): {sorted(extra)}")
        return cls(**d)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an ExperimentConfig from a TOML or JSON file."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"bad config {path}: {exc}")


def load_params(path: str | Path) -> ModelParams:
    """Read bare ModelParams from a TOML or JSON file (keys match field names)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    if "params" in data:  # allow a full experiment config file
        data = data["params"]
    try:
        return ModelParams.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"bad model parameters in {path}: {exc}")
