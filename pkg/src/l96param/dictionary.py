"""Candidate-function (monomial) dictionaries evaluated on snapshot data.

Columns are ordered graded-lexicographically: by total degree first, then by
the lexicographic order of the variable tuple, matching the block layout
1 | X | X^2-terms | ... The constant term is the empty multi-index.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class MultiIndex:
    """Sparse exponent map of one monomial, e.g. ((2, 1), (5, 3)) = x2 * x5^3
    (zero-based variables). The empty tuple is the constant term."""

    powers: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(sorted(tuple(p) for p in self.powers)))
        for var, power in self.powers:
            if var < 0 or power <= 0:
                raise ConfigError(f"bad multi-index entry ({var}, {power})")
        if len({v for v, _ in self.powers}) != len(self.powers):
            raise ConfigError("duplicate variable in multi-index")

    @classmethod
    def from_vars(cls, variables) -> "MultiIndex":
        """Build from a variable tuple with repetition, e.g. (0, 0, 3) = x0^2 x3."""
        counts: dict[int, int] = {}
        for v in variables:
            counts[v] = counts.get(v, 0) + 1
        return cls(tuple(counts.items()))

    @property
    def degree(self) -> int:
        return sum(p for _, p in self.powers)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.powers)

    def is_univariate_in(self, var: int) -> bool:
        return len(self.powers) == 0 or (len(self.powers) == 1 and self.powers[0][0] == var)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on snapshots (last axis indexes variables)."""
        out = np.ones(np.shape(X)[:-1])
        for var, power in self.powers:
            out = out * X[..., var] ** power
        return out

    def sort_key(self) -> tuple:
        # graded-lex: degree first, then the expanded variable tuple
        expanded = tuple(itertools.chain.from_iterable([v] * p for v, p in self.powers))
        return (self.degree, expanded)

    def label(self, prefix: str = "X") -> str:
        if not self.powers:
            return "1"
        return "*".join(f"{prefix}{v + 1}" + (f"^{p}" if p > 1 else "")
                        for v, p in self.powers)

    def to_json(self) -> list:
        return [[v, p] for v, p in self.powers]

    @classmethod
    def from_json(cls, data) -> "MultiIndex":
        return cls(tuple((int(v), int(p)) for v, p in data))


def count_monomials(n: int, degree: int, mode: str = "exact") -> int:
    """Number of n-variate monomials: `exact` counts degree == d; `up_to`
    counts 1 <= degree <= d (the constant excluded)."""
    if n < 1 or degree < 0:
        raise ConfigError("need n >= 1 and degree >= 0")
    if mode == "exact":
        return math.comb(n + degree - 1, degree)
    if mode == "up_to":
        return math.comb(n + degree, degree) - 1
    raise ConfigError(f"unknown mode {mode!r}")


def monomials(n: int, degree: int, mode: str = "exact",
              include_constant: bool = False) -> list[MultiIndex]:
    """Enumerate descriptors in graded-lexicographic order."""
    if mode == "exact":
        degrees = [degree]
    elif mode == "up_to":
        degrees = list(range(1, degree + 1))
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    out = [MultiIndex()] if include_constant else []
    for d in degrees:
        out.extend(MultiIndex.from_vars(combo)
                   for combo in itertools.combinations_with_replacement(range(n), d))
    return out


def univariate_monomials(n: int, degree: int) -> list[MultiIndex]:
    """Pure powers x_k^p for every variable, p = 1..degree, graded-lex order."""
    return [MultiIndex(((k, p),)) for p in range(1, degree + 1) for k in range(n)]


@dataclass
class Dictionary:
    """Snapshot-evaluated basis matrix with descriptor bookkeeping.

    `norms` records the original L2 norm of every column; when `normalized`
    is set the stored columns have unit norm and a raw-scale coefficient is
    obtained from a fitted one by dividing by the matching norm.
    """

    matrix: np.ndarray
    descriptors: list[MultiIndex]
    norms: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.descriptors):
            raise ConfigError("descriptor count does not match column count")
        if len(set(self.descriptors)) != len(self.descriptors):
            raise ConfigError("descriptors must be unique")

    @property
    def n_snapshots(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def column_index(self, descriptor: MultiIndex) -> int:
        return self.descriptors.index(descriptor)


def build_dictionary(X: np.ndarray, descriptors: list[MultiIndex] | None = None,
                     degree: int | None = None, mode: str = "up_to",
                     include_constant: bool = False,
                     normalize: bool = False) -> Dictionary:
    """Evaluate monomial columns on the snapshot matrix X (m x n).

    Either pass explicit `descriptors` or a `degree`/`mode` specification.
    Under `normalize`, columns are scaled to unit L2 norm and zero-norm
    columns are dropped with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError("X must be a nonempty m x n snapshot matrix")
    n = X.shape[1]
    if descriptors is None:
        if degree is None:
            raise ConfigError("need descriptors or a degree specification")
        descriptors = monomials(n, degree, mode=mode, include_constant=include_constant)
    for d in descriptors:
        if d.powers and max(v for v, _ in d.powers) >= n:
            raise ConfigError(f"descriptor {d.label()} references variable beyond n={n}")
    descriptors = sorted(descriptors, key=MultiIndex.sort_key)
    matrix = np.empty((X.shape[0], len(descriptors)))
    for j, desc in enumerate(descriptors):
        matrix[:, j] = desc.evaluate(X)
    norms = np.linalg.norm(matrix, axis=0)
    if normalize:
        keep = norms > 0
        if not np.all(keep):
            dropped = [descriptors[j].label() for j in np.nonzero(~keep)[0]]
            warnings.warn(f"dropping zero-norm column(s): {dropped}")
            matrix = matrix[:, keep]
            descriptors = [d for d, k in zip(descriptors, keep) if k]
            norms = norms[keep]
        matrix = matrix / norms
    return Dictionary(matrix=matrix, descriptors=list(descriptors), norms=norms,
                      normalized=normalize)


def random_column_subset(n: int, forced: list[MultiIndex], k_random: int,
                         rng: np.random.Generator, degree: int = 3) -> list[MultiIndex]:
    """Union of `forced` descriptors with a seeded uniform sample (without
    replacement) of exact-degree monomials not already forced."""
    pool = [d for d in monomials(n, degree, mode="exact") if d not in set(forced)]
    if k_random > len(pool):
        raise ConfigError(f"k_random = {k_random} exceeds pool of {len(pool)}")
    idx = rng.choice(len(pool), size=k_random, replace=False)
    subset = list(forced) + [pool[i] for i in sorted(idx)]
    return sorted(subset, key=MultiIndex.sort_key)
