"""Lasso solver (cyclic coordinate descent) and the sparse parameterization
ladder: per-component fits over monomial dictionaries, bias handling,
coefficient averaging, and model serialization.

Objective convention: ||y - Theta s||_2^2 + lambda ||s||_1 (no 1/2 factor),
so the coordinate soft threshold sits at lambda / 2.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dictionary import (
    Dictionary,
    MultiIndex,
    build_dictionary,
    monomials,
    univariate_monomials,
)
from .errors import ConfigError, NumericsError


def soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@dataclass
class LassoSolution:
    coefficients: np.ndarray
    objective: float
    iterations: int
    max_kkt_violation: float
    converged: bool


def _cd_solve(G, b, yty, lam, penalized, tol, max_iter, s0=None):
    """Coordinate descent on the Gram form.

    G = Theta^T Theta, b = Theta^T y. Maintains q = G s so each coordinate
    update costs O(p). After every full pass the support is polished with
    inner passes over the nonzero coordinates only (cheap, and the slow
    tail of collinear problems lives there). Columns with zero diagonal are
    left untouched.
    """
    p = b.size
    s = np.zeros(p) if s0 is None else s0.copy()
    q = G @ s if s0 is not None else np.zeros(p)
    diag = np.diag(G)
    half_lam = 0.5 * lam
    usable = [j for j in range(p) if diag[j] > 0.0]

    def pass_over(indices):
        nonlocal q
        max_delta = 0.0
        for j in indices:
            rho = b[j] - q[j] + diag[j] * s[j]
            if penalized[j]:
                new = soft_threshold(rho, half_lam) / diag[j]
            else:
                new = rho / diag[j]
            delta = new - s[j]
            if delta != 0.0:
                q += G[:, j] * delta
                s[j] = new
                max_delta = max(max_delta, abs(delta))
        return max_delta

    def refine_support():
        """Jump to the sign-fixed stationary point on the current support.

        With signs frozen, the Lasso optimum solves a linear system; the
        result only replaces s when it keeps the sign pattern, and the caller
        still certifies it with a full soft-threshold pass.
        """
        nonlocal q
        S = [j for j in usable if s[j] != 0.0 or not penalized[j]]
        if not S or len(S) > 2000:
            return
        signs = np.array([np.sign(s[j]) if penalized[j] else 0.0 for j in S])
        rhs = b[S] - half_lam * signs
        try:
            z = np.linalg.solve(G[np.ix_(S, S)], rhs)
        except np.linalg.LinAlgError:
            return
        ok = all(np.sign(z[i]) == signs[i] for i in range(len(S))
                 if penalized[S[i]] and signs[i] != 0.0)
        if not ok:
            return
        s[:] = 0.0
        s[S] = z
        q = G[:, S] @ z

    converged = False
    sweep = 0
    for sweep in range(1, max_iter + 1):
        if pass_over(usable) < tol:
            converged = True
            break
        support = [j for j in usable if s[j] != 0.0 or not penalized[j]]
        if len(support) < len(usable):
            for _ in range(50):
                if pass_over(support) < tol:
                    break
            refine_support()
    grad = 2.0 * (b - q)  # gradient of the quadratic part, negated
    viol = 0.0
    for j in usable:
        if not penalized[j]:
            viol = max(viol, abs(grad[j]))
        elif s[j] != 0.0:
            viol = max(viol, abs(grad[j] - lam * np.sign(s[j])))
        else:
            viol = max(viol, max(abs(grad[j]) - lam, 0.0))
    objective = float(yty - 2.0 * b @ s + s @ q + lam * np.sum(np.abs(s[penalized])))
    return s, objective, sweep, viol, converged


def lasso(Theta: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-10,
          max_iter: int = 1000, unpenalized=()) -> LassoSolution:
    """Minimize ||y - Theta s||^2 + lam ||s||_1 by cyclic coordinate descent.

    Columns listed in `unpenalized` (e.g. an intercept) are excluded from the
    L1 term. Convergence is declared when the largest coefficient change in a
    sweep drops below `tol`; hitting `max_iter` returns the current iterate
    with `converged = False`.
    """
    Theta = np.asarray(Theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(Theta)) or not np.all(np.isfinite(y)):
        raise ConfigError("non-finite entries in the Lasso inputs")
    if lam < 0:
        raise ConfigError("lambda must be nonnegative")
    if Theta.shape[0] != y.size:
        raise ConfigError("row count mismatch between Theta and y")
    G = Theta.T @ Theta
    b = Theta.T @ y
    penalized = np.ones(b.size, dtype=bool)
    penalized[list(unpenalized)] = False
    s, obj, sweeps, viol, converged = _cd_solve(G, b, float(y @ y), lam, penalized,
                                                tol, max_iter)
    if not converged:
        warnings.warn(f"lasso did not converge in {max_iter} sweeps "
                      f"(last KKT violation {viol:.3g})")
    return LassoSolution(coefficients=s, objective=obj, iterations=sweeps,
                         max_kkt_violation=viol, converged=converged)


def lambda_max(Theta: np.ndarray, y: np.ndarray, unpenalized=()) -> float:
    """Smallest lambda that zeroes every penalized coefficient.

    With unpenalized columns present, the correlation is taken against the
    residual of the unpenalized-only least-squares fit.
    """
    Theta = np.asarray(Theta, dtype=float)
    y = np.asarray(y, dtype=float)
    unpen = list(unpenalized)
    resid = y
    if unpen:
        Q = Theta[:, unpen]
        coef, *_ = np.linalg.lstsq(Q, y, rcond=None)
        resid = y - Q @ coef
    pen = [j for j in range(Theta.shape[1]) if j not in set(unpen)]
    if not pen:
        return 0.0
    return float(2.0 * np.max(np.abs(Theta[:, pen].T @ resid)))


def default_lambda_grid(lam_max: float, size: int = 50, min_ratio: float = 1e-4) -> np.ndarray:
    if lam_max <= 0:
        raise ConfigError("lambda_max must be positive to build a grid")
    return np.geomspace(min_ratio * lam_max, lam_max, size)


def cross_validate_lambda(Theta: np.ndarray, y: np.ndarray,
                          lambdas: np.ndarray | None = None, n_folds: int = 5,
                          unpenalized=(), tol: float = 1e-10,
                          max_iter: int = 1000) -> tuple[float, np.ndarray]:
    """Pick lambda by contiguous-block cross-validation (the samples are a
    time series, so folds are blocks rather than random subsets).

    Returns (best_lambda, mean held-out squared errors per grid value). Ties
    resolve toward the larger (sparser) lambda.
    """
    Theta = np.asarray(Theta, dtype=float)
    y = np.asarray(y, dtype=float)
    m, p = Theta.shape
    if n_folds < 2:
        raise ConfigError("need at least two folds")
    if lambdas is None:
        lambdas = default_lambda_grid(lambda_max(Theta, y, unpenalized))
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    if lambdas.size == 0:
        raise ConfigError("empty lambda grid")
    penalized = np.ones(p, dtype=bool)
    penalized[list(unpenalized)] = False
    G_total = Theta.T @ Theta
    b_total = Theta.T @ y
    yty_total = float(y @ y)
    bounds = np.linspace(0, m, n_folds + 1).astype(int)
    errors = np.zeros((n_folds, lambdas.size))
    used = np.ones(n_folds, dtype=bool)
    for f in range(n_folds):
        lo, hi = bounds[f], bounds[f + 1]
        Th_va, y_va = Theta[lo:hi], y[lo:hi]
        if np.ptp(y_va) == 0.0:
            warnings.warn(f"fold {f} has constant held-out target; skipped")
            used[f] = False
            continue
        G_tr = G_total - Th_va.T @ Th_va
        b_tr = b_total - Th_va.T @ y_va
        yty_tr = yty_total - float(y_va @ y_va)
        s = None
        for i, lam in enumerate(lambdas):  # descending: warm starts stay valid
            s, *_ = _cd_solve(G_tr, b_tr, yty_tr, lam, penalized, tol, max_iter, s0=s)
            r = y_va - Th_va @ s
            errors[f, i] = float(r @ r)
    if not np.any(used):
        raise NumericsError("all cross-validation folds degenerate")
    mean_err = errors[used].mean(axis=0)
    best = mean_err.min()
    candidates = np.nonzero(mean_err <= best * (1.0 + 1e-12))[0]
    pick = candidates[0]  # lambdas sorted descending: first qualifying = largest
    return float(lambdas[pick]), mean_err


@dataclass
class SparseModel:
    """Per-component sparse parameterization in raw data scale.

    `coefficients[k]` maps monomial descriptors to coefficients for component
    k; `bias[k]` is the additive constant. Bias handling is tracked in
    `bias_mode` (raw fitted intercepts, zero, average, or average plus seeded
    Gaussian noise).
    """

    descriptors: list[MultiIndex]
    coefficients: list[dict[MultiIndex, float]]
    bias: np.ndarray
    bias_mode: str = "raw"
    sigma_bias: float | None = None
    lam: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bias = np.asarray(self.bias, dtype=float)
        if len(self.coefficients) != self.bias.size:
            raise ConfigError("bias length must match component count")
        self._poly_cache = None

    @property
    def n_components(self) -> int:
        return self.bias.size

    def _univariate_coefficients(self) -> np.ndarray | None:
        """(K, dmax+1) ascending-power matrix incl. bias when every term of
        component k is a pure power of X_k; None otherwise."""
        K = self.n_components
        dmax = 0
        for k, coefs in enumerate(self.coefficients):
            for desc in coefs:
                if not desc.is_univariate_in(k):
                    return None
                dmax = max(dmax, desc.degree)
        C = np.zeros((K, dmax + 1))
        C[:, 0] = self.bias
        for k, coefs in enumerate(self.coefficients):
            for desc, value in coefs.items():
                C[k, desc.degree] += value
        return C

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Evaluate f_k(X) + bias_k for every component; X is (..., K)."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_components:
            raise ConfigError(f"X has last dim {X.shape[-1]}, expected {self.n_components}")
        if self._poly_cache is None:
            self._poly_cache = (self._univariate_coefficients(),)
        C = self._poly_cache[0]
        if C is not None:  # Horner across all components at once
            out = np.broadcast_to(C[:, -1], X.shape).copy()
            for power in range(C.shape[1] - 2, -1, -1):
                out = out * X + C[:, power]
            return out
        out = np.broadcast_to(self.bias, X.shape).copy()
        for k, coefs in enumerate(self.coefficients):
            for desc, value in coefs.items():
                out[..., k] += value * desc.evaluate(X)
        return out

    def to_json(self) -> dict:
        return {
            "descriptors": [d.to_json() for d in self.descriptors],
            "coefficients": [
                [[self.descriptors.index(d), v] for d, v in sorted(
                    coefs.items(), key=lambda item: item[0].sort_key())]
                for coefs in self.coefficients
            ],
            "bias": self.bias.tolist(),
            "bias_mode": self.bias_mode,
            "sigma_bias": self.sigma_bias,
            "lambda": self.lam,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SparseModel":
        descriptors = [MultiIndex.from_json(d) for d in data["descriptors"]]
        coefficients = [
            {descriptors[j]: float(v) for j, v in entries}
            for entries in data["coefficients"]
        ]
        return cls(descriptors=descriptors, coefficients=coefficients,
                   bias=np.array(data["bias"], dtype=float),
                   bias_mode=data["bias_mode"], sigma_bias=data["sigma_bias"],
                   lam=data["lambda"], provenance=data.get("provenance", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "SparseModel":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DictionarySpec:
    """How to build the candidate pool for a parameterization fit.

    kind "polynomial": all monomials of the state up to `degree`.
    kind "univariate-pool": pure powers 1..degree of every component; the
    fitted equation of component k is then restricted to its own powers
    (plus the intercept), matching the per-component model family.
    kind "explicit": use `descriptors` as given.
    """

    kind: str = "univariate-pool"
    degree: int = 4
    descriptors: tuple[MultiIndex, ...] | None = None

    def build(self, n: int) -> list[MultiIndex]:
        if self.kind == "polynomial":
            return monomials(n, self.degree, mode="up_to")
        if self.kind == "univariate-pool":
            return univariate_monomials(n, self.degree)
        if self.kind == "explicit":
            if self.descriptors is None:
                raise ConfigError("explicit spec needs descriptors")
            return list(self.descriptors)
        raise ConfigError(f"unknown dictionary spec kind {self.kind!r}")


BIAS_MODES = ("raw", "zero", "average", "average_plus_noise")


def fit_cs_parameterization(
    X_train: np.ndarray,
    U_train: np.ndarray,
    spec: DictionarySpec,
    bias_mode: str = "raw",
    sigma_bias: float = 0.07,
    rng: np.random.Generator | None = None,
    lam: float | None = None,
    lambda_grid_size: int = 50,
    lambda_min_ratio: float = 1e-4,
    cv_folds: int = 5,
    tol: float = 1e-10,
    max_iter: int = 2000,
    provenance: dict | None = None,
) -> SparseModel:
    """Fit per-component sparse parameterizations U_k ~ f_k(X) + bias_k.

    Dictionary columns and every u_k are scaled to unit L2 norm before
    solving; coefficients are scaled back to raw units afterwards. The
    intercept is an unpenalized constant column. With `lam` unset, lambda is
    chosen once by block cross-validation on the first component and shared
    across components (they are statistically exchangeable).

    For the "univariate-pool" spec, the stored equation of component k keeps
    the powers of X_k plus the fitted intercept; coefficients that the joint
    fit placed on other components' powers are discarded, not refit.
    """
    X_train = np.asarray(X_train, dtype=float)
    U_train = np.asarray(U_train, dtype=float)
    if X_train.shape != U_train.shape:
        raise ConfigError("X_train and U_train must have matching shapes")
    m, K = X_train.shape
    descriptors = spec.build(K)
    full = build_dictionary(X_train, descriptors=[MultiIndex()] + descriptors,
                            normalize=True)
    const_idx = full.descriptors.index(MultiIndex())
    G = full.matrix.T @ full.matrix
    penalized = np.ones(full.n_columns, dtype=bool)
    penalized[const_idx] = False
    u_norms = np.linalg.norm(U_train, axis=0)
    if np.any(u_norms == 0.0):
        u_norms = np.where(u_norms == 0.0, 1.0, u_norms)
    Un = U_train / u_norms
    if lam is None:
        lmax = lambda_max(full.matrix, Un[:, 0], unpenalized=(const_idx,))
        if lmax == 0.0:
            lam = 0.0
        else:
            grid = default_lambda_grid(lmax, size=lambda_grid_size,
                                       min_ratio=lambda_min_ratio)
            lam, _ = cross_validate_lambda(full.matrix, Un[:, 0], lambdas=grid,
                                           n_folds=cv_folds,
                                           unpenalized=(const_idx,),
                                           tol=tol, max_iter=max_iter)
    coefficients: list[dict[MultiIndex, float]] = []
    biases = np.empty(K)
    worst_kkt = 0.0
    for k in range(K):
        b = full.matrix.T @ Un[:, k]
        s, _, _, viol, converged = _cd_solve(G, b, float(Un[:, k] @ Un[:, k]), lam,
                                             penalized, tol, max_iter)
        if not converged:
            warnings.warn(f"component {k}: lasso hit max_iter (KKT violation {viol:.3g})")
        worst_kkt = max(worst_kkt, viol)
        raw = s * u_norms[k] / full.norms
        biases[k] = raw[const_idx]
        entry: dict[MultiIndex, float] = {}
        for j, desc in enumerate(full.descriptors):
            if j == const_idx or raw[j] == 0.0:
                continue
            if spec.kind == "univariate-pool" and not desc.is_univariate_in(k):
                continue
            entry[desc] = float(raw[j])
        coefficients.append(entry)
    if spec.kind == "univariate-pool":
        template = [d for d in descriptors if d.powers]
    else:
        template = descriptors
    model = SparseModel(descriptors=list(template), coefficients=coefficients,
                        bias=biases, bias_mode="raw", sigma_bias=None, lam=float(lam),
                        provenance=dict(provenance or {}, dictionary=spec.kind,
                                        degree=spec.degree, max_kkt_violation=worst_kkt))
    if bias_mode != "raw":
        model = apply_bias_mode(model, bias_mode, sigma_bias=sigma_bias, rng=rng)
    return model


def apply_bias_mode(model: SparseModel, mode: str, sigma_bias: float = 0.0,
                    rng: np.random.Generator | None = None) -> SparseModel:
    """Transform the raw fitted biases: zero them, replace them with their
    mean, or draw them from N(mean, sigma_bias^2) with a seeded generator."""
    if mode not in BIAS_MODES:
        raise ConfigError(f"unknown bias mode {mode!r}")
    if mode == "raw":
        return model
    mu = float(model.bias.mean())
    if mode == "zero":
        bias = np.zeros_like(model.bias)
        sigma = None
    elif mode == "average":
        bias = np.full_like(model.bias, mu)
        sigma = None
    else:
        if rng is None:
            raise ConfigError("average_plus_noise needs an rng")
        bias = mu + sigma_bias * rng.standard_normal(model.bias.size)
        sigma = sigma_bias
    return replace(model, coefficients=[dict(c) for c in model.coefficients],
                   bias=bias, bias_mode=mode, sigma_bias=sigma,
                   provenance=dict(model.provenance, raw_bias_mean=mu))


def average_coefficients(model: SparseModel) -> np.ndarray:
    """Mean over components of the coefficient on each own-component power,
    plus the mean bias: returns [a0, a1, ..., a_dmax] ascending.

    Missing coefficients count as zero, so heterogeneous supports average
    cleanly. Only pure powers of the component's own variable participate.
    """
    K = model.n_components
    dmax = max((d.degree for d in model.descriptors), default=0)
    sums = np.zeros(dmax + 1)
    for k, coefs in enumerate(model.coefficients):
        for desc, value in coefs.items():
            if desc.is_univariate_in(k) and desc.powers:
                sums[desc.degree] += value
    out = sums / K
    out[0] = model.bias.mean()
    return out


@dataclass
class RelevanceScan:
    """Outcome of the repeated random-subset fits at one degree."""

    mean_abs: dict[MultiIndex, float]
    averaged_poly: np.ndarray  # own-power means [a0..a_degree]
    relevant: list[MultiIndex]
    n_repeats: int
    lam: float


def degree3_relevance_scan(
    X_train: np.ndarray,
    U_train: np.ndarray,
    rng: np.random.Generator,
    n_repeats: int = 100,
    n_random: int = 100,
    lam: float | None = None,
    relevance_ratio: float = 1e-3,
    tol: float = 1e-10,
    max_iter: int = 2000,
) -> RelevanceScan:
    """Repeated fits over {X_k, X_k^2, X_k^3 for all k} plus `n_random`
    random exact-degree-3 monomials, coefficients averaged across repetitions
    (absent counts as zero) before thresholding relevance."""
    from .dictionary import random_column_subset

    X_train = np.asarray(X_train, dtype=float)
    U_train = np.asarray(U_train, dtype=float)
    m, K = X_train.shape
    forced = univariate_monomials(K, 3)
    sums: dict[MultiIndex, float] = {}
    own_sums = np.zeros(4)
    bias_sum = 0.0
    lam_used = lam
    for rep in range(n_repeats):
        subset = random_column_subset(K, forced, n_random, rng, degree=3)
        spec = DictionarySpec(kind="explicit", degree=3, descriptors=tuple(subset))
        model = fit_cs_parameterization(X_train, U_train, spec, bias_mode="raw",
                                        lam=lam_used, tol=tol, max_iter=max_iter)
        if lam_used is None:
            lam_used = model.lam  # CV once, reuse across repetitions
        for k, coefs in enumerate(model.coefficients):
            for desc, value in coefs.items():
                sums[desc] = sums.get(desc, 0.0) + abs(value)
                if desc.is_univariate_in(k):
                    own_sums[desc.degree] += value
        bias_sum += model.bias.mean()
    denom = n_repeats * K
    mean_abs = {d: v / denom for d, v in sums.items()}
    averaged = own_sums / denom
    averaged[0] = bias_sum / n_repeats
    top = max(mean_abs.values(), default=0.0)
    relevant = sorted((d for d, v in mean_abs.items() if v > relevance_ratio * top),
                      key=MultiIndex.sort_key)
    return RelevanceScan(mean_abs=mean_abs, averaged_poly=averaged,
                         relevant=relevant, n_repeats=n_repeats,
                         lam=float(lam_used or 0.0))
