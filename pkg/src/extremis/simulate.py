"""Composition sampling for standard R-Pareto vectors and synthetic fixtures.

A sample is built in three stages: draw a pivot index from the
functional-specific weights (known up to proportionality), draw the
generator vector conditionally on the pivot being the extreme coordinate,
then scale the pivot-normalized angle by an independent unit Pareto radius.
Logistic and negative logistic generators are independent, so the
conditional truncation is exact inverse-CDF sampling; the Huesler-Reiss
family uses coordinatewise Gibbs for the truncated log-Gaussian angle
(approximate, flagged) and is limited to the sum and max functionals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gammafun

from .core import Dataset, derive_rng
from .mgpd import (ExtremalStudent, HuslerReiss, Logistic, MgpdModel,
                   NegLogistic, _hr_sigma_minus_j, exponent_measure_v,
                   pivot_weights)

GIBBS_SWEEPS = 50


@dataclass(frozen=True)
class RiskFunctional:
    """Risk functional (min, max or sum) with positive thresholds."""

    kind: str
    u: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("min", "max", "sum"):
            raise ValueError("kind must be one of min, max, sum")
        u = np.asarray(self.u, dtype=float).ravel()
        if np.any(u <= 0.0):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "u", u)


@dataclass
class CompositionSample:
    """Samples Y = R * omega with pivot indices and radii."""

    samples: np.ndarray
    pivot: np.ndarray
    radius: np.ndarray
    flags: list[str] = field(default_factory=list)


def _frechet_ppf(p, beta, c):
    return c * (-np.log(p)) ** (-1.0 / beta)


def _frechet_cdf(x, beta, c):
    return np.exp(-((x / c) ** (-beta)))


def _weibull_ppf(p, theta, c):
    return c * (-np.log1p(-p)) ** (1.0 / theta)


def _weibull_cdf(x, theta, c):
    return -np.expm1(-((x / c) ** theta))


def _independent_pivot_block(model, j, k, n, rng, direction):
    """Pivot values and truncated companions for iid generator families.

    Pivot draws come from the size-biased marginal, accepted against the
    product of companion tail (or lower-tail) probabilities on the event
    that the pivot is the scaled extreme; companions then follow exact
    truncated inverse-CDF draws.  Returns an (n, D) block of omega = Z/Z_j.
    """
    d = k.size
    if isinstance(model, Logistic):
        beta = model.beta
        c = 1.0 / _gammafun(1.0 - 1.0 / beta)
        size_biased = lambda m: c * rng.gamma(1.0 - 1.0 / beta, size=m) ** (-1.0 / beta)
        cdf = lambda x: _frechet_cdf(x, beta, c)
        ppf = lambda p: _frechet_ppf(p, beta, c)
    else:
        theta = model.theta
        c = 1.0 / _gammafun(1.0 + 1.0 / theta)
        size_biased = lambda m: c * rng.gamma(1.0 + 1.0 / theta, size=m) ** (1.0 / theta)
        cdf = lambda x: _weibull_cdf(x, theta, c)
        ppf = lambda p: _weibull_ppf(p, theta, c)

    others = np.arange(d) != j
    zs = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 256)
        z = size_biased(m)
        if direction == "sum":
            acc = np.ones(m, dtype=bool)
        else:
            logp = np.zeros(m)
            for i in np.flatnonzero(others):
                f = cdf(k[i] * z)
                logp += np.log1p(-f) if direction == "min" else np.log(np.maximum(f, 1e-300))
            acc = rng.random(m) < np.exp(logp)
        take = min(int(acc.sum()), n - filled)
        zs[filled:filled + take] = z[acc][:take]
        filled += take

    omega = np.empty((n, d))
    omega[:, j] = 1.0
    for i in np.flatnonzero(others):
        if direction == "sum":
            zi = ppf(rng.random(n))
        else:
            fa = cdf(k[i] * zs)
            if direction == "min":
                zi = ppf(fa + rng.random(n) * (1.0 - fa))
            else:
                zi = ppf(rng.random(n) * fa)
        omega[:, i] = zi / zs
    return omega


def _hr_pivot_block(model: HuslerReiss, j, k, n, rng, direction, flags):
    """Huesler-Reiss angle block: exact for sum, Gibbs-truncated for max."""
    g = model.gamma
    d = g.shape[0]
    idx = [i for i in range(d) if i != j]
    mean = -g[idx, j]
    cov = _hr_sigma_minus_j(g, j) + 1e-12 * np.eye(d - 1)
    chol = np.linalg.cholesky(cov)
    omega = np.empty((n, d))
    omega[:, j] = 1.0
    if direction == "sum":
        w = mean + rng.standard_normal((n, d - 1)) @ chol.T
    else:
        w = _gibbs_truncated_normal(mean, cov, np.log(k[idx]), n, rng)
        if "hr-gibbs-approximate" not in flags:
            flags.append("hr-gibbs-approximate")
    omega[:, idx] = np.exp(w)
    return omega


def _gibbs_truncated_normal(mean, cov, upper, n, rng):
    """Coordinatewise Gibbs for N(mean, cov) truncated to w <= upper."""
    from scipy.special import ndtr, ndtri
    d = mean.size
    prec = np.linalg.inv(cov)
    cond_sd = 1.0 / np.sqrt(np.diag(prec))
    w = np.minimum(mean, upper - 0.1 * np.abs(upper) - 0.1)
    w = np.tile(w, (n, 1))
    for _ in range(GIBBS_SWEEPS):
        for i in range(d):
            # conditional mean given the other coordinates
            resid = (w - mean) @ prec[:, i] - (w[:, i] - mean[i]) * prec[i, i]
            mu_i = mean[i] - resid / prec[i, i]
            cap = ndtr((upper[i] - mu_i) / cond_sd[i])
            u = rng.random(n) * np.maximum(cap, 1e-300)
            w[:, i] = mu_i + cond_sd[i] * ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))
    return w


def composition_sample(model: MgpdModel, functional: RiskFunctional, n: int,
                       seed: int, weights=None) -> CompositionSample:
    """Composition sampling of standard R-Pareto vectors.

    Draws the pivot index with probability proportional to the
    functional-specific weights, the generator conditionally on the pivot
    being the scaled extreme, and an independent Pareto(1) radius; every
    sample satisfies omega_pivot = 1 and radius >= 1.  ``weights``
    overrides the pivot weights (any positive scaling leaves the law
    unchanged).
    """
    if isinstance(model, ExtremalStudent):
        raise ValueError("extremal Student sampling is not supported")
    if isinstance(model, HuslerReiss) and functional.kind == "min":
        raise ValueError("Huesler-Reiss min-functional sampling is not "
                         "supported (sum and max only)")
    u = functional.u
    d = u.size
    rng = derive_rng(seed)
    flags: list[str] = []
    if weights is None:
        if functional.kind == "sum":
            weights = np.ones(d)
        else:
            weights = pivot_weights(model, u, functional.kind, seed=seed)
    weights = np.asarray(weights, dtype=float)
    if weights.size != d or np.any(weights < 0.0) or weights.sum() <= 0.0:
        raise ValueError("invalid pivot weights")
    pivot = rng.choice(d, size=n, p=weights / weights.sum())
    omega = np.empty((n, d))
    for j in range(d):
        rows = pivot == j
        nj = int(rows.sum())
        if nj == 0:
            continue
        k = u / u[j]
        if isinstance(model, (Logistic, NegLogistic)):
            omega[rows] = _independent_pivot_block(model, j, k, nj, rng,
                                                   functional.kind)
        else:
            omega[rows] = _hr_pivot_block(model, j, k, nj, rng,
                                          functional.kind, flags)
    radius = 1.0 / (1.0 - rng.random(n))
    return CompositionSample(radius[:, None] * omega, pivot, radius, flags)


def simulate_mgpd_dataset(model: MgpdModel, margin, n: int,
                          exceed_fraction: float, seed: int,
                          names=None) -> Dataset:
    """Synthetic dataset embedding max-functional tail samples.

    A fraction ``exceed_fraction`` of rows are composition samples for the
    max functional at unit thresholds, mapped into the margin's tail above
    the quantile level 1 - exceed_fraction/V(1_D); the remaining rows and
    all sub-threshold components are independent sub-threshold noise.  The
    construction keeps every column exactly distributed by the declared
    margin.  Intended as a fitting fixture, not a max-stable simulator.
    """
    if not 0.0 <= exceed_fraction < 1.0:
        raise ValueError("exceed_fraction must be in [0, 1)")
    if isinstance(margin, (list, tuple)):
        margins = list(margin)
    elif isinstance(model, (HuslerReiss, ExtremalStudent)):
        margins = [margin] * model.dim
    else:
        raise ValueError("pass one margin per column (a list) for "
                         "logistic/negative logistic models")
    d = len(margins)
    if isinstance(model, (HuslerReiss, ExtremalStudent)) and d != model.dim:
        raise ValueError("margin count must match the model dimension")
    rng = derive_rng(seed, 1)
    n_exc = int(round(n * exceed_fraction))
    u01 = rng.random((n, d))
    if n_exc > 0:
        v1 = exponent_measure_v(model, np.ones(d))
        q0 = 1.0 - exceed_fraction / v1
        comp = composition_sample(model, RiskFunctional("max", np.ones(d)),
                                  n_exc, seed)
        y = comp.samples
        tail = y >= 1.0
        u01[:n_exc][tail] = 1.0 - (1.0 - q0) / y[tail]
        u01[:n_exc][~tail] = rng.random(int((~tail).sum())) * q0
        u01[n_exc:] *= q0
    perm = rng.permutation(n)
    u01 = np.clip(u01[perm], 1e-15, 1.0 - 1e-15)
    values = np.column_stack([np.asarray(m.quantile(u01[:, j]))
                              for j, m in enumerate(margins)])
    if names is None:
        names = tuple(f"x{j + 1}" for j in range(d))
    return Dataset(values, tuple(names), tuple(margins))


def sample_positive_stable(alpha: float, n: int, rng) -> np.ndarray:
    """Totally skewed positive-stable draws with E exp(-tS) = exp(-t^alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    theta = rng.uniform(0.0, np.pi, n)
    w = rng.exponential(size=n)
    return ((np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha))
            * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))


def sample_logistic_max_stable(alpha: float, n: int, d: int, rng) -> np.ndarray:
    """Unit-Frechet logistic max-stable vectors via the positive-stable frailty."""
    s = sample_positive_stable(alpha, n, rng)
    e = rng.exponential(size=(n, d))
    return (e / s[:, None]) ** (-alpha)


@dataclass
class MixtureShareTable:
    """Per-component share of threshold exceedances at each quantile level."""

    alpha_grid: np.ndarray
    levels: np.ndarray
    counts: np.ndarray  # (n_components, n_levels) exceedance counts
    shares: np.ndarray  # counts normalized per level

    def share_of(self, alpha: float, level: float) -> float:
        i = int(np.argmin(np.abs(self.alpha_grid - alpha)))
        j = int(np.argmin(np.abs(self.levels - level)))
        return float(self.shares[i, j])


def mixture_threshold_experiment(alpha_grid, n_per_component: int, levels,
                                 seed: int, d: int = 8) -> MixtureShareTable:
    """Exceedance shares across an equibalanced logistic max-stable mixture.

    Simulates ``n_per_component`` d-variate logistic max-stable vectors for
    every dependence value in ``alpha_grid`` and counts, per quantile level
    q, how many rows satisfy max_j Y_j > F^{-1}(q) on the unit-Frechet
    scale.  Shares at each level sum to one.
    """
    alpha_grid = np.asarray(alpha_grid, dtype=float).ravel()
    if alpha_grid.size == 0:
        raise ValueError("alpha grid must be non-empty")
    levels = np.asarray(levels, dtype=float).ravel()
    z = -1.0 / np.log(levels)
    counts = np.empty((alpha_grid.size, levels.size), dtype=np.int64)
    for i, alpha in enumerate(alpha_grid):
        rng = derive_rng(seed, i)
        y = sample_logistic_max_stable(alpha, n_per_component, d, rng)
        ymax = y.max(axis=1)
        counts[i] = [(ymax > zq).sum() for zq in z]
    totals = counts.sum(axis=0)
    shares = counts / np.maximum(totals, 1)[None, :]
    return MixtureShareTable(alpha_grid, levels, counts, shares)
