"""Conditional extremes modelling on the Laplace scale.

Given a conditioning component above a high threshold, the remaining
components are represented as alpha * L0 + L0^beta * Z with a residual
vector Z.  The module fits the per-component Gaussian version and the
exchangeable skew-normal pseudo-likelihood version, extracts empirical
residual pools, and estimates joint tail probabilities three ways: forward
simulation, a root-finding/log-sum-exp estimator that stays accurate far
beyond Monte Carlo reach, and the two-level variant for unequal target
levels with permutation averaging.

Positive dependence (alpha >= 0) is assumed by the root-finding estimators;
the simulation estimator has no such restriction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from ._optim import covariance_from_hessian, minimize_nll, numeric_hessian
from .core import MarginSpec, derive_rng

ROOT_CAP = 500.0  # contributions beyond exp(-500) vanish in double precision
KAPPA_CAP = 50.0


@dataclass(frozen=True)
class GaussianDiag:
    """Independent Gaussian residual components."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sg = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if np.any(sg <= 0.0):
            raise ValueError("residual scales must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sg)


@dataclass(frozen=True)
class SkewNormal:
    """Skew-normal residual margin with location, scale and slant."""

    nu: float
    omega: float
    kappa: float

    def __post_init__(self) -> None:
        if self.omega <= 0.0:
            raise ValueError("omega must be positive")


def skewnorm_logpdf(x, nu, omega, kappa):
    z = (np.asarray(x, dtype=float) - nu) / omega
    return (np.log(2.0) - np.log(omega) - 0.5 * z * z
            - 0.5 * np.log(2.0 * np.pi) + log_ndtr(kappa * z))


def skewnorm_sample(n, nu, omega, kappa, rng):
    delta = kappa / np.sqrt(1.0 + kappa * kappa)
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    return nu + omega * (delta * np.abs(u0) + np.sqrt(1.0 - delta * delta) * u1)


@dataclass
class HtParams:
    """Fitted conditional-extremes dependence model.

    ``alpha``/``beta`` are per-companion arrays for the single-conditioner
    Gaussian fit and scalars for the exchangeable fit.  The residual pool
    is variable-aligned: one row per conditioning exceedance with NaN in
    the conditioning variable's slot; ``pool_cond`` records that slot.
    """

    alpha: np.ndarray | float
    beta: np.ndarray | float
    residual_law: GaussianDiag | SkewNormal
    threshold: float
    residual_pool: np.ndarray
    pool_cond: np.ndarray
    cond_index: int | None
    exchangeable: bool
    loglik: float = np.nan
    cov: np.ndarray | None = None
    se: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.residual_pool.shape[1]

    def dependence(self, j: int):
        """(alpha, beta) aligned to the companion columns of conditioner j."""
        d = self.dim
        if self.exchangeable:
            a = np.full(d - 1, float(self.alpha))
            b = np.full(d - 1, float(self.beta))
            return a, b
        if j != self.cond_index:
            raise ValueError("fit conditions on a different variable")
        return (np.asarray(self.alpha, dtype=float),
                np.asarray(self.beta, dtype=float))


def _check_laplace_threshold(u: float) -> None:
    if not u > 0.0:
        raise ValueError("Laplace-scale threshold must be positive")


def ht_residuals(L, j: int, params: HtParams) -> np.ndarray:
    """Empirical residuals (l_k - alpha l_j)/l_j^beta on conditioning exceedances."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    _check_laplace_threshold(params.threshold)
    exc = L[:, j] > params.threshold
    if not exc.any():
        raise ValueError("no conditioning exceedances")
    lj = L[exc, j]
    if np.any(lj <= 0.0):
        raise ValueError("conditioning values must be positive")
    others = np.arange(L.shape[1]) != j
    alpha, beta = params.dependence(j)
    return (L[exc][:, others] - alpha * lj[:, None]) / lj[:, None] ** beta


def _resolve_threshold(col, threshold, threshold_quantile) -> float:
    if (threshold is None) == (threshold_quantile is None):
        raise ValueError("give exactly one of threshold, threshold_quantile")
    if threshold is None:
        threshold = float(np.quantile(col, threshold_quantile))
    _check_laplace_threshold(threshold)
    return float(threshold)


def fit_ht_gaussian(L, j: int, threshold: float | None = None,
                    threshold_quantile: float | None = None) -> HtParams:
    """Per-companion Gaussian pseudo-likelihood fit conditioning on column j.

    Each companion k gets its own (alpha_k, beta_k, mu_k, sigma_k) from the
    working model l_k ~ Normal(alpha l_j + mu l_j^beta, (sigma l_j^beta)^2)
    over conditioning exceedances.  Boundary alpha estimates are flagged.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, d = L.shape
    u = _resolve_threshold(L[:, j], threshold, threshold_quantile)
    exc = L[:, j] > u
    if int(exc.sum()) < 20:
        raise ValueError("need at least 20 conditioning exceedances")
    y0 = L[exc, j]
    others = np.flatnonzero(np.arange(d) != j)
    alphas = np.empty(d - 1)
    betas = np.empty(d - 1)
    mus = np.empty(d - 1)
    sigmas = np.empty(d - 1)
    ses = np.empty((d - 1, 4))
    flags: list[str] = []
    loglik = 0.0
    log_y0 = np.log(y0)
    for c, k in enumerate(others):
        y = L[exc, k]
        slope = float(np.clip(np.cov(y0, y)[0, 1] / max(np.var(y0), 1e-12),
                              -0.9, 0.9))
        start = np.array([slope, 0.2, 0.0, max(float(np.std(y)), 1e-3)])

        def nll(t):
            a, b, mu, sg = t
            if not (-1.0 <= a <= 1.0 and b <= 1.0 and sg > 0.0):
                return np.inf
            scale = y0 ** b
            z = (y - a * y0 - mu * scale) / (sg * scale)
            return float(np.sum(np.log(sg) + b * log_y0 + 0.5 * z * z
                                + 0.5 * np.log(2.0 * np.pi)))

        t, val, ok = minimize_nll(nll, start,
                                  bounds=[(-1.0, 1.0), (-5.0, 1.0),
                                          (None, None), (1e-8, None)])
        if not ok:
            raise RuntimeError(f"conditional fit for companion {k} did not converge")
        alphas[c], betas[c], mus[c], sigmas[c] = t
        loglik -= val
        if abs(abs(t[0]) - 1.0) < 1e-6:
            flags.append(f"alpha-boundary:{k}")
        hess = numeric_hessian(nll, t)
        cov = covariance_from_hessian(hess, flags)
        ses[c] = np.sqrt(np.diag(cov)) if cov is not None else np.nan

    pool = np.full((int(exc.sum()), d), np.nan)
    resid = (L[exc][:, others] - alphas * y0[:, None]) / y0[:, None] ** betas
    pool[:, others] = resid
    return HtParams(alphas, betas, GaussianDiag(mus, sigmas), u, pool,
                    np.full(pool.shape[0], j, dtype=int), j, False,
                    loglik, None, ses, flags)


def _pooled_pairs(L, u):
    """Stacked (conditioner value, companion value, row, conditioner) tuples."""
    n, d = L.shape
    y0_list, y_list, cond_list = [], [], []
    for j in range(d):
        exc = L[:, j] > u
        if not exc.any():
            continue
        y0 = L[exc, j]
        for k in range(d):
            if k == j:
                continue
            y0_list.append(y0)
            y_list.append(L[exc, k])
            cond_list.append(np.full(y0.size, j, dtype=int))
    if not y0_list:
        raise ValueError("no conditioning exceedances")
    return (np.concatenate(y0_list), np.concatenate(y_list),
            np.concatenate(cond_list))


def _fit_exchangeable(L, u, resid_logpdf, start, bounds, flags_extra):
    """Shared driver for the exchangeable pseudo-likelihood fits."""
    y0, y, _ = _pooled_pairs(L, u)
    log_y0 = np.log(y0)

    def nll(t):
        a, b = t[0], t[1]
        if not (-1.0 <= a <= 1.0 and b <= 1.0):
            return np.inf
        scale = y0 ** b
        val = resid_logpdf((y - a * y0) / scale, t[2:])
        if val is None:
            return np.inf
        return float(-np.sum(val - b * log_y0))

    t, val, ok = minimize_nll(nll, start, bounds=bounds)
    if not ok:
        raise RuntimeError("exchangeable conditional fit did not converge")
    flags = list(flags_extra)
    if abs(abs(t[0]) - 1.0) < 1e-6:
        flags.append("alpha-boundary")
    hess = numeric_hessian(nll, t)
    cov = covariance_from_hessian(hess, flags)
    se = np.sqrt(np.diag(cov)) if cov is not None else None
    return t, -val, cov, se, flags


def _exchangeable_pool(L, u, alpha, beta):
    n, d = L.shape
    pools, conds = [], []
    for j in range(d):
        exc = L[:, j] > u
        if not exc.any():
            continue
        y0 = L[exc, j]
        others = np.arange(d) != j
        block = np.full((y0.size, d), np.nan)
        block[:, others] = (L[exc][:, others] - alpha * y0[:, None]) / y0[:, None] ** beta
        pools.append(block)
        conds.append(np.full(y0.size, j, dtype=int))
    return np.vstack(pools), np.concatenate(conds)


def fit_ht_exchangeable_skewnormal(L, threshold: float | None = None,
                                   threshold_quantile: float | None = None,
                                   fix_kappa: float | None = None) -> HtParams:
    """Exchangeable skew-normal pseudo-likelihood over all conditionings.

    Maximizes the triple sum over conditioning variables, exceedances and
    companions of the skew-normal density with location alpha y0 + mu
    y0^beta and scale sigma y0^beta, under shared parameters (alpha, beta,
    mu, sigma, kappa).  Pooling residuals over conditioners enlarges the
    empirical pool roughly m-fold.  The slant is capped at |kappa| = 50.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, d = L.shape
    if d < 2:
        raise ValueError("cluster size must be at least 2")
    u = _resolve_threshold(L.ravel(), threshold, threshold_quantile)
    if int(np.sum(L > u)) < 50:
        raise ValueError("need at least 50 pooled conditioning exceedances")

    if fix_kappa is None:
        def resid_logpdf(z, extra):
            mu, sg, ka = extra
            if sg <= 0.0 or abs(ka) > KAPPA_CAP:
                return None
            return skewnorm_logpdf(z, mu, sg, ka)
        start = np.array([0.3, 0.2, 0.0, 1.0, 0.5])
        bounds = [(-1.0, 1.0), (-5.0, 1.0), (None, None), (1e-8, None),
                  (-KAPPA_CAP, KAPPA_CAP)]
    else:
        ka_fixed = float(fix_kappa)

        def resid_logpdf(z, extra):
            mu, sg = extra
            if sg <= 0.0:
                return None
            return skewnorm_logpdf(z, mu, sg, ka_fixed)
        start = np.array([0.3, 0.2, 0.0, 1.0])
        bounds = [(-1.0, 1.0), (-5.0, 1.0), (None, None), (1e-8, None)]

    t, loglik, cov, se, flags = _fit_exchangeable(L, u, resid_logpdf, start,
                                                  bounds, [])
    if fix_kappa is None and abs(t[4]) >= KAPPA_CAP - 1e-6:
        flags.append("kappa-capped")
    kappa = float(t[4]) if fix_kappa is None else float(fix_kappa)
    law = SkewNormal(float(t[2]), float(t[3]), kappa)
    pool, conds = _exchangeable_pool(L, u, float(t[0]), float(t[1]))
    return HtParams(float(t[0]), float(t[1]), law, u, pool, conds, None,
                    True, loglik, cov, se, flags)


def fit_ht_exchangeable_gaussian(L, threshold: float | None = None,
                                 threshold_quantile: float | None = None) -> HtParams:
    """Exchangeable fit with Gaussian residual margins (zero-slant reference)."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] < 2:
        raise ValueError("cluster size must be at least 2")
    u = _resolve_threshold(L.ravel(), threshold, threshold_quantile)
    if int(np.sum(L > u)) < 50:
        raise ValueError("need at least 50 pooled conditioning exceedances")

    def resid_logpdf(z, extra):
        mu, sg = extra
        if sg <= 0.0:
            return None
        zz = (z - mu) / sg
        return -np.log(sg) - 0.5 * zz * zz - 0.5 * np.log(2.0 * np.pi)

    t, loglik, cov, se, flags = _fit_exchangeable(
        L, u, resid_logpdf, np.array([0.3, 0.2, 0.0, 1.0]),
        [(-1.0, 1.0), (-5.0, 1.0), (None, None), (1e-8, None)], [])
    law = GaussianDiag(np.array([t[2]]), np.array([t[3]]))
    pool, conds = _exchangeable_pool(L, u, float(t[0]), float(t[1]))
    return HtParams(float(t[0]), float(t[1]), law, u, pool, conds, None,
                    True, loglik, cov, se, flags)


def _root_v_vector(zmin, alpha: float, beta: float, v: float,
                   iters: int = 64) -> np.ndarray:
    """Smallest y >= v with alpha y + y^beta z >= v, +inf when unreachable.

    g is increasing or convex in y for every (alpha in [0,1], beta <= 1, z)
    case, so the first crossing is the boundary of {g >= v} and bisection
    on [v, v + 500] is exact to the iteration tolerance.
    """
    if alpha < 0.0:
        raise ValueError("root-finding estimator requires alpha >= 0")
    zmin = np.asarray(zmin, dtype=float)
    cap = v + ROOT_CAP
    out = np.full(zmin.shape, np.inf)
    at_v = alpha * v + v ** beta * zmin >= v
    out[at_v] = v
    lo = np.full(zmin.shape, v)
    hi = np.full(zmin.shape, cap)
    active = ~at_v & (alpha * cap + cap ** beta * zmin >= v)
    if active.any():
        lo_a, hi_a = lo[active], hi[active]
        z_a = zmin[active]
        for _ in range(iters):
            mid = 0.5 * (lo_a + hi_a)
            ge = alpha * mid + mid ** beta * z_a >= v
            hi_a = np.where(ge, mid, hi_a)
            lo_a = np.where(ge, lo_a, mid)
        out[active] = hi_a
    return out


def _shared_dependence(params: HtParams) -> tuple[float, float]:
    if params.exchangeable:
        return float(params.alpha), float(params.beta)
    a = np.atleast_1d(np.asarray(params.alpha, dtype=float))
    b = np.atleast_1d(np.asarray(params.beta, dtype=float))
    if np.ptp(a) > 1e-12 or np.ptp(b) > 1e-12:
        raise ValueError("estimator needs shared alpha, beta across "
                         "companions; use the exchangeable fit")
    return float(a[0]), float(b[0])


def ht_root_v(z: float, params: HtParams, v: float) -> float:
    """Scalar root level: smallest y >= v with alpha y + y^beta z >= v."""
    a, b = _shared_dependence(params)
    if v <= 0.0:
        raise ValueError("v must be positive")
    return float(_root_v_vector(np.array([z]), a, b, v)[0])


@dataclass
class HtProbability:
    log_prob: float
    n_used: int
    n_unreachable: int
    flags: list[str] = field(default_factory=list)

    @property
    def prob(self) -> float:
        return float(np.exp(self.log_prob))


def _log_tail(margin: MarginSpec, v: float) -> float:
    if margin.kind == "laplace" and v > 0.0:
        return float(-v - np.log(2.0))
    return float(np.log(max(1.0 - float(margin.cdf(v)), 1e-300)))


def ht_prob_analytic(params: HtParams, v: float,
                     margin: MarginSpec | None = None,
                     paper_literal: bool = False) -> HtProbability:
    """Joint upper-tail probability via root finding and log-sum-exp.

    For each pooled residual row the minimum component determines the level
    the conditioner must exceed; averaging exp(-(level - v)) and scaling by
    the conditioning margin's exact tail P(Y0 > v) gives the estimate, all
    in log space.  ``paper_literal`` instead folds the tail factor into the
    exponent as exp(-level), the convention that treats exp(-v) P(Y0 > v)^-1
    as one (exact on exponential margins; on Laplace margins it differs by
    the factor 1/2).
    """
    alpha, beta = _shared_dependence(params)
    if alpha < 0.0:
        raise ValueError("analytic estimator requires alpha >= 0")
    if v <= params.threshold:
        raise ValueError("v must sit above the fitting threshold")
    margin = margin or MarginSpec("laplace")
    zmin = np.nanmin(params.residual_pool, axis=1)
    roots = _root_v_vector(zmin, alpha, beta, v)
    finite = np.isfinite(roots)
    n_unreach = int((~finite).sum())
    flags = []
    if not finite.any():
        return HtProbability(-np.inf, 0, n_unreach, ["all-contributions-zero"])
    if paper_literal:
        log_p = float(logsumexp(-roots[finite]) - np.log(roots.size))
    else:
        log_p = float(_log_tail(margin, v)
                      + logsumexp(-(roots[finite] - v)) - np.log(roots.size))
    return HtProbability(log_p, int(finite.sum()), n_unreach, flags)


def ht_prob_simulation(params: HtParams, lower, upper, v: float, N: int,
                       seed: int, cond: int | None = None,
                       margin: MarginSpec | None = None,
                       pool_rows: str = "cond"):
    """Forward-simulation estimate of P(Y in region, Y_cond > v).

    Simulates the conditioner exponentially above v, draws residual rows
    with replacement from the empirical pool, reconstructs companions, and
    multiplies the hit rate by the conditioning margin's tail.  Region
    bounds are per-variable on the Laplace scale (use +-inf for
    unconstrained sides); bounds on the conditioner apply on top of the
    exceedance event.  With ``pool_rows="all"`` an exchangeable fit draws
    from the whole pooled residual set (valid only when the companion
    bounds are symmetric, since residual slots lose variable identity).
    Returns (probability, standard error, flags).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    d = params.dim
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (d,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (d,)).copy()
    cond = params.cond_index if cond is None else cond
    if cond is None:
        cond = 0
    margin = margin or MarginSpec("laplace")
    rng = derive_rng(seed)
    others = np.flatnonzero(np.arange(d) != cond)
    if pool_rows == "all":
        if not params.exchangeable:
            raise ValueError("pool_rows='all' needs an exchangeable fit")
        sym = (np.all(lower[others] == lower[others][0])
               and np.all(upper[others] == upper[others][0]))
        if not sym:
            raise ValueError("pool_rows='all' needs symmetric companion bounds")
        mask = ~np.isnan(params.residual_pool)
        zpool = params.residual_pool[mask].reshape(params.residual_pool.shape[0], d - 1)
    elif pool_rows == "cond":
        rows_ok = np.flatnonzero(params.pool_cond == cond)
        if rows_ok.size == 0:
            raise ValueError(f"no pooled residuals condition on variable {cond}")
        zpool = params.residual_pool[rows_ok][:, others]
    else:
        raise ValueError("pool_rows must be 'cond' or 'all'")
    alpha, beta = params.dependence(cond)
    hits = 0
    done = 0
    batch = min(N, 1_000_000)
    while done < N:
        m = min(batch, N - done)
        y0 = v + rng.exponential(size=m)
        z = zpool[rng.integers(0, zpool.shape[0], size=m)]
        y = alpha * y0[:, None] + y0[:, None] ** beta * z
        ok = (y0 >= lower[cond]) & (y0 <= upper[cond])
        ok &= np.all((y >= lower[others]) & (y <= upper[others]), axis=1)
        hits += int(ok.sum())
        done += m
    p_hit = hits / N
    tail = np.exp(_log_tail(margin, v))
    prob = tail * p_hit
    se = tail * math.sqrt(max(p_hit * (1.0 - p_hit), 0.0) / N)
    flags = []
    if hits == 0:
        flags.append("zero-hits")
        se = tail * (1.0 - (0.05) ** (1.0 / N))  # one-sided 95% bound scale
    return prob, se, flags


def _group_root(block: np.ndarray, member: np.ndarray, alpha: float,
                beta: float, level: float) -> np.ndarray:
    """Root levels for the row-wise minimum over one group's residuals.

    Rows with no residual in the group (the conditioner's own slot is NaN)
    impose no constraint beyond the conditioner exceeding ``level``.
    """
    sel = np.where(member[None, :], block, np.nan)
    has = np.any(~np.isnan(sel), axis=1)
    out = np.full(block.shape[0], level)
    if has.any():
        zmin = np.nanmin(sel[has], axis=1)
        out[has] = _root_v_vector(zmin, alpha, beta, level)
    return out


def ht_prob_two_level(params: HtParams, groups, s1: float, s2: float,
                      exchangeable: bool = True,
                      margin: MarginSpec | None = None,
                      paper_literal: bool = False, seed: int = 0,
                      max_assignments: int = 1_000_000) -> HtProbability:
    """Unequal-level joint tail probability with permutation averaging.

    Variables in the first group must exceed s1, those in the second s2
    (s1 >= s2).  Per residual row the group-wise minima give two root
    levels whose maximum is the level the conditioner must exceed.  Under
    exchangeability the probability is averaged over every assignment of
    the second-group labels (rows whose conditioner falls in the second
    group are left out of that assignment).
    """
    if s1 < s2:
        raise ValueError("s1 must be at least s2")
    if not params.exchangeable:
        raise ValueError("two-level estimator expects an exchangeable fit")
    if s1 == s2:
        # equal levels merge the groups: the one-level estimator over the
        # full pool is the exact reduction
        return ht_prob_analytic(params, s1, margin, paper_literal)
    g1_probe, _ = (np.asarray(sorted(g), dtype=int) for g in groups)
    if g1_probe.size == 0:
        # no variable carries the higher level: one-level event at s2
        return ht_prob_analytic(params, s2, margin, paper_literal)
    alpha, beta = float(params.alpha), float(params.beta)
    if alpha < 0.0:
        raise ValueError("analytic estimator requires alpha >= 0")
    if s1 <= params.threshold:
        raise ValueError("s1 must sit above the fitting threshold")
    margin = margin or MarginSpec("laplace")
    d = params.dim
    g1, g2 = (np.asarray(sorted(g), dtype=int) for g in groups)
    if sorted(np.concatenate([g1, g2]).tolist()) != list(range(d)):
        raise ValueError("groups must partition the cluster variables")
    m2 = g2.size
    flags: list[str] = []
    if not exchangeable or m2 in (0, d):
        assignments = [g2]
    else:
        n_comb = math.comb(d, m2)
        if n_comb <= max_assignments:
            from itertools import combinations
            assignments = [np.asarray(c, dtype=int)
                           for c in combinations(range(d), m2)]
        else:
            rng = derive_rng(seed)
            assignments = [np.sort(rng.choice(d, size=m2, replace=False))
                           for _ in range(max_assignments)]
            flags.append("assignment-subsample")

    pool = params.residual_pool
    log_probs = []
    for cols2 in assignments:
        in2 = np.zeros(d, dtype=bool)
        in2[cols2] = True
        rows = ~in2[params.pool_cond]
        if not rows.any():
            continue
        block = pool[rows]
        v1 = _group_root(block, ~in2, alpha, beta, s1)
        v2 = _group_root(block, in2, alpha, beta, s2) if m2 > 0 else np.full(
            block.shape[0], s2)
        level = np.maximum(np.maximum(v1, v2), s1)
        finite = np.isfinite(level)
        if not finite.any():
            log_probs.append(-np.inf)
            continue
        if paper_literal:
            log_probs.append(float(logsumexp(-level[finite]) - np.log(level.size)))
        else:
            log_probs.append(float(_log_tail(margin, s1)
                                   + logsumexp(-(level[finite] - s1))
                                   - np.log(level.size)))
    if not log_probs:
        return HtProbability(-np.inf, 0, 0, flags + ["all-contributions-zero"])
    log_prob = float(logsumexp(np.asarray(log_probs)) - np.log(len(log_probs)))
    flags2 = flags + (["all-contributions-zero"] if np.isneginf(log_prob) else [])
    return HtProbability(log_prob, len(log_probs), 0, flags2)


def ht_model_chi(params: HtParams, k: int, level: float, N: int = 1_000_000,
                 seed: int = 0) -> float:
    """Model-implied k-variate tail correlation by forward simulation.

    Simulates the parametric residual law (k-1 iid companion components),
    reconstructs companions above the Laplace v = quantile(level), and
    returns P(all k above v)/(1 - level).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    lap = MarginSpec("laplace")
    v = float(lap.quantile(level))
    rng = derive_rng(seed)
    y0 = v + rng.exponential(size=N)
    law = params.residual_law
    if isinstance(law, SkewNormal):
        z = skewnorm_sample((N, k - 1), law.nu, law.omega, law.kappa, rng)
    else:
        mu = float(np.mean(law.mu))
        sg = float(np.mean(law.sigma))
        z = mu + sg * rng.standard_normal((N, k - 1))
    alpha = float(params.alpha) if params.exchangeable else float(np.mean(params.alpha))
    beta = float(params.beta) if params.exchangeable else float(np.mean(params.beta))
    y = alpha * y0[:, None] + y0[:, None] ** beta * z
    p_joint = float(np.mean(np.all(y > v, axis=1))) * np.exp(_log_tail(lap, v))
    return p_joint / (1.0 - level)
