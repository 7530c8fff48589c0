"""Shared test oracles: generator-draw Monte Carlo for the tail measures,
an energy two-sample statistic, and small simulation utilities."""
from __future__ import annotations

import numpy as np
from scipy.special import gamma as gammafun

from extremis.core import derive_rng
from extremis.mgpd import ExtremalStudent, HuslerReiss, Logistic, NegLogistic


def generator_draws(model, d: int, n: int, rng) -> np.ndarray:
    """Draws of the family's generator vector (each margin has unit mean)."""
    if isinstance(model, Logistic):
        c = 1.0 / gammafun(1.0 - 1.0 / model.beta)
        return c * rng.exponential(size=(n, d)) ** (-1.0 / model.beta)
    if isinstance(model, NegLogistic):
        c = 1.0 / gammafun(1.0 + 1.0 / model.theta)
        return c * rng.exponential(size=(n, d)) ** (1.0 / model.theta)
    if isinstance(model, HuslerReiss):
        g = model.gamma
        anchor = d - 1
        cov = np.empty((d, d))
        for i in range(d):
            for k in range(d):
                cov[i, k] = g[i, anchor] + g[k, anchor] - g[i, k]
        chol = np.linalg.cholesky(cov + 1e-12 * np.eye(d))
        z = rng.standard_normal((n, d)) @ chol.T
        return np.exp(z - 0.5 * np.diag(cov))
    if isinstance(model, ExtremalStudent):
        nu = model.nu
        c = np.sqrt(np.pi) * 2.0 ** (-(nu - 2.0) / 2.0) / gammafun((nu + 1.0) / 2.0)
        chol = np.linalg.cholesky(model.sigma + 1e-12 * np.eye(d))
        z = rng.standard_normal((n, d)) @ chol.T
        return c * np.maximum(z, 0.0) ** nu
    raise TypeError(type(model).__name__)


def mc_intensity(model, u, n: int, seed: int, kind: str = "min",
                 batch: int = 2_000_000):
    """Monte Carlo estimate of Xi(u) (kind='min') or V(u) (kind='max').

    Averages min_j Y_j/u_j (or max) over generator draws; returns the
    estimate and its standard error.
    """
    u = np.asarray(u, dtype=float)
    rng = derive_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        y = generator_draws(model, u.size, m, rng)
        v = (y / u).min(axis=1) if kind == "min" else (y / u).max(axis=1)
        total += float(v.sum())
        total_sq += float((v * v).sum())
        done += m
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, np.sqrt(var / n)


def energy_two_sample_pvalue(x, y, n_perm: int, rng) -> float:
    """Permutation p-value of the Szekely-Rizzo energy two-sample statistic."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.vstack([x, y])
    n, m = x.shape[0], y.shape[0]
    dist = np.sqrt(np.maximum(
        ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2), 0.0))

    def stat(idx_x, idx_y):
        dxy = dist[np.ix_(idx_x, idx_y)].mean()
        dxx = dist[np.ix_(idx_x, idx_x)].mean()
        dyy = dist[np.ix_(idx_y, idx_y)].mean()
        return 2.0 * dxy - dxx - dyy

    labels = np.arange(n + m)
    observed = stat(labels[:n], labels[n:])
    hits = 1
    for _ in range(n_perm):
        perm = rng.permutation(n + m)
        if stat(perm[:n], perm[n:]) >= observed:
            hits += 1
    return hits / (n_perm + 1)
