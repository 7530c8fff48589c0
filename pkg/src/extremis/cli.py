"""Command-line front end.

Every command echoes a JSON document with a ``result`` payload and a
``manifest`` recording the seed, flags, input hashes and library versions,
so any stochastic run can be replayed exactly.  Outputs are written
atomically (temp file then rename).  Exit codes: 0 success, 1 computation
failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, condex, mgpd, simulate, taildep, univariate, validate
from .core import (ClampCounter, Dataset, MarginSpec, derive_rng,
                   load_dataset, transform_margin)
from .mvnt import OrthantQuery, mvn_rect, mvt_rect


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _manifest(args, inputs) -> dict:
    import scipy
    return {
        "command": args.command,
        "flags": {k: _sanitize(v) for k, v in sorted(vars(args).items())
                  if k not in ("func",)},
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "versions": {"extremis": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }


def _emit(args, result: dict, inputs=()) -> None:
    doc = {"result": _sanitize(result), "manifest": _manifest(args, inputs)}
    if getattr(args, "format", "json") == "csv" and "table" in result:
        payload = _to_csv(result["table"])
    else:
        payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    out = getattr(args, "out", None)
    if out:
        directory = os.path.dirname(os.path.abspath(out)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, out)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    else:
        sys.stdout.write(payload)


def _to_csv(table: dict) -> str:
    cols = list(table.keys())
    rows = zip(*[table[c] for c in cols])
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating))
                              else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _parse_margins(spec: str, names) -> list:
    """Margin declarations: one kind for all columns, a comma list, or
    name=kind pairs."""
    if spec is None:
        return ["empirical"] * len(names)
    if "=" in spec:
        out = ["empirical"] * len(names)
        for item in spec.split(","):
            name, kind = item.split("=", 1)
            if name.strip() not in names:
                raise SystemExit(2)
            out[names.index(name.strip())] = kind.strip()
        return out
    kinds = [s.strip() for s in spec.split(",")]
    if len(kinds) == 1:
        return kinds * len(names)
    if len(kinds) != len(names):
        raise ValueError("margin list must match the column count")
    return kinds


def _load(args) -> Dataset:
    from .core import read_csv
    names, _ = read_csv(args.input)
    margins = _parse_margins(getattr(args, "margins", None), list(names))
    return load_dataset(args.input, margins)


def _columns(spec: str | None, names) -> tuple[int, ...]:
    if not spec:
        return ()
    out = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if item not in names:
            raise ValueError(f"unknown column {item!r}")
        out.append(names.index(item))
    return tuple(out)


def _dependence_model(family: str, args) -> mgpd.MgpdModel:
    if family == "logistic":
        return mgpd.Logistic(args.beta)
    if family == "neglogistic":
        return mgpd.NegLogistic(args.theta)
    if family == "hr":
        d = args.dim
        g = args.gamma * (np.ones((d, d)) - np.eye(d))
        return mgpd.HuslerReiss(g)
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------- commands


def cmd_fit_gpd(args) -> dict:
    ds = _load(args)
    names = list(ds.names)
    y = ds.column(args.response)
    resp = names.index(args.response)
    cov_cols = [i for i in range(ds.dim) if i != resp]
    X = ds.values[:, cov_cols]
    cov_names = [names[i] for i in cov_cols]
    u = np.full(y.size, np.quantile(y, args.threshold_quantile))
    spec = univariate.RegressionSpec(
        _columns(args.sigma_covariates, cov_names),
        _columns(args.xi_covariates, cov_names),
        tuple(cov_names))
    fit = univariate.fit_gpd_regression(X, y, u, spec)
    return {
        "threshold": float(u[0]),
        "zeta_u": univariate.exceedance_fraction(y, u),
        "coefficients": {"log_sigma": fit.beta_sigma, "xi": fit.beta_xi},
        "design_columns": fit.design_columns,
        "covariance": fit.cov,
        "loglik": fit.loglik,
        "n_exceed": fit.n_exceed,
        "flags": fit.flags,
    }


def cmd_fit_threshold(args) -> dict:
    ds = _load(args)
    names = list(ds.names)
    y = ds.column(args.response)
    resp = names.index(args.response)
    cov_cols = [i for i in range(ds.dim) if i != resp]
    cov_names = [names[i] for i in cov_cols]
    keep = _columns(args.covariates, cov_names) if args.covariates else tuple(range(len(cov_cols)))
    X = ds.values[:, [cov_cols[i] for i in keep]]
    fit = univariate.fit_ald(X, y, args.tau)
    return {
        "tau": fit.tau,
        "coefficients": fit.beta_eta,
        "columns": ["intercept"] + [cov_names[i] for i in keep],
        "nu": fit.nu,
        "covariance": fit.cov,
        "loglik": fit.loglik,
        "below_fraction": float(np.mean(y <= fit.predict(X))),
    }


def cmd_return_level(args) -> dict:
    ds = _load(args)
    y = ds.column(args.response)
    u = float(np.quantile(y, args.threshold_quantile))
    exc = y[y > u] - u
    fit = univariate.fit_gpd_mle(exc)
    zeta = float(np.mean(y > u))
    model = univariate.BinGpdModel(u, zeta, fit.params)
    level = univariate.return_level_closed(model, args.T, args.ny)
    ci = univariate.profile_return_level_ci(exc, zeta, args.T, args.ny,
                                            level=args.profile_level, u=u)
    return {
        "threshold": u, "zeta_u": zeta,
        "sigma": fit.params.sigma, "xi": fit.params.xi,
        "return_level": level,
        "profile_interval": {"lower": ci.lower, "upper": ci.upper,
                             "level": ci.level, "flags": ci.flags},
        "T": args.T, "ny": args.ny,
    }


def _parse_model_specs(spec: str, names) -> list[univariate.RegressionSpec]:
    if spec.startswith("preset:"):
        season, regime = (s.strip() for s in spec[7:].split(","))
        return univariate.preset_model_specs(names, season, regime)
    out = []
    for chunk in spec.split(";"):
        sigma, xi = (), ()
        for part in chunk.split("&"):
            part = part.strip()
            if part.startswith("sigma:"):
                sigma = _columns(part[6:], names)
            elif part.startswith("xi:"):
                xi = _columns(part[3:], names)
            elif part:
                raise ValueError(f"bad model spec fragment {part!r}")
        out.append(univariate.RegressionSpec(sigma, xi, tuple(names)))
    return out


def cmd_cv_score(args) -> dict:
    ds = _load(args)
    names = list(ds.names)
    y = ds.column(args.response)
    resp = names.index(args.response)
    cov_cols = [i for i in range(ds.dim) if i != resp]
    cov_names = [names[i] for i in cov_cols]
    X = ds.values[:, cov_cols]
    u = np.full(y.size, np.quantile(y, args.threshold_quantile))
    specs = _parse_model_specs(args.models, cov_names)
    out = univariate.cv_interval_score(X, y, u, specs, alpha=args.alpha,
                                       repeats=args.repeats, seed=args.seed,
                                       n_draws=args.n_draws)
    return {"models": [{
        "spec": {"sigma": s.spec.label(s.spec.sigma_columns),
                 "xi": s.spec.label(s.spec.xi_columns)},
        "scores": s.scores, "coverages": s.coverages,
        "mean_score": s.mean_score, "mean_coverage": s.mean_coverage,
        "n_excluded": s.n_excluded, "n_dropped_repeats": s.n_dropped_repeats,
    } for s in out]}


def cmd_loss_min(args) -> dict:
    from .core import read_csv
    names, values = read_csv(args.input)
    col = names.index(args.column) if args.column else 0
    q = values[:, col]
    weights = None
    if args.bootstrap:
        weights = univariate.bootstrap_weights(q.size, args.bootstrap, args.seed)
    qhat = univariate.minimize_expected_loss(q, weights)
    return {"minimizer": qhat,
            "expected_loss": univariate.expected_loss(q, qhat, weights),
            "n_samples": int(q.size), "bootstrap": args.bootstrap}


def cmd_taildep(args) -> dict:
    ds = _load(args)
    clamp = ClampCounter()
    U = ds.to_uniform(clamp)
    levels = [float(v) for v in args.levels.split(",")]
    rows = taildep.taildep_profile(U, levels)
    table = {
        "level": [r.level for r in rows],
        "chi": [r.chi for r in rows],
        "chi_se": [float(np.sqrt(r.chi_var)) for r in rows],
        "eta": [r.eta for r in rows],
        "eta_se": [r.eta_se for r in rows],
        "n_exceed": [r.n_exceed for r in rows],
    }
    return {"table": table, "clamped": clamp.count}


def _fit_condex(args, ds: Dataset):
    L = ds.to_margin(MarginSpec("laplace"))
    if args.gaussian:
        return condex.fit_ht_exchangeable_gaussian(
            L, threshold_quantile=args.threshold_quantile)
    return condex.fit_ht_exchangeable_skewnormal(
        L, threshold_quantile=args.threshold_quantile)


def _condex_fit_payload(fit) -> dict:
    law = fit.residual_law
    law_doc = ({"kind": "skewnormal", "nu": law.nu, "omega": law.omega,
                "kappa": law.kappa}
               if isinstance(law, condex.SkewNormal)
               else {"kind": "gaussian", "mu": law.mu, "sigma": law.sigma})
    return {"alpha": fit.alpha, "beta": fit.beta, "threshold": fit.threshold,
            "residual_law": law_doc, "pool_size": int(fit.residual_pool.shape[0]),
            "se": fit.se, "loglik": fit.loglik, "flags": fit.flags}


def cmd_condex_fit(args) -> dict:
    ds = _load(args)
    return _condex_fit_payload(_fit_condex(args, ds))


def cmd_condex_prob(args) -> dict:
    ds = _load(args)
    fit = _fit_condex(args, ds)
    v = float(MarginSpec("laplace").quantile(args.level)) if args.level_is_quantile else args.level
    ana = condex.ht_prob_analytic(fit, v, paper_literal=args.paper_literal)
    d = fit.dim
    sim_p, sim_se, sim_flags = condex.ht_prob_simulation(
        fit, np.full(d, v), np.full(d, np.inf), v, args.n_sim, args.seed,
        cond=0, pool_rows="all")
    return {"fit": _condex_fit_payload(fit), "level": v,
            "log_prob_analytic": ana.log_prob,
            "prob_analytic": ana.prob,
            "prob_simulation": sim_p, "se_simulation": sim_se,
            "n_unreachable": ana.n_unreachable,
            "flags": ana.flags + sim_flags}


def cmd_condex_prob2(args) -> dict:
    ds = _load(args)
    fit = _fit_condex(args, ds)
    groups = _parse_groups(args.groups, ds.dim)
    lap = MarginSpec("laplace")
    s1 = float(lap.quantile(args.s1)) if args.level_is_quantile else args.s1
    s2 = float(lap.quantile(args.s2)) if args.level_is_quantile else args.s2
    out = condex.ht_prob_two_level(fit, groups, s1, s2,
                                   exchangeable=not args.no_permute,
                                   paper_literal=args.paper_literal,
                                   seed=args.seed)
    return {"fit": _condex_fit_payload(fit), "s1": s1, "s2": s2,
            "log_prob": out.log_prob, "prob": out.prob,
            "n_assignments": out.n_used, "flags": out.flags}


def _parse_groups(spec: str, d: int):
    parts = spec.split("|")
    if len(parts) != 2:
        raise ValueError("groups must be 'i,j,...|k,l,...'")
    g1 = [int(v) for v in parts[0].split(",") if v.strip() != ""]
    g2 = [int(v) for v in parts[1].split(",") if v.strip() != ""]
    return g1, g2


def cmd_mgpd_fit(args) -> dict:
    ds = _load(args)
    fre = ds.to_margin(MarginSpec("frechet"))
    u = np.quantile(fre, args.threshold_quantile, axis=0)
    censor = np.quantile(fre, args.censor_quantile, axis=0)
    if args.family == "logistic":
        fit = mgpd.fit_logistic_censored(fre, u, censor)
        chi = mgpd.model_chi(mgpd.Logistic(fit.estimate), ds.dim)
    elif args.family == "hr":
        fit = mgpd.fit_hr_exchangeable(fre, u, censor)
        g = fit.estimate * (np.ones((ds.dim, ds.dim)) - np.eye(ds.dim))
        chi = mgpd.model_chi(mgpd.HuslerReiss(g), ds.dim)
    else:
        raise ValueError("family must be logistic or hr")
    return {"family": args.family, "estimate": fit.estimate, "se": fit.se,
            "model_chi": chi, "loglik": fit.loglik, "n_rows": fit.n_rows,
            "n_dropped": fit.n_dropped, "flags": fit.flags}


def cmd_mgpd_prob(args) -> dict:
    ds = _load(args)
    fre = ds.to_margin(MarginSpec("frechet"))
    u = np.quantile(fre, args.threshold_quantile, axis=0)
    if args.level_quantile is not None:
        s = np.full(ds.dim, float(MarginSpec("frechet").quantile(args.level_quantile)))
    else:
        s = np.full(ds.dim, args.level)
    s = np.maximum(s, u)
    if args.family == "logistic":
        fit = mgpd.fit_logistic_censored(fre, u, u)
        model = mgpd.Logistic(fit.estimate)
    else:
        fit = mgpd.fit_hr_exchangeable(fre, u, u)
        model = mgpd.HuslerReiss(fit.estimate * (np.ones((ds.dim, ds.dim)) - np.eye(ds.dim)))
    prob = mgpd.joint_exceedance_prob(model, fre, u, s, seed=args.seed)
    return {"family": args.family, "estimate": fit.estimate,
            "levels": s, "thresholds": u,
            "prob": prob, "log_prob": float(np.log(max(prob, 1e-300)))}


def cmd_mvn_tail(args) -> dict:
    lower = np.array([float(v) for v in args.lower.split(",")])
    upper = np.array([float(v) for v in args.upper.split(",")])
    rows = [r for r in args.sigma.split(";") if r.strip()]
    sigma = np.array([[float(v) for v in r.split(",")] for r in rows])
    mu = np.zeros(lower.size) if args.mu is None else np.array(
        [float(v) for v in args.mu.split(",")])
    q = OrthantQuery(lower, upper, mu, sigma, df=args.df)
    p, se = (mvt_rect if args.df else mvn_rect)(q, args.n_points, args.seed)
    return {"prob": p, "se": se, "dim": int(lower.size), "df": args.df}


def cmd_simulate(args) -> dict:
    model = _dependence_model(args.family, args)
    u = np.array([float(v) for v in args.u.split(",")]) if args.u else np.ones(args.dim)
    fn = simulate.RiskFunctional(args.functional, u)
    out = simulate.composition_sample(model, fn, args.n, args.seed)
    if args.out_samples:
        header = ",".join(f"y{j+1}" for j in range(u.size))
        body = "\n".join(",".join(repr(float(v)) for v in row)
                         for row in out.samples)
        directory = os.path.dirname(os.path.abspath(args.out_samples)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(header + "\n" + body + "\n")
        os.replace(tmp, args.out_samples)
    freq = np.bincount(out.pivot, minlength=u.size) / args.n
    return {"n": args.n, "functional": args.functional,
            "pivot_frequencies": freq, "flags": out.flags,
            "samples_file": args.out_samples}


def cmd_mixture_experiment(args) -> dict:
    if ":" in args.alpha_grid:
        lo, hi, cnt = args.alpha_grid.split(":")
        grid = np.linspace(float(lo), float(hi), int(cnt))
    else:
        grid = np.array([float(v) for v in args.alpha_grid.split(",")])
    levels = [float(v) for v in args.levels.split(",")]
    table = simulate.mixture_threshold_experiment(grid, args.n_per, levels,
                                                  args.seed, d=args.dim)
    return {"table": {
        "alpha": list(np.repeat(table.alpha_grid, len(levels))),
        "level": list(np.tile(table.levels, len(grid))),
        "share": list(table.shares.ravel()),
        "count": [int(c) for c in table.counts.ravel()],
    }}


def cmd_cluster(args) -> dict:
    ds = _load(args)
    tau = validate.kendall_tau_matrix(ds.values)
    cs = validate.ward_cluster(tau, args.k)
    return {"blocks": [list(b) for b in cs.blocks], "tau": tau,
            "names": list(ds.names)}


def cmd_exch_test(args) -> dict:
    ds = _load(args)
    blocks = tuple(tuple(int(v) for v in b.split(",")) for b in args.blocks.split("|"))
    res = validate.exch_test(ds.values, validate.ClusterSpec(blocks),
                             n_mc=args.n_mc, seed=args.seed)
    return {"E_n": res.e_n, "M_n": res.m_n, "p_E": res.p_e, "p_M": res.p_m,
            "p_E_chi2": res.p_e_chi2, "L": res.L, "df": res.df,
            "flags": res.flags}


def cmd_model_select(args) -> dict:
    ds = _load(args)
    rows = []
    for fitter in args.fitters.split(","):
        score = validate.subset_chi_cv(ds.values, args.k, args.level,
                                       fitter.strip(),
                                       fit_quantile=args.fit_quantile,
                                       seed=args.seed)
        rows.append({"fitter": fitter.strip(), "score": score.score,
                     "n_subsets": score.n_subsets, "n_failed": score.n_failed})
    return {"scores": rows, "k": args.k, "level": args.level}


# ------------------------------------------------------------------ tasks


def cmd_task2(args) -> dict:
    ds = _load(args)
    y = ds.column(args.response)
    u = float(np.quantile(y, args.threshold_quantile))
    exc = y[y > u] - u
    fit = univariate.fit_gpd_mle(exc)
    n = y.size
    zeta = float(np.mean(y > u))
    rng = derive_rng(args.seed)
    draws = univariate.sample_params_gaussian(fit_wrap(fit), args.n_draws,
                                              seed=args.seed)
    if args.threshold_mode == "fixed":
        # threshold held fixed, exceedance probability treated as unknown
        u_draws = np.full(args.n_draws, u)
        zeta_draws = np.clip(rng.normal(zeta, np.sqrt(zeta * (1 - zeta) / n),
                                        size=args.n_draws), 1e-6, 1 - 1e-6)
    else:
        # threshold treated as random (bootstrap of the quantile
        # estimator), exceedance probability held at its level
        idx = rng.integers(0, n, size=(args.n_draws, n))
        u_draws = np.quantile(y[idx], args.threshold_quantile, axis=1)
        zeta_draws = np.full(args.n_draws, zeta)
    qs = []
    for d_, z, u_d in zip(draws, zeta_draws, u_draws):
        sigma, xi = max(d_[0], 1e-8), d_[1]
        lam = args.ny * args.T * z
        if lam <= 1.0:
            continue
        model = univariate.BinGpdModel(float(u_d), z,
                                       univariate.GpdParams(sigma, xi))
        qs.append(univariate.return_level_closed(model, args.T, args.ny))
    qs = np.asarray(qs)
    weights = None
    if args.bootstrap:
        weights = univariate.bootstrap_weights(qs.size, args.bootstrap,
                                               args.seed + 1)
    qhat = univariate.minimize_expected_loss(qs, weights)
    mle_model = univariate.BinGpdModel(u, zeta, fit.params)
    return {"loss_minimizer": qhat,
            "mle_return_level": univariate.return_level_closed(mle_model, args.T, args.ny),
            "posterior_mean": float(qs.mean()), "n_draws_used": int(qs.size),
            "threshold": u, "zeta_u": zeta}


class fit_wrap:
    """Adapter exposing (sigma, xi) draws through the Gaussian sampler."""

    def __init__(self, fit):
        self.coefficients = np.array([fit.params.sigma, fit.params.xi])
        self.cov = fit.cov


def cmd_task3(args) -> dict:
    ds = _load(args)
    gum = MarginSpec("gumbel")
    lap = MarginSpec("laplace")
    L = ds.to_margin(lap)
    y_lap = float(transform_margin(args.y, gum, lap))
    v_lap = float(transform_margin(args.v, gum, lap))
    m_gum = float(gum.quantile(0.5))

    fit = condex.fit_ht_exchangeable_gaussian(
        L, threshold_quantile=args.threshold_quantile)
    d = ds.dim
    p1_sim, p1_se, _ = condex.ht_prob_simulation(
        fit, np.full(d, y_lap), np.full(d, np.inf), y_lap, args.n_sim,
        args.seed, cond=0, pool_rows="all")
    p1_ana = condex.ht_prob_analytic(fit, y_lap)

    # hidden-regular-variation route on the exponential scale
    E = ds.to_margin(MarginSpec("exponential"))
    T = E.min(axis=1)
    u_t = float(np.quantile(T, args.threshold_quantile))
    y_exp = float(transform_margin(args.y, gum, MarginSpec("exponential")))
    p1_hrv = taildep.hrv_extrapolate(E, u_t, max(y_exp - u_t, 0.0))

    # p2: condition on the third variable sitting below its median
    below = ds.values[:, 2] < m_gum
    L2 = L[below][:, :2]
    fit2 = condex.fit_ht_exchangeable_gaussian(
        L2, threshold_quantile=args.threshold_quantile)
    p2_sim, p2_se, _ = condex.ht_prob_simulation(
        fit2, np.full(2, v_lap), np.full(2, np.inf), v_lap, args.n_sim,
        args.seed + 1, cond=0, pool_rows="all")
    p2_ana = condex.ht_prob_analytic(fit2, v_lap)
    return {
        "p1": {"simulation": p1_sim, "se": p1_se,
               "analytic": p1_ana.prob, "hrv": p1_hrv},
        "p2": {"simulation": 0.5 * p2_sim, "se": 0.5 * p2_se,
               "analytic": 0.5 * p2_ana.prob},
        "levels": {"y": args.y, "v": args.v, "median_gumbel": m_gum},
    }


def cmd_task4(args) -> dict:
    ds = _load(args)
    lap = MarginSpec("laplace")
    L = ds.to_margin(lap)
    tau = validate.kendall_tau_matrix(ds.values)
    clusters = validate.ward_cluster(tau, args.k)
    exch = validate.exch_test(ds.values, clusters, n_mc=args.n_mc,
                              seed=args.seed)
    phi1, phi2 = args.phi1, args.phi2
    s1 = float(lap.quantile(1.0 - phi1))
    s2 = float(lap.quantile(1.0 - phi2))
    u1_set = set(range(ds.dim // 2)) if args.u1 is None else {
        int(v) for v in args.u1.split(",")}
    out_clusters = []
    log_p1 = 0.0
    log_p2 = 0.0
    for block in clusters.blocks:
        Lb = L[:, block]
        fit = condex.fit_ht_exchangeable_skewnormal(
            Lb, threshold_quantile=args.threshold_quantile)
        p1 = condex.ht_prob_analytic(fit, s1)
        g1 = [i for i, c in enumerate(block) if c in u1_set]
        g2 = [i for i, c in enumerate(block) if c not in u1_set]
        p2 = condex.ht_prob_two_level(fit, (g1, g2), s1, s2, seed=args.seed)
        out_clusters.append({
            "columns": list(block),
            "alpha": fit.alpha, "beta": fit.beta, "flags": fit.flags,
            "log_p1": p1.log_prob, "log_p2": p2.log_prob,
        })
        log_p1 += p1.log_prob
        log_p2 += p2.log_prob
    return {
        "clusters": [list(b) for b in clusters.blocks],
        "exchangeability": {"p_E": exch.p_e, "p_M": exch.p_m,
                            "p_E_chi2": exch.p_e_chi2},
        "per_cluster": out_clusters,
        "log_p1_total": log_p1, "log_p2_total": log_p2,
        "levels": {"s1": s1, "s2": s2, "phi1": phi1, "phi2": phi2},
    }


def cmd_task1(args) -> dict:
    ds = _load(args)
    names = list(ds.names)
    y = ds.column(args.response)
    resp = names.index(args.response)
    cov_cols = [i for i in range(ds.dim) if i != resp]
    cov_names = [names[i] for i in cov_cols]
    X = ds.values[:, cov_cols]
    ald = univariate.fit_ald(X, y, args.tau)
    u = ald.predict(X)
    spec = univariate.RegressionSpec(
        _columns(args.sigma_covariates, cov_names),
        _columns(args.xi_covariates, cov_names), tuple(cov_names))
    gpd_fit = univariate.fit_gpd_regression(X, y, u, spec)
    # conditional quantile above the threshold at the requested level
    p_exc = 1.0 - (1.0 - args.level) / (1.0 - args.tau)
    coef_ald = univariate.sample_params_gaussian(ald, args.n_draws, args.seed)
    coef_gpd = univariate.sample_params_gaussian(gpd_fit, args.n_draws,
                                                 args.seed + 1)
    Xp = X if args.predict is None else load_dataset(
        args.predict, ["empirical"] * len(cov_names)).values
    point_sigma, point_xi = gpd_fit.predict(Xp)
    point = ald.predict(Xp) + univariate.gpd_quantile(
        p_exc, (point_sigma, np.clip(point_xi, -0.99, 4.99)))
    qs = np.empty((args.n_draws, Xp.shape[0]))
    for i in range(args.n_draws):
        ui = Xp @ coef_ald[i][1:] + coef_ald[i][0]
        sig, xi = gpd_fit.predict(Xp, coef_gpd[i])
        sig = np.clip(sig, 1e-8, None)
        xi = np.clip(xi, -0.99, 4.99)
        qs[i] = ui + univariate.gpd_quantile(p_exc, (sig, xi))
    lo = np.quantile(qs, args.alpha / 2, axis=0)
    hi = np.quantile(qs, 1 - args.alpha / 2, axis=0)
    return {"table": {
        "point": list(point), "lower": list(lo), "upper": list(hi),
    }, "level": args.level, "alpha": args.alpha,
        "gpd": {"log_sigma": gpd_fit.beta_sigma, "xi": gpd_fit.beta_xi}}


# ------------------------------------------------------------------ parser


def _add_common(p, seed=True, out=True, margins=True):
    if seed:
        p.add_argument("--seed", type=int,
                       default=int(os.environ.get("EXTREMIS_SEED", "0")))
    if out:
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
    if margins:
        p.add_argument("--margins", help="margin kinds: one for all columns, "
                       "a comma list, or name=kind pairs (default empirical)")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("EXTREMIS_THREADS", "0")),
                   help="bound internal parallelism (0 = hardware count)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extremis",
                                 description="extreme-value analysis toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-gpd", help="GPD regression above a constant threshold")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--threshold-quantile", type=float, default=0.95)
    p.add_argument("--sigma-covariates", default="")
    p.add_argument("--xi-covariates", default="")
    _add_common(p)
    p.set_defaults(func=cmd_fit_gpd)

    p = sub.add_parser("fit-threshold", help="asymmetric Laplace quantile regression")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--covariates", default=None)
    p.add_argument("--tau", type=float, default=0.95)
    _add_common(p)
    p.set_defaults(func=cmd_fit_threshold)

    p = sub.add_parser("return-level", help="binomial-GPD return level with profile CI")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--threshold-quantile", type=float, default=0.9)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--ny", type=float, required=True)
    p.add_argument("--profile-level", type=float, default=0.95)
    _add_common(p)
    p.set_defaults(func=cmd_return_level)

    p = sub.add_parser("cv-score", help="cross-validated interval scores")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--threshold-quantile", type=float, default=0.95)
    p.add_argument("--models", required=True,
                   help="semicolon-separated: 'sigma:a,b&xi:c;sigma:&xi:'")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--n-draws", type=int, default=1000)
    _add_common(p)
    p.set_defaults(func=cmd_cv_score)

    p = sub.add_parser("loss-min", help="expected-loss return-level point estimate")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default=None)
    p.add_argument("--bootstrap", choices=("nonparametric", "bayesian"),
                   default=None)
    _add_common(p, margins=False)
    p.set_defaults(func=cmd_loss_min)

    p = sub.add_parser("taildep", help="chi/eta tail dependence table")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", default="0.9,0.95,0.98,0.99")
    _add_common(p)
    p.set_defaults(func=cmd_taildep)

    pc = sub.add_parser("condex", help="conditional extremes")
    csub = pc.add_subparsers(dest="subcommand", required=True)
    for name in ("fit", "prob", "prob2"):
        p = csub.add_parser(name)
        p.add_argument("--input", required=True)
        p.add_argument("--threshold-quantile", type=float, default=0.95)
        p.add_argument("--gaussian", action="store_true",
                       help="gaussian residual margins instead of skew-normal")
        p.add_argument("--paper-literal", action="store_true",
                       help="fold the margin tail into the exponent")
        if name == "prob":
            p.add_argument("--level", type=float, required=True)
            p.add_argument("--level-is-quantile", action="store_true")
            p.add_argument("--n-sim", type=int, default=1_000_000)
        if name == "prob2":
            p.add_argument("--s1", type=float, required=True)
            p.add_argument("--s2", type=float, required=True)
            p.add_argument("--level-is-quantile", action="store_true")
            p.add_argument("--groups", required=True,
                           help="column indices 'i,j|k,l'")
            p.add_argument("--no-permute", action="store_true")
        _add_common(p)
        p.set_defaults(func={"fit": cmd_condex_fit, "prob": cmd_condex_prob,
                             "prob2": cmd_condex_prob2}[name])

    pm = sub.add_parser("mgpd", help="multivariate generalized Pareto")
    msub = pm.add_subparsers(dest="subcommand", required=True)
    for name in ("fit", "prob"):
        p = msub.add_parser(name)
        p.add_argument("--input", required=True)
        p.add_argument("--family", choices=("logistic", "hr"), required=True)
        p.add_argument("--threshold-quantile", type=float, default=0.95)
        if name == "fit":
            p.add_argument("--censor-quantile", type=float, default=0.5)
        else:
            p.add_argument("--level", type=float, default=None,
                           help="common Frechet-scale target level")
            p.add_argument("--level-quantile", type=float, default=None)
        _add_common(p)
        p.set_defaults(func={"fit": cmd_mgpd_fit, "prob": cmd_mgpd_prob}[name])

    p = sub.add_parser("mvn-tail", help="normal/Student rectangle probability")
    p.add_argument("--lower", required=True)
    p.add_argument("--upper", required=True)
    p.add_argument("--sigma", required=True, help="rows 'a,b;c,d'")
    p.add_argument("--mu", default=None)
    p.add_argument("--df", type=float, default=None)
    p.add_argument("--n-points", type=int, default=100_000)
    _add_common(p, margins=False)
    p.set_defaults(func=cmd_mvn_tail)

    p = sub.add_parser("simulate", help="composition sampling")
    p.add_argument("--family", choices=("logistic", "neglogistic", "hr"),
                   required=True)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--functional", choices=("min", "max", "sum"),
                   default="min")
    p.add_argument("--u", default=None, help="thresholds 'a,b,c'")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out-samples", default=None)
    _add_common(p, margins=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mixture-experiment",
                       help="exceedance shares across a dependence mixture")
    p.add_argument("--alpha-grid", default="0.4:0.9:100",
                   help="'lo:hi:count' or comma list")
    p.add_argument("--n-per", type=int, default=10_000)
    p.add_argument("--levels", default="0.8,0.9,0.95")
    p.add_argument("--dim", type=int, default=8)
    _add_common(p, margins=False)
    p.set_defaults(func=cmd_mixture_experiment)

    p = sub.add_parser("cluster", help="Kendall tau matrix and Ward blocks")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("exch-test", help="partial exchangeability test")
    p.add_argument("--input", required=True)
    p.add_argument("--blocks", required=True, help="'0,1,2|3,4,5'")
    p.add_argument("--n-mc", type=int, default=2000)
    _add_common(p)
    p.set_defaults(func=cmd_exch_test)

    p = sub.add_parser("model-select", help="leave-subset-out chi scores")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--fit-quantile", type=float, default=0.95)
    p.add_argument("--fitters", default="logistic,hr")
    _add_common(p)
    p.set_defaults(func=cmd_model_select)

    p = sub.add_parser("task1", help="conditional quantile intervals preset")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--predict", default=None,
                   help="CSV of covariate rows to predict (default: input rows)")
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--level", type=float, default=0.9999)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--n-draws", type=int, default=1000)
    p.add_argument("--sigma-covariates", default="")
    p.add_argument("--xi-covariates", default="")
    _add_common(p)
    p.set_defaults(func=cmd_task1)

    p = sub.add_parser("task2", help="loss-based return level preset")
    p.add_argument("--input", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--threshold-quantile", type=float, default=0.9)
    p.add_argument("--threshold-mode", choices=("fixed", "random"),
                   default="fixed",
                   help="fixed threshold with unknown exceedance "
                   "probability (default) or bootstrap-random threshold")
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--ny", type=float, default=300.0)
    p.add_argument("--n-draws", type=int, default=10_000)
    p.add_argument("--bootstrap", choices=("nonparametric", "bayesian"),
                   default=None)
    _add_common(p)
    p.set_defaults(func=cmd_task2)

    p = sub.add_parser("task3", help="trivariate joint tail preset")
    p.add_argument("--input", required=True)
    p.add_argument("--y", type=float, default=6.0)
    p.add_argument("--v", type=float, default=7.0)
    p.add_argument("--threshold-quantile", type=float, default=0.95)
    p.add_argument("--n-sim", type=int, default=1_000_000)
    _add_common(p)
    p.set_defaults(func=cmd_task3)

    p = sub.add_parser("task4", help="clustered high-dimensional tail preset")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--phi1", type=float, default=1.0 / 300.0)
    p.add_argument("--phi2", type=float, default=12.0 / 300.0)
    p.add_argument("--u1", default=None, help="comma list of U1 column indices")
    p.add_argument("--threshold-quantile", type=float, default=0.98)
    p.add_argument("--n-mc", type=int, default=2000)
    _add_common(p)
    p.set_defaults(func=cmd_task4)

    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        inputs = [p for p in (getattr(args, "input", None),
                              getattr(args, "predict", None)) if p]
        result = args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"extremis {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _emit(args, result, inputs)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
