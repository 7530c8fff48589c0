import numpy as np
import pytest

from extremis.core import derive_rng
from extremis.univariate import (BinGpdModel, GpdParams, gpd_quantile,
                                 profile_return_level_ci, return_level_closed,
                                 solve_return_level)

BASE = BinGpdModel(u=100.0, zeta_u=0.05, gpd=GpdParams(10.0, 0.1))


def test_closed_form_value():
    # 100 + (10/0.1) ((300*200*0.05)^0.1 - 1)
    expect = 100.0 + 100.0 * (3000.0 ** 0.1 - 1.0)
    assert return_level_closed(BASE, T=200, Ny=300) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(222.6959, abs=1e-3)


def test_closed_form_threshold_and_log_limit():
    m = BinGpdModel(u=5.0, zeta_u=1.0 / (300.0 * 50.0) * (1 + 1e-9), gpd=GpdParams(1.0, 0.3))
    assert return_level_closed(m, T=50, Ny=300) == pytest.approx(5.0, abs=1e-6)
    m0 = BinGpdModel(u=0.0, zeta_u=np.e / 3000.0, gpd=GpdParams(1.0, 0.0))
    assert return_level_closed(m0, T=10, Ny=300) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(ValueError):
        return_level_closed(BinGpdModel(1.0, 0.001, GpdParams(1.0, 0.1)), T=2, Ny=300)


def test_solver_matches_closed_form_single_model():
    z = solve_return_level([BASE], T=200, m=300)
    assert z == pytest.approx(return_level_closed(BASE, T=200, Ny=300), abs=1e-6)


def test_solver_duplicate_models_identical():
    z1 = solve_return_level([BASE], T=200, m=300)
    z2 = solve_return_level([BASE, BASE], T=200, m=300)
    assert z2 == pytest.approx(z1, abs=1e-8)


def test_solver_mixture_between_single_roots():
    a = BinGpdModel(100.0, 0.05, GpdParams(10.0, 0.1))
    b = BinGpdModel(100.0, 0.05, GpdParams(10.0, -0.1))
    za = solve_return_level([a], T=200, m=300)
    zb = solve_return_level([b], T=200, m=300)
    zm = solve_return_level([a, b], T=200, m=300)
    assert min(za, zb) < zm < max(za, zb)


def test_solver_monotone_in_T_and_zeta():
    roots = [solve_return_level([BASE], T=t, m=300) for t in (50, 100, 200, 500)]
    assert np.all(np.diff(roots) > 0)
    roots_z = [solve_return_level([BinGpdModel(100.0, z, GpdParams(10.0, 0.1))], T=200, m=300)
               for z in (0.01, 0.05, 0.2)]
    assert np.all(np.diff(roots_z) > 0)


def test_solver_annual_max_mode_close_but_distinct():
    z_obs = solve_return_level([BASE], T=200, m=300)
    z_ann = solve_return_level([BASE], T=200, m=300, annual_max=True)
    assert abs(z_ann - z_obs) > 1e-4
    assert abs(z_ann - z_obs) < 0.5


def test_solver_requires_level_above_threshold():
    shallow = BinGpdModel(100.0, 1e-6, GpdParams(10.0, 0.1))
    with pytest.raises(ValueError):
        solve_return_level([shallow], T=2, m=300)


def test_profile_interval_contains_mle_and_nests():
    rng = derive_rng(31)
    x = gpd_quantile(rng.uniform(size=800), GpdParams(2.0, 0.15))
    ci95 = profile_return_level_ci(x, zeta_u=0.05, T=200, Ny=300, level=0.95, u=50.0)
    ci99 = profile_return_level_ci(x, zeta_u=0.05, T=200, Ny=300, level=0.99, u=50.0)
    assert ci95.lower < ci95.estimate < ci95.upper
    assert ci99.lower <= ci95.lower and ci99.upper >= ci95.upper


@pytest.mark.slow
def test_profile_interval_coverage():
    truth_model = BinGpdModel(0.0, 0.05, GpdParams(2.0, 0.1))
    truth = return_level_closed(truth_model, T=100, Ny=300)
    hits = 0
    reps = 200
    for r in range(reps):
        rng = derive_rng(5150, r)
        n_exc = rng.binomial(4000, 0.05)
        x = gpd_quantile(rng.uniform(size=n_exc), GpdParams(2.0, 0.1))
        ci = profile_return_level_ci(x, zeta_u=0.05, T=100, Ny=300, level=0.95,
                                     grid_size=200)
        hits += ci.lower <= truth <= ci.upper
    assert hits >= 0.90 * reps
