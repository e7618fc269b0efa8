"""Bootstrap draws, quantiles, candidate sets and confidence regions."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridgeci.bootstrap import (
    BootstrapConfig,
    EmptyCandidateSet,
    bootstrap_draws,
    bootstrap_quantile,
    candidate_set,
    confidence_region,
    default_rho_n,
    empirical_sup_draw,
    grad_sup_draw,
    multiplier_sup_draw,
    read_draws,
    write_draws,
)
from ridgeci.field import default_grid, evaluate_field, sublevel_region
from ridgeci.kde import default_log_floor, fit, log_transform, multiplier_jet_at, empirical_refit, jet_at
from ridgeci.spectral import nonridgeness, spectral_frame, unvech
from ridgeci.synthetic import build_model, sample


@pytest.fixture(scope="module")
def setup():
    model = build_model("circle_flat")
    X = sample(model, 1000, 11)
    est = fit(X, 0.3)
    fld = evaluate_field(est, default_grid(X, 0.3), use_log=True)
    return est, fld


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(B=0)
    with pytest.raises(ValueError):
        BootstrapConfig(mode="wild")
    with pytest.raises(ValueError):
        BootstrapConfig(alpha=1.0)
    with pytest.raises(ValueError):
        BootstrapConfig(rho_n="big")


def test_quantile_convention():
    assert bootstrap_quantile(np.arange(1, 101), 0.1) == 90
    rng = np.random.default_rng(0)
    x = rng.uniform(size=37)
    assert bootstrap_quantile(x, 1e-9) == x.max()
    assert bootstrap_quantile([4.2], 0.1) == 4.2
    with pytest.raises(ValueError):
        bootstrap_quantile([], 0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=300), st.floats(0.001, 0.999))
def test_quantile_matches_sorted_reference(draws, alpha):
    ref = sorted(draws)[min(len(draws), max(1, math.ceil(round(len(draws) * (1 - alpha), 9)))) - 1]
    assert bootstrap_quantile(draws, alpha) == ref


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=100), st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_quantile_monotone_in_alpha(draws, a, b):
    lo, hi = min(a, b), max(a, b)
    assert bootstrap_quantile(draws, lo) >= bootstrap_quantile(draws, hi)


def test_default_rho():
    est = fit(np.random.default_rng(0).standard_normal((2000, 2)), 0.3)
    n, h = 2000, 0.3
    expected = math.log(n) * math.sqrt(math.log(n) / (n * h**6))
    assert default_rho_n(est, "a") == pytest.approx(expected, rel=1e-12)
    assert default_rho_n(est, "a") > default_rho_n(est, "b")
    assert default_rho_n(est, "a") / math.sqrt(math.log(n) / (n * h**6)) == pytest.approx(math.log(n))


def test_candidate_sets(setup):
    est, fld = setup
    full = candidate_set(fld, float(fld.p_hat[fld.valid].max()))
    np.testing.assert_array_equal(full, np.flatnonzero(fld.valid & (fld.lambda_r1 < 0)))
    with pytest.raises(EmptyCandidateSet, match="empty candidate set"):
        candidate_set(fld, 0.5 * float(fld.p_hat[fld.lambda_negative].min()))
    small, big = candidate_set(fld, 0.5), candidate_set(fld, 2.0)
    assert set(small) <= set(big)
    assert candidate_set(fld, "zero").size >= 1
    assert candidate_set(fld, "tube").size >= 1


def test_degenerate_draws(setup):
    est, fld = setup
    cand = candidate_set(fld, "tube")
    assert multiplier_sup_draw(est, fld, cand, weights=np.zeros(est.n)) == 0.0
    assert multiplier_sup_draw(est, fld, cand, weights=np.full(est.n, -2.5)) == 0.0
    assert empirical_sup_draw(est, fld, cand, indices=np.arange(est.n)) == 0.0
    assert grad_sup_draw(est, fld, cand, weights=np.zeros(est.n)) == 0.0
    assert grad_sup_draw(est, fld, cand, weights=np.ones(est.n)) == 0.0
    # a permutation is the same multiset
    perm = np.random.default_rng(1).permutation(est.n)
    assert empirical_sup_draw(est, fld, cand, indices=perm) == 0.0


def test_two_point_resample():
    X = np.array([[0.0, 0.0], [0.1, 0.05]])
    est = fit(X, 1.0)
    fld = evaluate_field(est, default_grid(X, 1.0), floor_q=None)
    cand = np.flatnonzero(fld.lambda_negative)[:5]
    assert empirical_sup_draw(est, fld, cand, indices=np.array([0, 1])) == 0.0


def _log_p(jet, floor):
    _, g, hv = log_transform(np.array([jet.value]), jet.gradient[None], jet.hess_vech[None], floor)
    return nonridgeness(spectral_frame(unvech(hv[0]), g[0], 1), g[0])


def test_single_node_matches_pipeline(setup):
    est, fld = setup
    node = candidate_set(fld, "tube")[:1]
    x = fld.coords[node[0]]
    floor = fld.log_floor
    base = _log_p(jet_at(est, x), floor)
    e = 0.1 * np.random.default_rng(2).standard_normal(est.n)
    direct = abs(_log_p(multiplier_jet_at(est, x, e), floor) - base)
    assert multiplier_sup_draw(est, fld, node, weights=e) == pytest.approx(direct, rel=1e-8, abs=1e-12)
    idx = np.random.default_rng(3).integers(0, est.n, est.n)
    refit = abs(_log_p(jet_at(empirical_refit(est, idx), x), floor) - base)
    assert empirical_sup_draw(est, fld, node, indices=idx) == pytest.approx(refit, rel=1e-8, abs=1e-12)
    e = np.random.default_rng(4).standard_normal(est.n)
    g_direct = np.linalg.norm(multiplier_jet_at(est, x, e).gradient - jet_at(est, x).gradient)
    assert grad_sup_draw(est, fld, node, weights=e) == pytest.approx(g_direct, rel=1e-10)


def test_batched_draws_match_single(setup):
    est, fld = setup
    from ridgeci.bootstrap import replicate_rng

    cand = candidate_set(fld, "tube")
    bd = bootstrap_draws(est, fld, cand, 5, "multiplier", seed=9)
    for b in range(5):
        single = multiplier_sup_draw(est, fld, cand, rng=replicate_rng(9, b))
        assert bd.draws[b] == pytest.approx(single, rel=1e-12)
    assert np.all(bd.draws >= 0)


def test_region_properties(setup, tmp_path):
    est, fld = setup
    cfg = BootstrapConfig(B=1, rho_n="tube", seed=5)
    region, bd = confidence_region(est, fld, cfg)
    assert region.threshold == bd.draws[0]
    cfg = BootstrapConfig(B=60, rho_n="tube", seed=5)
    r1, d1 = confidence_region(est, fld, cfg)
    r2, d2 = confidence_region(est, fld, cfg)
    np.testing.assert_array_equal(d1.draws, d2.draws)
    np.testing.assert_array_equal(r1.mask, r2.mask)
    np.testing.assert_array_equal(r1.mask, sublevel_region(fld, r1.threshold))
    t_lo, t_hi = bootstrap_quantile(d1.draws, 0.05), bootstrap_quantile(d1.draws, 0.5)
    assert t_lo >= t_hi
    assert np.all(sublevel_region(fld, t_lo)[sublevel_region(fld, t_hi)])
    ident, _ = confidence_region(est, fld, BootstrapConfig(B=10, mode="empirical", rho_n="tube"), identity=True)
    assert ident.threshold == 0.0
    write_draws(tmp_path / "d.json", cfg, d1, r1)
    rec = read_draws(tmp_path / "d.json")
    assert rec["threshold"] == r1.threshold and rec["draws"] == list(d1.draws)


def test_multiplier_mean_stable(setup):
    est, fld = setup
    cand = candidate_set(fld, "tube")
    m1 = bootstrap_draws(est, fld, cand, 2000, "multiplier", seed=1).draws.mean()
    m2 = bootstrap_draws(est, fld, cand, 2000, "multiplier", seed=2).draws.mean()
    assert m1 > 0 and m2 > 0
    assert abs(m1 - m2) / (0.5 * (m1 + m2)) < 0.05


def test_modes_agree_coarsely():
    model = build_model("circle_flat")
    X = sample(model, 2000, 12)
    from ridgeci.kde import default_bandwidth

    h = default_bandwidth(X, "b")
    est = fit(X, h)
    fld = evaluate_field(est, default_grid(X, h), use_log=True)
    cand = candidate_set(fld, "tube")
    tm = bootstrap_draws(est, fld, cand, 500, "multiplier", seed=3).t_quantile
    te = bootstrap_draws(est, fld, cand, 500, "empirical", seed=3).t_quantile
    assert abs(tm - te) <= 0.25 * max(tm, te)
