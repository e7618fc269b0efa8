"""Kernel density estimator jets, bootstrap variants, log jets and bandwidths."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridgeci.kde import (
    default_bandwidth,
    empirical_refit,
    fit,
    jet_at,
    load_sample_csv,
    log_jet_at,
    multiplier_jet_at,
)
from ridgeci.kernel import KernelSpec, kernel_jets


@pytest.fixture(scope="module")
def blob():
    rng = np.random.default_rng(0)
    return rng.standard_normal((400, 2))


def test_fit_contract():
    est = fit(np.array([[0.0, 0.0], [1.0, 1.0]]), 0.5)
    assert est.n == 2
    with pytest.raises(ValueError, match="nonpositive bandwidth"):
        fit(np.zeros((3, 2)), 0.0)
    with pytest.raises(ValueError):
        fit(np.zeros((1, 2)), 1.0)


def test_support_count_matches_linear_scan(blob):
    est = fit(blob, 0.4)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-3, 3, (100, 2)):
        brute = int(np.sum(np.all(np.abs(blob - x) < 0.4, axis=1)))
        assert est.support_count(x) == brute


def test_single_point_value():
    est = fit(np.array([[0.0, 0.0], [50.0, 50.0]]), 0.5)
    # two points, the far one contributes nothing at the origin
    assert jet_at(est, [0.0, 0.0]).value == pytest.approx((35 / 32) ** 2 / (2 * 0.25), rel=1e-14)


def test_far_query_is_zero(blob):
    jet = jet_at(fit(blob, 0.3), [100.0, 100.0])
    assert jet.value == 0 and np.all(jet.gradient == 0) and np.all(jet.hess_vech == 0)


def test_matches_naive_sum(blob):
    h = 0.5
    est = fit(blob, h)
    x = np.array([0.2, -0.3])
    v, g, hv = kernel_jets((x - blob) / h)
    n = blob.shape[0]
    jet = jet_at(est, x)
    assert jet.value == pytest.approx(v.sum() / (n * h**2), rel=1e-12)
    np.testing.assert_allclose(jet.gradient, g.sum(0) / (n * h**3), rtol=1e-11)
    np.testing.assert_allclose(jet.hess_vech, hv.sum(0) / (n * h**4), rtol=1e-11)


def test_gradient_and_hessian_finite_differences(blob):
    h = 0.5
    est = fit(blob, h)
    rng = np.random.default_rng(2)
    X = rng.uniform(-1.5, 1.5, (100, 2))
    step = 1e-4 * h
    v, g, hv = est.jets(X)
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        vp, gp, _ = est.jets(X + e)
        vm, gm, _ = est.jets(X - e)
        fd = (vp - vm) / (2 * step)
        np.testing.assert_allclose(fd, g[:, j], rtol=1e-5, atol=1e-8 * np.abs(g).max())
        fdh = (gp - gm) / (2 * step)
        col = [0, 1] if j == 0 else [1, 2]
        np.testing.assert_allclose(fdh, hv[:, col], rtol=1e-4, atol=1e-7 * np.abs(hv).max())


def test_multiplier_identities(blob):
    est = fit(blob, 0.5)
    x = [0.1, 0.4]
    base = jet_at(est, x)
    for e in (np.zeros(est.n), np.full(est.n, 3.7)):
        jet = multiplier_jet_at(est, x, e)
        assert jet.value == pytest.approx(base.value, rel=1e-13)
        np.testing.assert_allclose(jet.gradient, base.gradient, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        multiplier_jet_at(est, x, np.zeros(3))


def test_multiplier_matches_display(blob):
    h = 0.5
    est = fit(blob, h)
    x = np.array([0.1, 0.4])
    e = np.random.default_rng(3).standard_normal(est.n)
    kh = kernel_jets((x - blob) / h)[0] / h**2
    fhat = kh.mean()
    direct = fhat + np.sum(e * (kh - fhat)) / est.n
    assert multiplier_jet_at(est, x, e).value == pytest.approx(direct, abs=1e-12)


def test_multiplier_conditional_mean(blob):
    est = fit(blob, 0.5)
    x = [0.0, 0.0]
    rng = np.random.default_rng(4)
    vals = np.array([multiplier_jet_at(est, x, rng.standard_normal(est.n)).value for _ in range(2000)])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - jet_at(est, x).value) <= 3 * se


def test_empirical_refit(blob):
    est = fit(blob, 0.5)
    x = [0.3, 0.3]
    same = empirical_refit(est, np.arange(est.n))
    assert jet_at(same, x).value == pytest.approx(jet_at(est, x).value, rel=1e-13)
    point_mass = empirical_refit(est, np.zeros(est.n, dtype=int))
    single = fit(np.vstack([blob[0], blob[0]]), 0.5)
    assert jet_at(point_mass, x).value == pytest.approx(jet_at(single, x).value, rel=1e-13)
    idx = np.random.default_rng(5).integers(0, est.n, est.n)
    fresh = fit(blob[idx], 0.5)
    np.testing.assert_allclose(jet_at(empirical_refit(est, idx), x).gradient, jet_at(fresh, x).gradient, rtol=1e-12)
    with pytest.raises(IndexError):
        empirical_refit(est, np.full(est.n, est.n))


def test_log_jets(blob):
    h = 0.5
    est = fit(blob, h)
    far = log_jet_at(est, [50.0, 50.0], floor=1e-9)
    assert far.value == pytest.approx(math.log(1e-9))
    assert np.all(far.gradient == 0) and np.all(far.hess_vech == 0)
    x = np.array([0.4, -0.2])
    step = 1e-4 * h
    g = log_jet_at(est, x, floor=1e-12).gradient
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fd = (math.log(jet_at(est, x + e).value) - math.log(jet_at(est, x - e).value)) / (2 * step)
        assert fd == pytest.approx(g[j], rel=1e-4)
    with pytest.raises(ValueError):
        log_jet_at(est, x, floor=0.0)


def test_log_preserves_argmax(blob):
    est = fit(blob, 0.6)
    ax = np.linspace(-1, 1, 21)
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    v = est.jets(X)[0]
    lv = np.array([log_jet_at(est, x, 1e-12).value for x in X])
    assert np.argmax(v) == np.argmax(lv)


def test_bandwidth_formula(blob):
    h_a = default_bandwidth(blob, "a")
    big = np.vstack([blob] * 4)
    # same spread up to the ddof factor, so compare the formula directly
    sd = big.std(axis=0, ddof=1)
    assert default_bandwidth(big, "a") == pytest.approx(1.2 * math.sqrt(sd[0] * sd[1]) * 1600 ** (-1 / 8), rel=1e-12)
    assert default_bandwidth(10 * blob, "a") == pytest.approx(10 * h_a, rel=1e-12)
    rng = np.random.default_rng(6)
    X = rng.standard_normal((2000, 2)) * [1.0, 2.0]
    sd = X.std(axis=0, ddof=1)
    assert default_bandwidth(X, "b") == pytest.approx(1.2 * math.sqrt(sd[0] * sd[1]) * 2000 ** (-1 / 6.5), rel=1e-12)
    with pytest.raises(ValueError):
        default_bandwidth(np.column_stack([np.ones(5), np.arange(5.0)]))


def test_translation_equivariance(blob):
    v = np.array([3.25, -1.5])
    est, moved = fit(blob, 0.5), fit(blob + v, 0.5)
    x = np.array([0.2, 0.1])
    a, b = jet_at(est, x), jet_at(moved, x + v)
    assert b.value == pytest.approx(a.value, rel=1e-12)
    np.testing.assert_allclose(b.gradient, a.gradient, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(b.hess_vech, a.hess_vech, rtol=1e-10, atol=1e-14)


def test_integrates_to_one(blob):
    h = 0.5
    est = fit(blob, h)
    lo, hi = blob.min(0) - h, blob.max(0) + h
    axes = [np.linspace(a, b, 401) for a, b in zip(lo, hi)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    v = est.jets(X)[0].reshape(401, 401)
    total = np.trapezoid(np.trapezoid(v, axes[1], axis=1), axes[0])
    assert total == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000))
def test_point_order_irrelevant(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 2))
    perm = rng.permutation(60)
    x = rng.uniform(-1, 1, 2)
    a, b = jet_at(fit(X, 0.7), x), jet_at(fit(X[perm], 0.7), x)
    assert b.value == pytest.approx(a.value, rel=1e-12, abs=1e-15)


def test_csv_loading(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("x,y\n0,1\n2,3\n")
    np.testing.assert_array_equal(load_sample_csv(p), [[0, 1], [2, 3]])
    p.write_text("0,1\nnan,3\n")
    with pytest.raises(ValueError, match="2"):
        load_sample_csv(p)
    with pytest.raises(FileNotFoundError, match="missing.csv"):
        load_sample_csv(tmp_path / "missing.csv")
