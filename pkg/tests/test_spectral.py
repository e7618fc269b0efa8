"""Eigen machinery: vech algebra, projectors, M, and eigenprojection derivatives."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ridgeci.diagnostics import perturbation_remainders, random_gapped_matrix, _slope
from ridgeci.spectral import (
    EigenGapError,
    batch_nonridgeness,
    duplication_matrix,
    eigenprojection,
    nonridgeness,
    projection_derivative,
    projection_second_derivative,
    ridge_M_T,
    spectral_frame,
    unvech,
    vec,
    vech,
)


def sym(rng, d):
    A = rng.standard_normal((d, d))
    return 0.5 * (A + A.T)


def test_vech_order_and_round_trip():
    A = np.array([[1.0, 2.0], [2.0, 3.0]])
    np.testing.assert_array_equal(vech(A), [1.0, 2.0, 3.0])
    rng = np.random.default_rng(0)
    for _ in range(100):
        S = sym(rng, 4)
        np.testing.assert_array_equal(unvech(vech(S)), S)


def test_vech_rejects_asymmetry():
    with pytest.raises(ValueError):
        vech(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_duplication_matrix():
    np.testing.assert_array_equal(duplication_matrix(2), [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]])
    np.testing.assert_array_equal(duplication_matrix(1), [[1]])
    rng = np.random.default_rng(1)
    for d in (2, 3, 5):
        D = duplication_matrix(d)
        S = sym(rng, d)
        np.testing.assert_array_equal(D @ vech(S), vec(S))
        assert np.all(D.sum(axis=1) == 1)
        DtD = D.T @ D
        assert np.all(DtD == np.diag(np.diag(DtD)))
        assert set(np.diag(DtD)) <= {1, 2}
    with pytest.raises(ValueError):
        duplication_matrix(17)


def test_diagonal_frame():
    fr = spectral_frame(np.diag([-1.0, -2.0]), np.array([1.0, 0.0]), 1)
    assert abs(abs(fr.V[1, 0]) - 1) < 1e-15 and fr.V[0, 0] == 0
    np.testing.assert_allclose(fr.L, np.diag([0.0, 1.0]), atol=1e-15)
    assert fr.lambda_r1 == -2.0
    assert nonridgeness(fr, [1.0, 0.0]) == 0.0
    assert nonridgeness(fr, [0.0, 1.0]) == pytest.approx(1.0)


def test_zero_gradient_gives_zero_M():
    rng = np.random.default_rng(2)
    H = random_gapped_matrix(rng, 3, 1)
    assert np.all(spectral_frame(H, np.zeros(3), 1).M_T == 0)


def test_S_matches_pseudoinverse():
    S = np.diag([2.0, 1.0])
    fr = spectral_frame(S, np.zeros(2), 1)
    np.testing.assert_allclose(fr.S_list[0], np.diag([0.0, 1.0]), atol=1e-14)
    np.testing.assert_allclose(fr.S_list[0], np.linalg.pinv(2.0 * np.eye(2) - S), atol=1e-14)


def test_gap_violation():
    with pytest.raises(EigenGapError):
        spectral_frame(np.diag([-1.0, -1.0]), np.zeros(2), 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_frame_invariants(seed, d):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, d))
    H = random_gapped_matrix(rng, d, r, tie=("top", "bottom", None)[seed % 3])
    fr = spectral_frame(H, rng.standard_normal(d), r)
    L = fr.L
    assert np.linalg.norm(L @ L - L) <= 1e-10
    assert np.allclose(L, L.T, atol=1e-14)
    assert np.trace(L) == pytest.approx(d - r, abs=1e-10)
    assert np.linalg.norm(sum(fr.projectors) - np.eye(d)) <= 1e-10
    for mu, P, Sj in zip(fr.means, fr.projectors, fr.S_list):
        assert np.abs(Sj @ P).max() <= 1e-8 and np.abs(P @ Sj).max() <= 1e-8
        assert np.abs((H - mu * np.eye(d)) @ Sj - (P - np.eye(d))).max() <= 1e-8
    U, lam = fr.eigenvectors, fr.eigenvalues
    assert np.linalg.norm(U @ np.diag(lam) @ U.T - H) <= 1e-9 * np.linalg.norm(H)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_nonridgeness_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    H = random_gapped_matrix(rng, 4, 2, tie="bottom")
    g = rng.standard_normal(4)
    fr = spectral_frame(H, g, 2)
    p = nonridgeness(fr, g)
    # rotate inside the tied trailing pair and flip a sign
    c, s = np.cos(0.7), np.sin(0.7)
    V = fr.V @ np.array([[c, -s], [s, c]]) * np.array([1.0, -1.0])
    assert np.linalg.norm(V.T @ g) == pytest.approx(p, rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(V @ V.T, fr.L, atol=1e-12)


def test_projection_derivative_trivial_cases():
    rng = np.random.default_rng(3)
    H = random_gapped_matrix(rng, 4, 2)
    assert np.all(projection_derivative(H, np.zeros((4, 4)), 2) == 0)
    assert np.all(projection_second_derivative(H, np.zeros((4, 4)), 2) == 0)
    w, U = np.linalg.eigh(H)
    D = U @ np.diag(rng.standard_normal(4)) @ U.T
    assert np.abs(projection_derivative(H, D, 2)).max() <= 1e-12


def test_remainder_slopes():
    rng = np.random.default_rng(4)
    H = random_gapped_matrix(rng, 4, 2, min_gap=1.0)
    D = sym(rng, 4)
    D /= np.linalg.norm(D)
    steps = np.array([1e-2, 1e-3, 1e-4])
    r1, _ = perturbation_remainders(H, D, 2, steps)
    assert _slope(steps, r1) == pytest.approx(2.0, abs=0.1)
    steps = np.geomspace(1e-3, 3e-2, 6)
    _, r2 = perturbation_remainders(H, D, 2, steps)
    assert _slope(steps, r2) == pytest.approx(3.0, abs=0.15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_second_derivative_symmetric(seed):
    rng = np.random.default_rng(seed)
    H = random_gapped_matrix(rng, 4, 2)
    Q2 = projection_second_derivative(H, sym(rng, 4), 2)
    assert np.abs(Q2 - Q2.T).max() <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_kronecker_identity(seed, d):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, d))
    H = random_gapped_matrix(rng, d, r)
    D = sym(rng, d)
    g = rng.standard_normal(d)
    fr = spectral_frame(H, g, r)
    np.testing.assert_allclose(projection_derivative(H, D, r) @ g, fr.M_T @ vech(D), atol=1e-9)


def test_full_M_reduces_on_ridge():
    rng = np.random.default_rng(5)
    H = random_gapped_matrix(rng, 3, 1)
    fr0 = spectral_frame(H, np.zeros(3), 1)
    g = fr0.eigenvectors[:, 0] * 1.7       # orthogonal to the trailing space
    fr = spectral_frame(H, g, 1)
    assert np.linalg.norm(fr.L @ g) <= 1e-12
    np.testing.assert_allclose(fr.M_T, ridge_M_T(fr, g), atol=1e-9)


def test_batch_matches_pointwise():
    rng = np.random.default_rng(6)
    Hs = np.stack([random_gapped_matrix(rng, 3, 1) for _ in range(20)])
    G = rng.standard_normal((20, 3))
    p, lam, ok = batch_nonridgeness(Hs, G, 1)
    assert ok.all()
    for i in range(20):
        fr = spectral_frame(Hs[i], G[i], 1)
        assert p[i] == pytest.approx(nonridgeness(fr, G[i]), rel=1e-10, abs=1e-14)
        assert lam[i] == pytest.approx(fr.lambda_r1, rel=1e-12)
    np.testing.assert_allclose(eigenprojection(Hs[0], 1), spectral_frame(Hs[0], G[0], 1).L, atol=1e-12)
