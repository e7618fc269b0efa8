"""Kernel evaluators: closed forms, support, symmetry and finite differences."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ridgeci.kernel import (
    KernelSpec,
    kernel_gradient,
    kernel_hess_vech,
    kernel_jets,
    kernel_value,
    profile,
    validate_kernel_moments,
)

K2 = KernelSpec(2)


def test_value_at_origin():
    assert kernel_value(K2, [0.0, 0.0]) == pytest.approx((35 / 32) ** 2, abs=1e-15)


def test_zero_outside_support():
    assert kernel_value(K2, [1.5, 0.0]) == 0.0
    assert np.all(kernel_gradient(K2, [2.0, 2.0]) == 0.0)
    assert np.all(kernel_hess_vech(K2, [1.2, -3.0]) == 0.0)
    assert kernel_hess_vech(K2, [1.2, -3.0]).shape == (3,)


def test_profile_integrates_to_one():
    val, _ = integrate.quad(profile, -1, 1, epsabs=1e-14)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_gradient_at_origin_and_symbolic_value():
    assert np.all(kernel_gradient(K2, [0.0, 0.0]) == 0.0)
    # d/dt (35/32)(1 - t^2)^3 = -(105/16) t (1 - t^2)^2, times k(0) for the other axis
    t = 0.5
    expected = -(105 / 16) * t * (1 - t * t) ** 2 * (35 / 32)
    assert kernel_gradient(K2, [0.5, 0.0])[0] == pytest.approx(expected, rel=1e-12)
    assert kernel_gradient(K2, [0.5, 0.0])[1] == 0.0


def test_second_derivative_1d_origin():
    assert kernel_hess_vech(KernelSpec(1), [0.0])[0] == pytest.approx(-6.5625, abs=1e-14)


def test_hessian_matches_gradient_differences():
    u = np.array([0.3, -0.4])
    step = 1e-5
    hv = kernel_hess_vech(K2, u)
    fd = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fd[:, j] = (kernel_gradient(K2, u + e) - kernel_gradient(K2, u - e)) / (2 * step)
    # vech order (xx, yx, yy)
    np.testing.assert_allclose(hv, [fd[0, 0], fd[1, 0], fd[1, 1]], rtol=1e-6)


def test_moments():
    m1 = validate_kernel_moments(KernelSpec(1))
    assert m1["integral"] == pytest.approx(1.0, abs=1e-9)
    assert abs(m1["first_moments"][0]) <= 1e-12
    m2 = validate_kernel_moments(K2)
    assert np.all(np.abs(m2["first_moments"]) <= 1e-12)
    assert m2["second_moment"] > 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_value(K2, [0.0, 0.0, 0.0])


coord = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(coord, min_size=3, max_size=3), st.permutations(range(3)))
def test_even_and_permutation_invariant(u, perm):
    spec = KernelSpec(3)
    u = np.array(u)
    v = kernel_value(spec, u)
    assert kernel_value(spec, -u) == v
    assert kernel_value(spec, u[list(perm)]) == pytest.approx(v, rel=1e-14, abs=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(coord, min_size=2, max_size=2))
def test_exact_zero_when_any_coordinate_leaves_support(u):
    u = np.array(u)
    v, g, hv = kernel_jets(u[None, :])
    if np.any(np.abs(u) >= 1):
        assert v[0] == 0.0 and np.all(g == 0.0) and np.all(hv == 0.0)
    else:
        assert v[0] > 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.9, 0.9), min_size=2, max_size=2))
def test_gradient_central_differences(u):
    u = np.array(u)
    step = 1e-6
    g = kernel_gradient(K2, u)
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fd = (kernel_value(K2, u + e) - kernel_value(K2, u - e)) / (2 * step)
        assert fd == pytest.approx(g[j], abs=1e-7)
