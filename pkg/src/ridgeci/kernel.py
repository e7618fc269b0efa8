"""Compactly supported product kernel with exact first and second derivatives.

The kernel is K(u) = prod_i k(u_i) with the triweight profile
k(t) = 35/32 (1 - t^2)^3 on [-1, 1]. The profile is even, integrates to one
and has a Lipschitz second derivative, so K is a 2-valid kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROFILES = ("triweight",)

_C = 35.0 / 32.0


@dataclass(frozen=True)
class KernelSpec:
    dimension: int
    profile: str = "triweight"

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError(f"kernel dimension must be a positive integer, got {self.dimension}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown kernel profile {self.profile!r}; available: {PROFILES}")

    @property
    def n_hess(self) -> int:
        return self.dimension * (self.dimension + 1) // 2


def profile(t):
    """k(t), zero outside the open interval (-1, 1)."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t * t
    return np.where(s > 0.0, _C * s**3, 0.0)


def profile_d1(t):
    t = np.asarray(t, dtype=float)
    s = 1.0 - t * t
    return np.where(s > 0.0, -6.0 * _C * t * s**2, 0.0)


def profile_d2(t):
    t = np.asarray(t, dtype=float)
    s = 1.0 - t * t
    return np.where(s > 0.0, -6.0 * _C * s * (1.0 - 5.0 * t * t), 0.0)


def vech_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the lower triangle, stacked column by column."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j, d):
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def kernel_jets(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient and vech-Hessian of K for a batch of arguments.

    Parameters
    ----------
    u : (N, d) array

    Returns
    -------
    value : (N,)
    grad : (N, d)
    hess_vech : (N, d(d+1)/2)
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    N, d = u.shape
    k0 = profile(u)
    k1 = profile_d1(u)
    k2 = profile_d2(u)

    value = np.prod(k0, axis=1)
    grad = np.empty((N, d))
    for i in range(d):
        others = np.prod(np.delete(k0, i, axis=1), axis=1) if d > 1 else np.ones(N)
        grad[:, i] = k1[:, i] * others

    rows, cols = vech_indices(d)
    hess = np.empty((N, rows.size))
    for m, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            factor = k2[:, i]
            rest = [a for a in range(d) if a != i]
        else:
            factor = k1[:, i] * k1[:, j]
            rest = [a for a in range(d) if a not in (i, j)]
        hess[:, m] = factor * (np.prod(k0[:, rest], axis=1) if rest else 1.0)
    return value, grad, hess


def _check(spec: KernelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != spec.dimension:
        raise ValueError(f"argument has shape {u.shape}, kernel dimension is {spec.dimension}")
    if not np.all(np.isfinite(u)):
        raise ValueError("kernel argument must be finite")
    return u


def kernel_value(spec: KernelSpec, u) -> float:
    u = _check(spec, u)
    return float(kernel_jets(u[None, :])[0][0])


def kernel_gradient(spec: KernelSpec, u) -> np.ndarray:
    u = _check(spec, u)
    return kernel_jets(u[None, :])[1][0]


def kernel_hess_vech(spec: KernelSpec, u) -> np.ndarray:
    """vech of the Hessian of K at u (lower triangle, column-major)."""
    u = _check(spec, u)
    return kernel_jets(u[None, :])[2][0]


def validate_kernel_moments(spec: KernelSpec) -> dict:
    """Integrate K, its first moments and its squared-norm moment numerically.

    Uses Gauss-Legendre quadrature on the support, which is exact for the
    polynomial profile once the node count exceeds half its degree.
    """
    d = spec.dimension
    if d > 4:
        raise ValueError("moment validation is limited to d <= 4")
    nodes, weights = np.polynomial.legendre.leggauss(16)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.ones(pts.shape[0])
    for wg in np.meshgrid(*([weights] * d), indexing="ij"):
        w = w * wg.ravel()
    K = kernel_jets(pts)[0]
    integral = float(np.sum(w * K))
    first = np.array([np.sum(w * K * pts[:, i]) for i in range(d)])
    second = float(np.sum(w * K * np.sum(pts**2, axis=1)))
    return {"integral": integral, "first_moments": first, "second_moment": second}

