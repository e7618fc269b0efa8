"""Executable numerical checks on the spectral and kernel machinery.

Each check draws random instances from a seeded generator and reduces the
per-trial results in trial order, so a report is reproducible per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .kernel import KernelSpec, kernel_jets, validate_kernel_moments, vech_indices
from .spectral import (
    eigenprojection,
    projection_derivative,
    projection_second_derivative,
    spectral_frame,
    vech,
)


@dataclass
class CheckReport:
    name: str
    observed: dict
    tolerance: dict
    passed: bool
    details: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _random_symmetric(rng, d):
    A = rng.standard_normal((d, d))
    return 0.5 * (A + A.T)


def random_gapped_matrix(rng, d: int, r: int, min_gap: float = 0.5, tie: str | None = None) -> np.ndarray:
    """Symmetric matrix with lambda_r - lambda_{r+1} >= min_gap.

    ``tie`` repeats an eigenvalue inside the leading (``"top"``) or trailing
    (``"bottom"``) block so the grouped formulas are exercised.
    """
    top = np.sort(rng.uniform(0.0, 3.0, r))[::-1] + min_gap / 2
    bottom = np.sort(rng.uniform(-3.0, 0.0, d - r))[::-1] - min_gap / 2
    if tie == "top" and r >= 2:
        top[1] = top[0]
    if tie == "bottom" and d - r >= 2:
        bottom[1] = bottom[0]
    lam = np.concatenate([top, bottom])
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    H = Q @ np.diag(lam) @ Q.T
    return 0.5 * (H + H.T)


def _tie_for(k: int) -> str | None:
    return (None, "top", "bottom")[k % 3]


def check_kronecker_identity(trials: int = 1000, d: int = 4, r: int = 2, seed: int = 0, tol: float = 1e-9) -> CheckReport:
    """Q1(Sigma, D) g against M(x)^T vech(D), over random (Sigma, D, g)."""
    if not 1 <= r < d <= 6:
        raise ValueError("need 1 <= r < d <= 6")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(trials):
        S = random_gapped_matrix(rng, d, r, tie=_tie_for(k))
        D = _random_symmetric(rng, d)
        g = rng.standard_normal(d)
        lhs = projection_derivative(S, D, r) @ g
        rhs = spectral_frame(S, g, r).M_T @ vech(D)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckReport(
        name="kronecker_identity",
        observed={"max_residual": worst},
        tolerance={"max_residual": tol},
        passed=worst <= tol,
        details={"trials": trials, "d": d, "r": r, "seed": seed},
    )


def _slope(t, y):
    A = np.column_stack([np.log(t), np.ones_like(t)])
    return float(np.linalg.lstsq(A, np.log(y), rcond=None)[0][0])


def perturbation_remainders(S, D, r, steps):
    """First- and second-order Taylor remainders of L(S + tD) at each step t."""
    L0 = eigenprojection(S, r)
    Q1 = projection_derivative(S, D, r)
    Q2 = projection_second_derivative(S, D, r)
    r1, r2 = [], []
    for t in steps:
        Lt = eigenprojection(S + t * D, r)
        first = Lt - L0 - t * Q1
        r1.append(np.linalg.norm(first))
        r2.append(np.linalg.norm(first - 0.5 * t * t * Q2))
    return np.array(r1), np.array(r2)


def check_perturbation_orders(
    trials: int = 200,
    d: int = 4,
    r: int = 2,
    seed: int = 0,
    tol_first: float = 0.1,
    tol_second: float = 0.15,
) -> CheckReport:
    """Log-log slopes of the Taylor remainders of the eigenprojection.

    Steps run over [1e-3, 3e-2] in units of the eigen-gap, with D scaled to
    unit Frobenius norm; targets are 2 (first order) and 3 (with Q2).
    """
    if not 1 <= r < d <= 6:
        raise ValueError("need 1 <= r < d <= 6")
    rng = np.random.default_rng(seed)
    steps = np.geomspace(1e-3, 3e-2, 8)
    s1, s2 = [], []
    for k in range(trials):
        S = random_gapped_matrix(rng, d, r, min_gap=1.0, tie=_tie_for(k))
        D = _random_symmetric(rng, d)
        D /= np.linalg.norm(D)
        r1, r2 = perturbation_remainders(S, D, r, steps)
        s1.append(_slope(steps, r1))
        s2.append(_slope(steps, r2))
    m1, m2 = float(np.mean(s1)), float(np.mean(s2))
    return CheckReport(
        name="perturbation_orders",
        observed={"first_order_slope": m1, "second_order_slope": m2},
        tolerance={"first_order_slope": [2.0 - tol_first, 2.0 + tol_first],
                   "second_order_slope": [3.0 - tol_second, 3.0 + tol_second]},
        passed=abs(m1 - 2.0) <= tol_first and abs(m2 - 3.0) <= tol_second,
        details={"trials": trials, "d": d, "r": r, "seed": seed,
                 "first_slope_range": [min(s1), max(s1)], "second_slope_range": [min(s2), max(s2)]},
    )


def davis_kahan_bound(H, g, dH, dg, r):
    """(|p_hat - p|, 2 sqrt(2) ||dH||_F ||g|| / gap + ||dg||) for one jet pair."""
    d = H.shape[0]
    w = np.linalg.eigvalsh(H)[::-1]
    gap = w[r - 1] - w[r]
    p = np.linalg.norm(eigenprojection(H, r) @ g)
    p_hat = np.linalg.norm(eigenprojection(H + dH, r) @ (g + dg))
    bound = 2.0 * math.sqrt(2.0) * np.linalg.norm(dH) * np.linalg.norm(g) / gap + np.linalg.norm(dg)
    return abs(p_hat - p), bound


def check_davis_kahan_bound(trials: int = 1000, seed: int = 0, d: int = 3, r: int = 1) -> CheckReport:
    """Count violations of the eigenprojection perturbation bound on |p_hat - p|."""
    if not 1 <= r < d <= 6:
        raise ValueError("need 1 <= r < d <= 6")
    rng = np.random.default_rng(seed)
    violations = 0
    worst_ratio = 0.0
    for k in range(trials):
        H = random_gapped_matrix(rng, d, r, min_gap=0.2)
        g = rng.standard_normal(d)
        scale = 10.0 ** rng.uniform(-4, 0.5)
        dH = scale * _random_symmetric(rng, d)
        dg = 10.0 ** rng.uniform(-4, 0.5) * rng.standard_normal(d) * (k % 4 != 0)
        lhs, bound = davis_kahan_bound(H, g, dH, dg, r)
        violations += lhs > bound * (1 + 1e-12) + 1e-14
        worst_ratio = max(worst_ratio, lhs / bound if bound > 0 else 0.0)
    return CheckReport(
        name="davis_kahan_bound",
        observed={"violations": int(violations), "max_ratio": worst_ratio},
        tolerance={"violations": 0},
        passed=violations == 0,
        details={"trials": trials, "d": d, "r": r, "seed": seed},
    )


def check_kernel(dimension: int = 2, seed: int = 0, points: int = 200) -> CheckReport:
    """Moments of K and central-difference agreement of its derivatives."""
    spec = KernelSpec(dimension)
    mom = validate_kernel_moments(spec) if dimension <= 4 else None
    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.95, 0.95, (points, dimension))
    step = 1e-5
    _, G, Hv = kernel_jets(U)
    worst_g = worst_h = 0.0
    rows, cols = np.tril_indices(dimension)
    for i in range(dimension):
        e = np.zeros(dimension)
        e[i] = step
        vp, gp, _ = kernel_jets(U + e)
        vm, gm, _ = kernel_jets(U - e)
        worst_g = max(worst_g, float(np.max(np.abs((vp - vm) / (2 * step) - G[:, i]))))
        fd_col = (gp - gm) / (2 * step)
        vr, vc = vech_indices(dimension)
        for m, (a, b) in enumerate(zip(vr, vc)):
            if b == i:
                worst_h = max(worst_h, float(np.max(np.abs(fd_col[:, a] - Hv[:, m]))))
    observed = {"max_gradient_fd_error": worst_g, "max_hessian_fd_error": worst_h}
    tol = {"max_gradient_fd_error": 1e-6, "max_hessian_fd_error": 1e-5}
    ok = worst_g <= tol["max_gradient_fd_error"] and worst_h <= tol["max_hessian_fd_error"]
    if mom is not None:
        observed.update(integral=mom["integral"], max_first_moment=float(np.max(np.abs(mom["first_moments"]))),
                        second_moment=mom["second_moment"])
        tol.update(integral=1e-9, max_first_moment=1e-12)
        ok = ok and abs(mom["integral"] - 1) <= 1e-9 and observed["max_first_moment"] <= 1e-12 and mom["second_moment"] > 0
    return CheckReport(name="kernel", observed=observed, tolerance=tol, passed=bool(ok),
                       details={"dimension": dimension, "seed": seed, "points": points})


def run_all(seed: int = 0) -> list[CheckReport]:
    return [
        check_kernel(2, seed),
        check_kronecker_identity(1000, 4, 2, seed),
        check_perturbation_orders(200, 4, 2, seed),
        check_davis_kahan_bound(1000, seed),
    ]


def reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, default=float) + "\n"
