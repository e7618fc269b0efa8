"""Vernier estimate of the nonridgeness growth exponent, the flat-ridge test,
and a check of the linearized leading term of the nonridgeness error.

Ball suprema and infima are taken over grid nodes: a ball is a fixed stencil
of integer node offsets, and a whole-grid reduction over the stencil is a
loop of shifted array comparisons.

Scales
------
``"raw"`` works with p_hat as it is. ``"curvature"`` divides p_hat by
|lambda_{r+1}|, which turns it into a first-order distance to the zero set of
p_hat. In raw units the growth constant enters the vernier as
ln(C) / ln(r_n), which is large at practical sample sizes (C is tens for a
sharp log-density ridge), so the exponent estimate is only usable on the
curvature scale there.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .bootstrap import ZERO_RHO_PERCENTILE, EmptyCandidateSet, bootstrap_draws
from .field import RidgeField
from .kde import KernelDensity
from .spectral import spectral_frame, ridge_M_T

SCALES = ("raw", "curvature")

#: inflation of the exponent estimate when it feeds a bandwidth condition
EPS_PRIME = 0.1


@dataclass
class BetaPrimeEstimate:
    r_n: float
    R_n: float
    beta_hat: float
    scale: str = "raw"
    warnings: list = dc_field(default_factory=list)


@dataclass
class FlatnessTestResult:
    T_n: float
    phi_e: float
    reject: bool
    t_n: float
    radius: float
    rho_n: float
    candidate_count: int
    alpha: float
    B: int
    scale: str
    beta_prime: BetaPrimeEstimate = None

    @property
    def decision(self) -> str:
        return "reject" if self.reject else "retain"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["decision"] = self.decision
        return out


def ball_offsets(spacing, radius: float) -> np.ndarray:
    """Integer node offsets k with ||k * spacing|| <= radius."""
    spacing = np.asarray(spacing, dtype=float)
    reach = [int(math.floor(radius / s * (1 + 1e-12))) for s in spacing]
    ranges = [range(-m, m + 1) for m in reach]
    offs = np.array(list(itertools.product(*ranges)), dtype=int).reshape(-1, spacing.size)
    dist2 = np.sum((offs * spacing) ** 2, axis=1)
    return offs[dist2 <= radius * radius * (1 + 1e-12)]


def ball_reduce(values: np.ndarray, shape, offsets: np.ndarray, reducer, fill: float) -> np.ndarray:
    """For every node, reduce ``values`` over the nodes at the given offsets.

    Offsets falling outside the grid contribute ``fill``.
    """
    arr = np.asarray(values, dtype=float).reshape(shape)
    pad = np.abs(offsets).max(axis=0)
    padded = np.pad(arr, [(int(p), int(p)) for p in pad], constant_values=fill)
    out = np.full(shape, fill)
    for off in offsets:
        sl = tuple(slice(int(p + o), int(p + o + k)) for p, o, k in zip(pad, off, shape))
        out = reducer(out, padded[sl])
    return out.ravel()


def scaled_nonridgeness(field: RidgeField, scale: str = "raw") -> np.ndarray:
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    if scale == "raw":
        return field.p_hat
    with np.errstate(divide="ignore", invalid="ignore"):
        out = field.p_hat / np.abs(field.lambda_r1)
    return np.where(field.lambda_r1 < 0, out, np.inf)


def _gamma(n: int, h: float, d: int, k: int) -> float:
    return math.sqrt(math.log(n) / (n * h ** (d + 2 * k)))


def estimate_beta_prime(field: RidgeField, r_n: float | None = None, scale: str = "raw") -> BetaPrimeEstimate:
    """R_n = min over centers x of max_{|y - x| <= r_n} p(y); beta' = ln R_n / ln r_n.

    Centers are valid nodes with lambda_{r+1} < 0, ball members are valid nodes.
    The default radius is 1 / ln n.
    """
    if r_n is None:
        if field.n < 3:
            raise ValueError("default r_n = 1/ln n needs the sample size on the field")
        r_n = 1.0 / math.log(field.n)
    if not 0 < r_n < 1:
        raise ValueError(f"r_n must be in (0, 1), got {r_n}")
    spacing = field.grid.spacing
    if spacing.max() > r_n / 4 * (1 + 1e-12):
        raise ValueError(
            f"grid spacing {spacing.max():.4g} exceeds r_n/4 = {r_n / 4:.4g}; refine the grid"
        )
    p = scaled_nonridgeness(field, scale)
    vals = np.where(field.valid, p, -np.inf)
    ball_max = ball_reduce(vals, field.grid.shape, ball_offsets(spacing, r_n), np.maximum, -np.inf)
    centers = field.lambda_negative
    if not centers.any():
        raise ValueError("no valid node with lambda_{r+1} < 0 has a nonempty ball")
    R_n = float(ball_max[centers].min())
    if not R_n > 0:
        raise ValueError("R_n is zero: nonridgeness vanishes on a whole ball")
    beta = math.log(R_n) / math.log(r_n)
    warnings = []
    if beta <= 0:
        warnings.append(f"nonpositive exponent estimate {beta:.3g}: the raw scale is dominated by its constant")
    elif field.n > 2 and field.h > 0:
        cond = (_gamma(field.n, field.h, field.grid.d, 2) + field.h**2) ** (1.0 / beta)
        warnings.append(
            f"rate condition unverifiable: (gamma2 + h^2)^(1/beta') = {cond:.3g} against r_n = {r_n:.3g}"
        )
    return BetaPrimeEstimate(r_n=r_n, R_n=R_n, beta_hat=beta, scale=scale, warnings=warnings)


def _candidates(field: RidgeField, rho_n, scale: str, est: KernelDensity | None):
    p = scaled_nonridgeness(field, scale)
    neg = field.lambda_negative
    if rho_n == "tube":
        if scale != "curvature":
            raise ValueError("rho_n='tube' is a distance and needs scale='curvature'")
        rho = 0.5 * field.grid.cell_diagonal
    elif rho_n == "zero":
        pool = np.sort(p[neg])
        if pool.size == 0:
            raise EmptyCandidateSet("empty candidate set: no valid node with lambda_{r+1} < 0")
        rho = float(pool[max(1, math.ceil(ZERO_RHO_PERCENTILE * pool.size)) - 1])
    elif rho_n == "auto":
        from .bootstrap import default_rho_n

        if est is None or scale != "raw":
            raise ValueError("rho_n='auto' is defined on the raw scale and needs the estimator")
        rho = default_rho_n(est, "a")
    else:
        rho = float(rho_n)
        if rho < 0:
            raise ValueError("rho_n must be nonnegative")
    idx = np.flatnonzero(neg & (p <= rho))
    if idx.size == 0:
        raise EmptyCandidateSet(f"empty candidate set at rho_n={rho:.4g}: use a larger rho_n or a finer grid")
    return idx, rho


def flatness_test(
    est: KernelDensity,
    field: RidgeField,
    rho_n="tube",
    alpha: float = 0.1,
    B: int = 200,
    seed: int = 0,
    r_n: float | None = None,
    scale: str = "curvature",
    gradient=None,
    beta_field: RidgeField | None = None,
) -> FlatnessTestResult:
    """Test H0: the density gradient vanishes on the ridge.

    T_n is the largest, over candidate nodes x, of the smallest density
    gradient norm within rho_n^(1/t_n) of x, with t_n = beta' + 1. The
    critical value is the 1 - alpha multiplier-bootstrap quantile of the
    largest gradient deviation over the candidates. ``gradient`` replaces the
    node gradients (shape (N, d)) in T_n; ``beta_field`` supplies a finer
    field for the exponent estimate.
    """
    beta = estimate_beta_prime(beta_field if beta_field is not None else field, r_n, scale)
    t_n = beta.beta_hat + 1.0
    if t_n <= 0:
        raise ValueError(f"t_n = beta' + 1 = {t_n:.3g} is not positive")
    cand, rho = _candidates(field, rho_n, scale, est)
    radius = rho ** (1.0 / t_n) if rho > 0 else 0.0
    spacing = field.grid.spacing
    if radius < spacing.min():
        raise ValueError(f"ball radius {radius:.4g} is below the grid spacing {spacing.min():.4g}; refine the grid")
    d = field.grid.d
    G = field.raw_jets[:, 1:1 + d] if gradient is None else np.asarray(gradient, dtype=float)
    if G.shape != (field.grid.size, d):
        raise ValueError(f"gradient override must have shape {(field.grid.size, d)}")
    norms = np.where(field.valid, np.sqrt(np.sum(G * G, axis=1)), np.inf)
    ball_min = ball_reduce(norms, field.grid.shape, ball_offsets(spacing, radius), np.minimum, np.inf)
    T_n = float(ball_min[cand].max())
    draws = bootstrap_draws(est, field, cand, B, "multiplier", seed, alpha, statistic="gradient")
    phi = draws.t_quantile
    return FlatnessTestResult(
        T_n=T_n, phi_e=phi, reject=bool(T_n >= phi), t_n=t_n, radius=radius, rho_n=rho,
        candidate_count=int(cand.size), alpha=alpha, B=B, scale=scale, beta_prime=beta,
    )


def leading_term_diagnostic(est: KernelDensity, model, case: str, m: int = 256, estimate_jets=None) -> dict:
    """Compare sup p_hat on the true ridge with the sup of its linearization.

    Case (a) uses ||M(x)^T (d2 f_hat - d2 f)||, case (b) ||L(x)(grad f_hat - grad f)||,
    with M and L from the exact jets of ``model``. ``estimate_jets`` replaces
    the estimator jets at the ridge points, as a (value, grad, hess_vech) triple.
    """
    from .synthetic import jets as model_jets, true_ridge_points

    if case not in ("a", "b"):
        raise ValueError(f"case must be 'a' or 'b', got {case!r}")
    if not hasattr(model, "name"):
        raise TypeError("model must provide exact jets")
    pts = true_ridge_points(model, m, log_density=False)
    _, g_true, h_true = model_jets(model, pts, log_density=False)
    if estimate_jets is None:
        _, g_hat, h_hat = est.jets(pts)
    else:
        _, g_hat, h_hat = (np.asarray(a, dtype=float) for a in estimate_jets)
    from .spectral import unvech

    sup_p = 0.0
    sup_lin = 0.0
    for i in range(pts.shape[0]):
        H_hat = unvech(h_hat[i])
        w, U = np.linalg.eigh(H_hat)
        V = U[:, : est.d - 1]
        sup_p = max(sup_p, float(np.linalg.norm(V.T @ g_hat[i])))
        frame = spectral_frame(unvech(h_true[i]), g_true[i], r=1)
        if case == "a":
            lin = ridge_M_T(frame, g_true[i]) @ (h_hat[i] - h_true[i])
        else:
            lin = frame.L @ (g_hat[i] - g_true[i])
        sup_lin = max(sup_lin, float(np.linalg.norm(lin)))
    ratio = 1.0 if sup_p == 0 and sup_lin == 0 else (sup_p / sup_lin if sup_lin > 0 else math.inf)
    return {"sup_phat": sup_p, "sup_linear": sup_lin, "ratio": ratio, "case": case, "m": int(pts.shape[0])}


def write_report(path, record: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(record, indent=2, sort_keys=True, default=float) + "\n")
