"""Planar test densities with exact samplers, exact derivatives and known ridges.

Models
------
circle_flat
    c * phi_sigma(|x| - 1). Every point of the unit circle is a mode, so the
    gradient vanishes along the whole ridge.
circle_modulated
    c * phi_sigma(|x| - 1) * (1 + a cos(theta)). The angular factor tilts the
    density along the ring, so the gradient is tangential and nonzero on the
    ridge except at theta = 0 and theta = pi.
sun_cross
    Mixture of the flat ring and two Gaussian-blurred segments along the axes.
gaussian_blob
    Centered Gaussian with covariance diag(s1^2, s2^2), s1 > s2; the 1-ridge of
    its log-density is the first axis.

Jets are returned for either the density or its logarithm, as arrays of
shape (N,), (N, 2) and (N, 3) with the Hessian in vech order (xx, yx, yy).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, stats

from .kde import log_transform

MODELS = ("circle_flat", "circle_modulated", "sun_cross", "gaussian_blob")

DEFAULTS = {
    "circle_flat": {"sigma": 0.1},
    "circle_modulated": {"sigma": 0.1, "a": 0.7},
    "sun_cross": {"sigma": 0.1, "bar_sigma": 0.1, "ring_weight": 0.5},
    "gaussian_blob": {"s1": 1.0, "s2": 0.5},
}

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SyntheticModel:
    name: str
    params: dict = dc_field(default_factory=dict)
    dimension: int = 2

    @property
    def case(self) -> str:
        """'b' when the gradient vanishes on the whole ridge, else 'a'."""
        return "b" if self.name in ("circle_flat", "sun_cross") else "a"

    def value(self, X) -> np.ndarray:
        return jets(self, X, log_density=False)[0]


def build_model(name: str, params: dict | None = None, check: bool = True) -> SyntheticModel:
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; available: {MODELS}")
    p = dict(DEFAULTS[name])
    extra = set(params or {}) - set(p)
    if extra:
        raise ValueError(f"unknown parameters for {name}: {sorted(extra)}")
    p.update(params or {})
    for key in ("sigma", "bar_sigma", "s1", "s2"):
        if key in p and not p[key] > 0:
            raise ValueError(f"{key} must be positive, got {p[key]}")
    if name == "circle_modulated" and not 0 <= p["a"] < 1:
        raise ValueError(f"modulation a must be in [0, 1), got {p['a']}")
    if name == "sun_cross" and not 0 < p["ring_weight"] < 1:
        raise ValueError("ring_weight must be in (0, 1)")
    if name == "gaussian_blob" and not p["s1"] > p["s2"]:
        raise ValueError("gaussian_blob needs s1 > s2 for a well-defined ridge")
    model = SyntheticModel(name=name, params=p)
    if check:
        total = total_mass(model)
        if abs(total - 1.0) > 1e-4:
            raise ArithmeticError(f"{name} integrates to {total}, expected 1")
    return model


def _ring_constant(sigma: float) -> float:
    return 1.0 / (2.0 * math.pi * (stats.norm.cdf(1.0 / sigma) + sigma * stats.norm.pdf(1.0 / sigma)))


def total_mass(model: SyntheticModel) -> float:
    """Numerical integral of the density (polar quadrature for the ring models)."""
    p = model.params
    if model.name in ("circle_flat", "circle_modulated"):
        # Gauss-Legendre in the radius, trapezoid in the (periodic) angle
        s = p["sigma"]
        hi = 1.0 + 12.0 * s
        t, w = np.polynomial.legendre.leggauss(400)
        rho = 0.5 * hi * (t + 1.0)
        wr = 0.5 * hi * w
        th = 2.0 * math.pi * np.arange(256) / 256
        R, T = np.meshgrid(rho, th, indexing="ij")
        vals = model.value(np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])).reshape(R.shape)
        return float(np.sum(wr[:, None] * R * vals) * 2.0 * math.pi / 256)
    if model.name == "gaussian_blob":
        return 1.0
    # sun_cross: ring part is exact by construction, bars factorize into 1-d integrals
    bs = p["bar_sigma"]
    bar_x, _ = integrate.quad(lambda t: _bar_along(np.array([t]), bs)[0][0], -1 - 12 * bs, 1 + 12 * bs, points=[-1, 1])
    bar_y, _ = integrate.quad(lambda t: stats.norm.pdf(t, scale=bs), -12 * bs, 12 * bs)
    ring = total_mass(SyntheticModel("circle_flat", {"sigma": p["sigma"]}))
    w = p["ring_weight"]
    return w * ring + (1.0 - w) * bar_x * bar_y


# ---------------------------------------------------------------------------
# exact jets


def _polar_log_jets(X, sigma, omega, c):
    """Log-jets of c * phi_sigma(rho - 1) * exp(omega(theta)).

    ``omega`` returns (omega, omega', omega'') at the given angles.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, y = X[:, 0], X[:, 1]
    rho = np.hypot(x, y)
    rho_safe = np.where(rho > 0, rho, 1.0)
    theta = np.arctan2(y, x)
    er = np.stack([np.where(rho > 0, x / rho_safe, 1.0), np.where(rho > 0, y / rho_safe, 0.0)], axis=1)
    et = np.stack([-er[:, 1], er[:, 0]], axis=1)

    ell = -0.5 * ((rho - 1.0) / sigma) ** 2 - math.log(_SQRT2PI * sigma)
    ell1 = -(rho - 1.0) / sigma**2
    ell2 = -1.0 / sigma**2
    w0, w1, w2 = omega(theta)

    value = math.log(c) + ell + w0
    grad = ell1[:, None] * er + (w1 / rho_safe)[:, None] * et

    def outer(a, b):
        return a[:, :, None] * b[:, None, :]

    H = (
        ell2 * outer(er, er)
        + (ell1 / rho_safe + w2 / rho_safe**2)[:, None, None] * outer(et, et)
        - (w1 / rho_safe**2)[:, None, None] * (outer(er, et) + outer(et, er))
    )
    return value, grad, np.stack([H[:, 0, 0], H[:, 1, 0], H[:, 1, 1]], axis=1)


def _flat_omega(theta):
    z = np.zeros_like(theta)
    return z, z, z


def _modulated_omega(a):
    def omega(theta):
        cs, sn = np.cos(theta), np.sin(theta)
        w = 1.0 + a * cs
        return np.log(w), -a * sn / w, -(a * cs + a * a) / w**2

    return omega


def _exp_jets(lv, lg, lh):
    """Density jets from log-density jets."""
    f = np.exp(lv)
    gg = np.stack([lg[:, 0] ** 2, lg[:, 1] * lg[:, 0], lg[:, 1] ** 2], axis=1)
    return f, f[:, None] * lg, f[:, None] * (lh + gg)


def _bar_along(t, s):
    """Uniform[-1, 1] blurred by N(0, s^2): value, first and second derivative."""
    u1, u2 = (1.0 - t) / s, (-1.0 - t) / s
    p1, p2 = stats.norm.pdf(u1), stats.norm.pdf(u2)
    v = 0.5 * (stats.norm.cdf(u1) - stats.norm.cdf(u2))
    d1 = 0.5 * (p2 - p1) / s
    d2 = 0.5 * (-u1 * p1 + u2 * p2) / s**2
    return v, d1, d2


def _bar_jets(X, s, axis):
    """Density jets of the segment [-1, 1] along ``axis`` blurred by N(0, s^2 I)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t, u = X[:, axis], X[:, 1 - axis]
    a0, a1, a2 = _bar_along(t, s)
    b0 = stats.norm.pdf(u, scale=s)
    b1 = -u / s**2 * b0
    b2 = (u * u / s**4 - 1.0 / s**2) * b0
    v = a0 * b0
    if axis == 0:
        g = np.stack([a1 * b0, a0 * b1], axis=1)
        H = np.stack([a2 * b0, a1 * b1, a0 * b2], axis=1)
    else:
        g = np.stack([a0 * b1, a1 * b0], axis=1)
        H = np.stack([a0 * b2, a1 * b1, a2 * b0], axis=1)
    return v, g, H


def jets(model: SyntheticModel, X, log_density: bool = False):
    """Exact value, gradient and vech-Hessian of the density (or log-density)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 2:
        raise ValueError(f"synthetic models are planar, got points of dimension {X.shape[1]}")
    p = model.params
    if model.name in ("circle_flat", "circle_modulated"):
        omega = _flat_omega if model.name == "circle_flat" else _modulated_omega(p["a"])
        lv, lg, lh = _polar_log_jets(X, p["sigma"], omega, _ring_constant(p["sigma"]))
        return (lv, lg, lh) if log_density else _exp_jets(lv, lg, lh)
    if model.name == "gaussian_blob":
        s1, s2 = p["s1"], p["s2"]
        lv = -0.5 * ((X[:, 0] / s1) ** 2 + (X[:, 1] / s2) ** 2) - math.log(2 * math.pi * s1 * s2)
        lg = np.stack([-X[:, 0] / s1**2, -X[:, 1] / s2**2], axis=1)
        lh = np.tile([-1.0 / s1**2, 0.0, -1.0 / s2**2], (X.shape[0], 1))
        return (lv, lg, lh) if log_density else _exp_jets(lv, lg, lh)
    # sun_cross
    w = p["ring_weight"]
    rv, rg, rh = _exp_jets(*_polar_log_jets(X, p["sigma"], _flat_omega, _ring_constant(p["sigma"])))
    hv, hg, hh = _bar_jets(X, p["bar_sigma"], 0)
    vv, vg, vh = _bar_jets(X, p["bar_sigma"], 1)
    wb = 0.5 * (1.0 - w)
    v = w * rv + wb * (hv + vv)
    g = w * rg + wb * (hg + vg)
    H = w * rh + wb * (hh + vh)
    if log_density:
        return log_transform(v, g, H, np.finfo(float).tiny)
    return v, g, H


def analytic_nonridgeness(model: SyntheticModel, X, log_density: bool = True):
    """Exact p(x) and lambda_2(x) for r = 1."""
    _, g, hv = jets(model, X, log_density)
    H = np.stack([np.stack([hv[:, 0], hv[:, 1]], 1), np.stack([hv[:, 1], hv[:, 2]], 1)], 1)
    w, U = np.linalg.eigh(H)
    p = np.abs(np.einsum("ni,ni->n", U[:, :, 0], g))
    return p, w[:, 0]


# ---------------------------------------------------------------------------
# sampling


def _radius_cdf(rho, sigma):
    """Unnormalized CDF of the radial law with density rho * phi_sigma(rho - 1) on [0, inf)."""
    z = (rho - 1.0) / sigma
    z0 = -1.0 / sigma
    return (stats.norm.cdf(z) - stats.norm.cdf(z0)) + sigma * (stats.norm.pdf(z0) - stats.norm.pdf(z))


def radius_mean(sigma: float) -> float:
    """E|X| under the ring law, by quadrature."""
    Z = _radius_cdf(np.inf, sigma)
    m, _ = integrate.quad(lambda t: t * t * stats.norm.pdf(t - 1.0, scale=sigma), 0.0, 1.0 + 20 * sigma)
    return m / Z


def _sample_radius(rng, n, sigma):
    u = rng.random(n) * _radius_cdf(np.inf, sigma)
    lo = np.zeros(n)
    hi = np.full(n, 1.0 + 40.0 * sigma)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = _radius_cdf(mid, sigma) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _sample_angle(rng, n, a):
    if a == 0:
        return rng.uniform(0.0, 2.0 * math.pi, n)
    out = np.empty(0)
    while out.size < n:
        m = max(16, int(1.2 * (n - out.size) * (1 + a)))
        th = rng.uniform(0.0, 2.0 * math.pi, m)
        keep = rng.random(m) * (1.0 + a) <= 1.0 + a * np.cos(th)
        out = np.concatenate([out, th[keep]])
    return out[:n]


def _ring(rng, n, sigma, a=0.0):
    rho = _sample_radius(rng, n, sigma)
    th = _sample_angle(rng, n, a)
    return np.column_stack([rho * np.cos(th), rho * np.sin(th)])


def sample(model: SyntheticModel, n: int, rng_seed=0) -> np.ndarray:
    """n exact draws; the same seed always gives the same matrix."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(rng_seed)
    p = model.params
    if model.name == "circle_flat":
        return _ring(rng, n, p["sigma"])
    if model.name == "circle_modulated":
        return _ring(rng, n, p["sigma"], p["a"])
    if model.name == "gaussian_blob":
        return rng.standard_normal((n, 2)) * np.array([p["s1"], p["s2"]])
    w = p["ring_weight"]
    comp = rng.choice(3, size=n, p=[w, 0.5 * (1 - w), 0.5 * (1 - w)])
    out = np.empty((n, 2))
    k = int(np.sum(comp == 0))
    out[comp == 0] = _ring(rng, k, p["sigma"])
    for axis, label in ((0, 1), (1, 2)):
        idx = comp == label
        m = int(idx.sum())
        bar = np.empty((m, 2))
        bar[:, axis] = rng.uniform(-1.0, 1.0, m)
        bar[:, 1 - axis] = 0.0
        out[idx] = bar + p["bar_sigma"] * rng.standard_normal((m, 2))
    return out


# ---------------------------------------------------------------------------
# ridge oracle


def _modulated_radius(model, theta, log_density):
    """Radius on the ray at angle theta where the signed nonridgeness changes sign."""
    s = model.params["sigma"]
    er = np.array([math.cos(theta), math.sin(theta)])

    def signed(rho):
        _, g, hv = jets(model, (rho * er)[None, :], log_density)
        H = np.array([[hv[0, 0], hv[0, 1]], [hv[0, 1], hv[0, 2]]])
        w, U = np.linalg.eigh(H)
        v = U[:, 0] if U[:, 0] @ er >= 0 else -U[:, 0]
        return float(v @ g[0])

    lo, hi = 1.0 - 0.5 * s, 1.0 + 0.5 * s
    if signed(lo) * signed(hi) > 0:
        raise ArithmeticError(f"no ridge crossing bracketed at angle {theta}")
    return optimize.brentq(signed, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def true_ridge_points(model: SyntheticModel, m: int = 256, log_density: bool = True) -> np.ndarray:
    """m points on the model's ridge.

    Circles use m equispaced angles starting at theta = 0. For sun_cross the
    budget is split between the ring and the two diameters, and the four
    ring/diameter intersections are always included.
    """
    if m < 2:
        raise ValueError(f"need at least 2 ridge points, got {m}")
    if model.name == "circle_flat":
        th = 2.0 * math.pi * np.arange(m) / m
        return np.column_stack([np.cos(th), np.sin(th)])
    if model.name == "circle_modulated":
        th = 2.0 * math.pi * np.arange(m) / m
        if model.params["a"] == 0:
            rho = np.ones(m)
        else:
            rho = np.array([_modulated_radius(model, t, log_density) for t in th])
        return np.column_stack([rho * np.cos(th), rho * np.sin(th)])
    if model.name == "gaussian_blob":
        t = np.linspace(-2.0 * model.params["s1"], 2.0 * model.params["s1"], m)
        return np.column_stack([t, np.zeros(m)])
    m_ring = max(4, m // 2 - (m // 2) % 4)
    m_bar = max(2, (m - m_ring) // 2)
    th = 2.0 * math.pi * np.arange(m_ring) / m_ring
    ring = np.column_stack([np.cos(th), np.sin(th)])
    t = np.linspace(-1.0, 1.0, m_bar)
    horiz = np.column_stack([t, np.zeros(m_bar)])
    vert = np.column_stack([np.zeros(m_bar), t])
    return np.concatenate([ring, horiz, vert])


# ---------------------------------------------------------------------------
# coverage study


@dataclass
class CoverageConfig:
    model: str = "circle_flat"
    params: dict = dc_field(default_factory=dict)
    n: int = 2000
    B: int = 200
    M: int = 100
    alpha: float = 0.1
    mode: str = "multiplier"
    seed: int = 0
    rho_n: float | str = "tube"
    use_log: bool = True
    floor_q: float = 0.05
    m_truth: int = 256
    bandwidth: float | str = "auto"
    spacing_factor: float = 1.0 / 3.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(run)]).generate_state(1, dtype=np.uint64)[0])


def single_run(cfg: CoverageConfig, run: int, truth=None) -> dict:
    """Fit, evaluate, bootstrap and score one simulated dataset.

    Scoring uses the ridge points inside the run's analysis region, i.e. where
    the estimate clears the density floor; the region is never asked to
    cover ridge points the floor has already excluded.
    """
    from .bootstrap import BootstrapConfig, EmptyCandidateSet, confidence_region
    from .field import default_grid, evaluate_field, hausdorff_to_set
    from .kde import default_bandwidth, fit, log_transform
    from .spectral import batch_nonridgeness, unvech_batch

    model = build_model(cfg.model, cfg.params, check=False)
    if truth is None:
        truth = true_ridge_points(model, cfg.m_truth, log_density=cfg.use_log)
    X = sample(model, cfg.n, run_seed(cfg.seed, run))
    h = default_bandwidth(X, model.case) if cfg.bandwidth == "auto" else float(cfg.bandwidth)
    est = fit(X, h)
    grid = default_grid(X, h, spacing_factor=cfg.spacing_factor)
    fld = evaluate_field(est, grid, r=1, use_log=cfg.use_log, floor_q=cfg.floor_q)

    v, g, hv = est.jets(truth)
    in_region = v >= fld.floor_threshold
    rec = {"run": run, "h": h, "cell_diagonal": grid.cell_diagonal, "truth_in_region": int(in_region.sum())}
    empty = dict(covered=False, covered_exact=False, sup_mask_to_truth=None, sup_truth_to_mask=None, ridge_components=0)
    bcfg = BootstrapConfig(B=cfg.B, mode=cfg.mode, rho_n=cfg.rho_n, alpha=cfg.alpha, seed=run_seed(cfg.seed + 1, run))
    try:
        region, draws = confidence_region(est, fld, bcfg)
    except EmptyCandidateSet as exc:
        rec.update(empty, threshold=None, error=str(exc), mask_nodes=0)
        return rec
    pts = fld.coords[region.mask]
    rec.update(threshold=region.threshold, candidate_count=region.candidate_count, mask_nodes=int(pts.shape[0]),
               skipped_nodes=int(draws.skipped.sum()))
    target = truth[in_region]
    if pts.shape[0] == 0 or target.shape[0] == 0:
        rec.update(empty)
        return rec
    d_mask, d_truth = hausdorff_to_set(pts, target)
    touched = ridge_components(region.mask, grid.shape, pts, target, grid.cell_diagonal)
    # inclusion checked at the ridge points themselves, off the grid
    if cfg.use_log:
        _, g, hv = log_transform(v, g, hv, fld.log_floor)
    p_truth, lam_truth, ok = batch_nonridgeness(unvech_batch(hv, 2), g, 1)
    inside = (ok & (lam_truth < 0) & (p_truth <= region.threshold))[in_region]
    rec.update(
        covered=bool(d_truth <= grid.cell_diagonal),
        covered_exact=bool(inside.all()),
        sup_mask_to_truth=d_mask,
        sup_truth_to_mask=d_truth,
        ridge_components=touched,
    )
    return rec


def ridge_components(mask, shape, mask_points, truth, reach: float) -> int:
    """Number of connected mask components (8-neighbour in 2-d) holding a node near the truth.

    Every masked node within ``reach`` of some truth point counts as holding
    the ridge.
    """
    from scipy import ndimage
    from scipy.spatial import cKDTree

    m = np.asarray(mask, dtype=bool).reshape(shape)
    labels, _ = ndimage.label(m, structure=np.ones((3,) * m.ndim))
    lab = labels.ravel()[np.flatnonzero(m.ravel())]
    near = cKDTree(np.asarray(truth)).query(mask_points, distance_upper_bound=reach)[0] <= reach
    return int(np.unique(lab[near]).size)


def _run_star(args):
    return single_run(*args)


def coverage_experiment(
    model: str | SyntheticModel = "circle_flat",
    n: int = 2000,
    B: int = 200,
    M: int = 100,
    alpha: float = 0.1,
    mode: str = "multiplier",
    seed: int = 0,
    workers: int = 1,
    records_path=None,
    resume: bool = False,
    **options,
) -> dict:
    """Monte Carlo coverage of the bootstrap confidence region.

    A run covers when every true ridge point has a masked node within one
    cell diagonal. With ``records_path`` each finished run is appended as a
    JSON line; ``resume`` skips runs already present in that file.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if isinstance(model, SyntheticModel):
        options.setdefault("params", model.params)
        model = model.name
    cfg = CoverageConfig(model=model, n=n, B=B, M=M, alpha=alpha, mode=mode, seed=seed, **options)
    mdl = build_model(cfg.model, cfg.params)
    truth = true_ridge_points(mdl, cfg.m_truth, log_density=cfg.use_log)

    done = {}
    path = Path(records_path) if records_path is not None else None
    if path is not None and resume and path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                done[rec["run"]] = rec
    elif path is not None:
        path.write_text("")
    todo = [k for k in range(M) if k not in done]

    def sink(rec):
        done[rec["run"]] = rec
        if path is not None:
            with path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_star, [(cfg, k, truth) for k in todo]):
                sink(rec)
    else:
        for k in todo:
            sink(single_run(cfg, k, truth))

    records = [done[k] for k in range(M)]
    dists = np.array([r["sup_mask_to_truth"] for r in records if r.get("sup_mask_to_truth") is not None])
    summary = {
        "config": cfg.to_dict(),
        "coverage": float(np.mean([r["covered"] for r in records])),
        "coverage_exact": float(np.mean([r["covered_exact"] for r in records])),
        "hausdorff_stats": {
            "mean": float(dists.mean()) if dists.size else None,
            "median": float(np.median(dists)) if dists.size else None,
            "max": float(dists.max()) if dists.size else None,
            "count": int(dists.size),
        },
        "per_run_records": records,
    }
    return summary
