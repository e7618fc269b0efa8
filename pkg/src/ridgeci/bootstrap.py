"""Multiplier and empirical bootstrap of sup |p_hat^b - p_hat| over a candidate set.

Both bootstrap estimates are linear in a per-point weight vector. With W the
sparse matrix of per-point jet contributions at the candidate nodes,

    multiplier:  f^e = f + W (e - mean(e))
    empirical:   f^* = f + W (c - 1),  c = resample counts,

so all replicates of a batch come out of one sparse product. Replicate b
draws from its own Philox stream keyed by (seed, b), which makes the draws
independent of batching and of execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .field import RidgeField, sublevel_region, transformed_jets
from .kde import KernelDensity, center_weights
from .spectral import batch_nonridgeness, unvech_batch

SCHEMA = "ridgeci.bootstrap/1"

MODES = ("multiplier", "empirical")

RHO_TOKENS = ("zero", "tube", "auto")

#: 1st percentile of valid p_hat stands in for the measure-zero set S_hat(0)
ZERO_RHO_PERCENTILE = 0.01

# bound on candidates * components * replicates held at once
_BATCH_ELEMS = 4_000_000


class EmptyCandidateSet(RuntimeError):
    pass


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 500
    mode: str = "multiplier"
    rho_n: float | str = "zero"
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if isinstance(self.rho_n, str):
            if self.rho_n not in RHO_TOKENS:
                raise ValueError(f"rho_n must be a number or one of {RHO_TOKENS}, got {self.rho_n!r}")
        elif self.rho_n < 0:
            raise ValueError("rho_n must be nonnegative")

    def to_dict(self) -> dict:
        return {"B": self.B, "mode": self.mode, "rho_n": self.rho_n, "alpha": self.alpha, "seed": self.seed}


@dataclass
class BootstrapDraws:
    draws: np.ndarray
    t_quantile: float
    alpha: float
    skipped: np.ndarray = dc_field(default=None, repr=False)


@dataclass
class ConfidenceRegion:
    threshold: float
    mask: np.ndarray
    alpha: float
    mode: str
    candidate_count: int
    rho_n: float = 0.0


def replicate_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(index)])))


def default_rho_n(est: KernelDensity, case_hint: str = "a") -> float:
    """log n * gamma_{n,h}^{(k)}, with k = 2 for case (a) and k = 1 for case (b)."""
    k = {"a": 2, "b": 1}.get(case_hint)
    if k is None:
        raise ValueError(f"case_hint must be 'a' or 'b', got {case_hint!r}")
    n, d, h = est.n, est.d, est.h
    gamma = math.sqrt(math.log(n) / (n * h ** (d + 2 * k)))
    return math.log(n) * gamma


def resolve_rho(field: RidgeField, rho_n, est: KernelDensity | None = None) -> float:
    if rho_n == "zero":
        pool = np.sort(field.p_hat[field.lambda_negative])
        if pool.size == 0:
            raise EmptyCandidateSet("empty candidate set: no valid node with lambda_{r+1} < 0")
        k = max(1, math.ceil(ZERO_RHO_PERCENTILE * pool.size))
        return float(pool[k - 1])
    if rho_n == "auto":
        if est is None:
            raise ValueError("rho_n='auto' needs the estimator")
        return default_rho_n(est, "a")
    return float(rho_n)


def ridge_tube(field: RidgeField) -> np.ndarray:
    """Nodes within half a cell diagonal of S_hat, to first order.

    Moving a distance delta along the trailing eigenvector changes the
    projected gradient by about |lambda_{r+1}| delta, so p_hat / |lambda_{r+1}|
    estimates the distance from a node to the zero set of p_hat. Every point
    of that zero set has a node within half a diagonal, and that node passes.
    """
    neg = field.lambda_negative
    dist = np.full(field.p_hat.shape, np.inf)
    dist[neg] = field.p_hat[neg] / np.abs(field.lambda_r1[neg])
    return neg & (dist <= 0.5 * field.grid.cell_diagonal)


def candidate_set(field: RidgeField, rho_n, est: KernelDensity | None = None) -> np.ndarray:
    """Node indices of S_hat(rho_n); ``"tube"`` gives the grid cover of S_hat."""
    if rho_n == "tube":
        idx = np.flatnonzero(ridge_tube(field))
        if idx.size == 0:
            raise EmptyCandidateSet("empty candidate set: no node lies near the estimated ridge")
        return idx
    eps = resolve_rho(field, rho_n, est)
    idx = np.flatnonzero(sublevel_region(field, eps))
    if idx.size == 0:
        raise EmptyCandidateSet(
            f"empty candidate set at rho_n={eps:.4g}: use a larger rho_n or a finer grid"
        )
    return idx


def bootstrap_quantile(draws, alpha: float) -> float:
    """The ceil(B(1 - alpha))-th smallest draw (1-based)."""
    x = np.sort(np.asarray(draws, dtype=float))
    if x.size == 0:
        raise ValueError("no bootstrap draws")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    k = math.ceil(round(x.size * (1.0 - alpha), 9))
    k = min(max(k, 1), x.size)
    return float(x[k - 1])


class _Engine:
    """Bootstrap jets at a fixed set of candidate nodes."""

    def __init__(self, est: KernelDensity, field: RidgeField, candidates, gap_tol=None):
        self.est = est
        self.field = field
        self.cand = np.asarray(candidates)
        if self.cand.size == 0:
            raise EmptyCandidateSet("empty candidate set")
        self.d = est.d
        self.nc = est.n_components
        self.gap_tol = gap_tol
        X = field.coords[self.cand]
        self.W = est.contributions(X)
        self.base = field.raw_jets[self.cand]
        self.base_p = field.p_hat[self.cand]

    def _jets(self, delta: np.ndarray) -> np.ndarray:
        """delta: (n, b) centered weights -> (b, K, nc) jets."""
        K = self.cand.size
        inc = np.asarray(self.W @ delta).reshape(K, self.nc, -1)
        return np.transpose(self.base[:, :, None] + inc, (2, 0, 1))

    def stats(self, delta: np.ndarray, statistic: str):
        jets = self._jets(delta)
        b, K, _ = jets.shape
        if statistic == "gradient":
            # density gradient, whatever transform the field uses
            inc = jets[..., 1:1 + self.d] - self.base[None, :, 1:1 + self.d]
            dev = np.sqrt(np.sum(inc * inc, axis=-1))
            return dev.max(axis=1), np.zeros(b, dtype=int)
        _, g, hv = transformed_jets(jets, self.d, self.field.use_log, self.field.log_floor)
        p, _, ok = batch_nonridgeness(
            unvech_batch(hv.reshape(b * K, -1), self.d), g.reshape(b * K, self.d), self.field.r, self.gap_tol
        )
        dev = np.abs(p.reshape(b, K) - self.base_p[None])
        ok = ok.reshape(b, K)
        skipped = (~ok).sum(axis=1)
        if np.any(skipped == K):
            raise FloatingPointError("every candidate lost the eigen-gap in a bootstrap replicate")
        return np.where(ok, dev, -np.inf).max(axis=1), skipped

    def batch_size(self) -> int:
        return max(1, _BATCH_ELEMS // (self.cand.size * self.nc))


def _weights(mode: str, rng: np.random.Generator, n: int) -> np.ndarray:
    if mode == "multiplier":
        return center_weights(rng.standard_normal(n))
    idx = rng.integers(0, n, size=n)
    return np.bincount(idx, minlength=n).astype(float) - 1.0


def _single(est, field, candidates, delta, statistic):
    eng = _Engine(est, field, candidates)
    stat, _ = eng.stats(delta[:, None], statistic)
    return float(stat[0])


def multiplier_sup_draw(est, field, candidates, rng=None, weights=None) -> float:
    """One draw of sup |p^e - p| over the candidates; ``weights`` forces e."""
    e = rng.standard_normal(est.n) if weights is None else np.asarray(weights, dtype=float)
    if e.shape != (est.n,):
        raise ValueError(f"multiplier weights have length {e.size}, sample size is {est.n}")
    return _single(est, field, candidates, center_weights(e), "nonridgeness")


def empirical_sup_draw(est, field, candidates, rng=None, indices=None) -> float:
    """One draw of sup |p^* - p| over the candidates; ``indices`` forces the resample."""
    idx = rng.integers(0, est.n, size=est.n) if indices is None else np.asarray(indices)
    if idx.shape != (est.n,) or idx.min() < 0 or idx.max() >= est.n:
        raise ValueError("resample indices must be n values in [0, n)")
    delta = np.bincount(idx, minlength=est.n).astype(float) - 1.0
    return _single(est, field, candidates, delta, "nonridgeness")


def grad_sup_draw(est, field, candidates, rng=None, weights=None) -> float:
    """One multiplier draw of sup ||grad f^e - grad f|| over the candidates (density scale)."""
    e = rng.standard_normal(est.n) if weights is None else np.asarray(weights, dtype=float)
    if e.shape != (est.n,):
        raise ValueError(f"multiplier weights have length {e.size}, sample size is {est.n}")
    return _single(est, field, candidates, center_weights(e), "gradient")


def bootstrap_draws(
    est: KernelDensity,
    field: RidgeField,
    candidates,
    B: int,
    mode: str = "multiplier",
    seed: int = 0,
    alpha: float = 0.1,
    statistic: str = "nonridgeness",
    stream: int = 0,
    identity: bool = False,
) -> BootstrapDraws:
    """All B sup statistics; replicate b uses ``replicate_rng(seed, b, stream)``.

    ``identity`` forces every replicate to reproduce the sample (constant
    multiplier weights, or the resample that draws each point once).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    eng = _Engine(est, field, candidates)
    draws = np.empty(B)
    skipped = np.zeros(B, dtype=int)
    step = eng.batch_size()
    for b0 in range(0, B, step):
        bs = range(b0, min(B, b0 + step))
        if identity:
            delta = np.zeros((est.n, len(bs)))
        else:
            delta = np.column_stack([_weights(mode, replicate_rng(seed, b, stream), est.n) for b in bs])
        s, k = eng.stats(delta, statistic)
        draws[b0:b0 + len(bs)] = s
        skipped[b0:b0 + len(bs)] = k
    return BootstrapDraws(draws=draws, t_quantile=bootstrap_quantile(draws, alpha), alpha=alpha, skipped=skipped)


def confidence_region(est: KernelDensity, field: RidgeField, config: BootstrapConfig, identity: bool = False):
    """S_hat(t_{1-alpha}) with t from B bootstrap draws over S_hat(rho_n)."""
    cand = candidate_set(field, config.rho_n, est)
    rho = float(field.p_hat[cand].max()) if config.rho_n == "tube" else resolve_rho(field, config.rho_n, est)
    bd = bootstrap_draws(est, field, cand, config.B, config.mode, config.seed, config.alpha, identity=identity)
    mask = sublevel_region(field, bd.t_quantile)
    region = ConfidenceRegion(
        threshold=bd.t_quantile, mask=mask, alpha=config.alpha, mode=config.mode,
        candidate_count=int(cand.size), rho_n=rho,
    )
    return region, bd


def write_draws(path, config: BootstrapConfig, draws: BootstrapDraws, region: ConfidenceRegion | None = None):
    rec = {
        "schema": SCHEMA,
        "config": config.to_dict(),
        "draws": [float(x) for x in draws.draws],
        "threshold": draws.t_quantile,
        "skipped_nodes": [int(k) for k in draws.skipped],
    }
    if region is not None:
        rec["candidate_count"] = region.candidate_count
        rec["rho_n"] = region.rho_n
        rec["mask_size"] = int(region.mask.sum())
    Path(path).write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")


def read_draws(path) -> dict:
    rec = json.loads(Path(path).read_text())
    if rec.get("schema") != SCHEMA:
        raise ValueError(f"unexpected bootstrap schema {rec.get('schema')!r}")
    return rec
