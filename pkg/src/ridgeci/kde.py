"""Kernel density estimator with exact derivative jets.

Queries only touch sample points in the 3^d bucket cells around the query,
because the kernel vanishes outside [-1, 1]^d. Per-query sums are reduced
with numpy's pairwise summation over a power-of-two padded buffer, so a
node's jet does not depend on which other nodes were evaluated with it.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .kernel import KernelSpec, kernel_jets, vech_indices

#: queries per block in batched evaluation; bounds the padded buffer size
_QUERY_BLOCK = 1024


@dataclass(frozen=True)
class DensityJet:
    value: float
    gradient: np.ndarray
    hess_vech: np.ndarray

    @property
    def hessian(self) -> np.ndarray:
        d = self.gradient.size
        rows, cols = vech_indices(d)
        H = np.empty((d, d))
        H[rows, cols] = self.hess_vech
        H[cols, rows] = self.hess_vech
        return H


class BucketGrid:
    """Uniform bucket grid with cell size ``cell`` over a fixed point set."""

    def __init__(self, points: np.ndarray, cell: float):
        self.cell = float(cell)
        self.origin = points.min(axis=0)
        cells = np.floor((points - self.origin) / self.cell).astype(np.int64)
        self.dims = cells.max(axis=0) + 1
        self.strides = np.cumprod(np.concatenate([[1], self.dims[:-1]])).astype(np.int64)
        keys = cells @ self.strides
        self.perm = np.argsort(keys, kind="stable")
        self.keys = keys[self.perm]
        d = points.shape[1]
        self.offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)

    def candidate_pairs(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(query index, point index) for every point in the neighbouring cells.

        Pairs come out grouped by query, in offset order, then by bucket order.
        """
        qcell = np.floor((queries - self.origin) / self.cell).astype(np.int64)
        m = queries.shape[0]
        q_all, start_all, count_all = [], [], []
        for off in self.offsets:
            nc = qcell + off
            inside = np.all((nc >= 0) & (nc < self.dims), axis=1)
            key = nc @ self.strides
            lo = np.searchsorted(self.keys, key, side="left")
            hi = np.searchsorted(self.keys, key, side="right")
            cnt = np.where(inside, hi - lo, 0)
            q_all.append(np.arange(m))
            start_all.append(lo)
            count_all.append(cnt)
        q = np.stack(q_all, axis=1).ravel()
        start = np.stack(start_all, axis=1).ravel()
        count = np.stack(count_all, axis=1).ravel()
        total = int(count.sum())
        qrep = np.repeat(q, count)
        first = np.cumsum(count) - count
        within = np.arange(total) - np.repeat(first, count)
        pidx = self.perm[np.repeat(start, count) + within]
        return qrep, pidx


class KernelDensity:
    """Immutable kernel density estimator handle.

    Build with :func:`fit`.
    """

    def __init__(self, points: np.ndarray, h: float, kernel: KernelSpec):
        pts = np.array(points, dtype=float, copy=True)
        pts.flags.writeable = False
        self.points = pts
        self.n, self.d = pts.shape
        self.h = float(h)
        self.kernel = kernel
        self.index = BucketGrid(pts, self.h)
        self._n_hess = self.d * (self.d + 1) // 2

    def __repr__(self):
        return f"KernelDensity(n={self.n}, d={self.d}, h={self.h:.6g})"

    @property
    def n_components(self) -> int:
        return 1 + self.d + self._n_hess

    def _pairs(self, X):
        qrep, pidx = self.index.candidate_pairs(X)
        u = (X[qrep] - self.points[pidx]) / self.h
        keep = np.all(np.abs(u) < 1.0, axis=1)
        return qrep[keep], pidx[keep], u[keep]

    def _scales(self) -> np.ndarray:
        nh = self.n * self.h**self.d
        return np.concatenate([
            [1.0 / nh],
            np.full(self.d, 1.0 / (nh * self.h)),
            np.full(self._n_hess, 1.0 / (nh * self.h**2)),
        ])

    def _pair_components(self, u):
        v, g, hv = kernel_jets(u)
        return np.column_stack([v, g, hv])

    def jets(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched value, gradient and vech-Hessian of the estimate at rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"query dimension {X.shape[1]} != sample dimension {self.d}")
        m = X.shape[0]
        out = np.zeros((m, self.n_components))
        for b0 in range(0, m, _QUERY_BLOCK):
            Xb = X[b0:b0 + _QUERY_BLOCK]
            qrep, _, u = self._pairs(Xb)
            if qrep.size == 0:
                continue
            comps = self._pair_components(u)
            mb = Xb.shape[0]
            cnt = np.bincount(qrep, minlength=mb)
            pos = np.arange(qrep.size) - (np.cumsum(cnt) - cnt)[qrep]
            width = max(8, 1 << int(cnt.max() - 1).bit_length())
            buf = np.zeros((self.n_components, mb, width))
            buf[:, qrep, pos] = comps.T
            out[b0:b0 + mb] = buf.sum(axis=-1).T
        out *= self._scales()
        return out[:, 0], out[:, 1:1 + self.d], out[:, 1 + self.d:]

    def contributions(self, X) -> sparse.csr_matrix:
        """Per-sample-point jet contributions at the rows of X.

        Returns W of shape (m * n_components, n) with row ``i*n_components + c``
        holding component c of the scaled kernel jet of every sample point at
        X[i]; ``W @ ones(n)`` reproduces the jets up to summation order.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        nc = self.n_components
        qrep, pidx, u = self._pairs(X)
        comps = self._pair_components(u) * self._scales()
        rows = (qrep[:, None] * nc + np.arange(nc)[None, :]).ravel()
        cols = np.repeat(pidx, nc)
        W = sparse.csr_matrix((comps.ravel(), (rows, cols)), shape=(X.shape[0] * nc, self.n))
        W.sort_indices()
        return W

    def support_count(self, x) -> int:
        x = np.asarray(x, dtype=float).reshape(1, self.d)
        qrep, _, _ = self._pairs(x)
        return int(qrep.size)

    def values_at_sample(self) -> np.ndarray:
        return self.jets(self.points)[0]


def fit(sample, h: float, kernel: KernelSpec | None = None) -> KernelDensity:
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 2:
        raise ValueError("sample must be an n x d array")
    n, d = sample.shape
    if n < 2:
        raise ValueError(f"need at least 2 sample points, got {n}")
    if not np.all(np.isfinite(sample)):
        raise ValueError("sample contains non-finite coordinates")
    if not h > 0:
        raise ValueError(f"nonpositive bandwidth: {h}")
    kernel = kernel or KernelSpec(d)
    if kernel.dimension != d:
        raise ValueError(f"kernel dimension {kernel.dimension} != sample dimension {d}")
    return KernelDensity(sample, h, kernel)


def _to_jet(v, g, hv, i=0) -> DensityJet:
    return DensityJet(float(v[i]), g[i].copy(), hv[i].copy())


def jet_at(est: KernelDensity, x) -> DensityJet:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(x)):
        raise ValueError("query point must be finite")
    return _to_jet(*est.jets(x))


def center_weights(e: np.ndarray) -> np.ndarray:
    """e - mean(e), exactly zero for a constant vector."""
    e = np.asarray(e, dtype=float)
    shift = e[..., :1]
    dev = e - shift
    mean_dev = np.array([math.fsum(row) for row in dev.reshape(-1, e.shape[-1])]).reshape(shift.shape)
    return dev - mean_dev / e.shape[-1]


def multiplier_jet_at(est: KernelDensity, x, e) -> DensityJet:
    """Jet of f^e(x) = f(x) + (1/n) sum_i e_i (K_h(x - X_i) - f(x))."""
    e = np.asarray(e, dtype=float)
    if e.shape != (est.n,):
        raise ValueError(f"multiplier weights have length {e.size}, sample size is {est.n}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    v, g, hv = est.jets(x)
    W = est.contributions(x)
    delta = W @ center_weights(e)
    base = np.concatenate([v, g[0], hv[0]])
    tot = base + delta
    return DensityJet(float(tot[0]), tot[1:1 + est.d], tot[1 + est.d:])


def empirical_refit(est: KernelDensity, indices) -> KernelDensity:
    idx = np.asarray(indices)
    if idx.shape != (est.n,):
        raise ValueError(f"need {est.n} resample indices, got shape {idx.shape}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("resample indices must be integers")
    if idx.min() < 0 or idx.max() >= est.n:
        raise IndexError("resample index out of range")
    return KernelDensity(est.points[idx], est.h, est.kernel)


def default_log_floor(est: KernelDensity) -> float:
    return 1e-12 * float(est.values_at_sample().max())


def log_transform(value, grad, hess_vech, floor: float):
    """Jets of log(max(f, floor)) from jets of f (batched)."""
    if not floor > 0:
        raise ValueError(f"log floor must be positive, got {floor}")
    value = np.asarray(value, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess_vech = np.asarray(hess_vech, dtype=float)
    d = grad.shape[-1]
    rows, cols = vech_indices(d)
    v = np.maximum(value, floor)
    gl = grad / v[..., None]
    hl = hess_vech / v[..., None] - gl[..., rows] * gl[..., cols]
    return np.log(v), gl, hl


def log_jet_at(est: KernelDensity, x, floor: float | None = None) -> DensityJet:
    if floor is None:
        floor = default_log_floor(est)
    if not floor > 0:
        raise ValueError(f"log floor must be positive, got {floor}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return _to_jet(*log_transform(*est.jets(x), floor))


BANDWIDTH_CONSTANT = 1.2


def default_bandwidth(sample, case_hint: str = "auto", c: float = BANDWIDTH_CONSTANT) -> float:
    """Undersmoothing rule h = c * s * n^(-1/(d+6)) (case a) or n^(-1/(d+4.5)) (case b).

    s is the geometric mean of the per-coordinate standard deviations. ``auto``
    uses the case (a) exponent.
    """
    sample = np.asarray(sample, dtype=float)
    n, d = sample.shape
    if n < 2:
        raise ValueError("need at least 2 sample points")
    sd = sample.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValueError("degenerate sample: zero variance in some coordinate")
    s = float(np.exp(np.mean(np.log(sd))))
    if case_hint in ("a", "auto"):
        expo = 1.0 / (d + 6)
    elif case_hint == "b":
        expo = 1.0 / (d + 4.5)
    else:
        raise ValueError(f"case_hint must be 'a', 'b' or 'auto', got {case_hint!r}")
    return c * s * n ** (-expo)


def load_sample_csv(path) -> np.ndarray:
    """Read one point per row; a non-numeric first row is treated as a header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}: row {lineno} is not numeric") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: row {lineno} contains NaN or Inf")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ValueError(f"{path}: row {lineno} has {len(vals)} columns, expected {width}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=float)
