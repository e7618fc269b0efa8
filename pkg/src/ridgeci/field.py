"""Nonridgeness and eigenvalue fields on rectangular grids, and their sublevel sets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .kde import KernelDensity, default_log_floor, log_transform
from .spectral import batch_nonridgeness, unvech_batch

SCHEMA = "ridgeci.field/1"

NODE_CAP = 4_000_000


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    resolution: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        res = tuple(int(v) for v in self.resolution)
        if not (len(lo) == len(hi) == len(res)):
            raise ValueError("grid corners and resolution must have the same length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("grid lower corner must be below the upper corner")
        if any(k < 2 for k in res):
            raise ValueError("grid resolution must be at least 2 per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "resolution", res)

    @property
    def d(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (k - 1) for a, b, k in zip(self.lower, self.upper, self.resolution)])

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def axes(self) -> list:
        # lower + i*step rather than linspace so refined grids share exact node coordinates
        return [a + np.arange(k) * ((b - a) / (k - 1)) for a, b, k in zip(self.lower, self.upper, self.resolution)]

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "resolution": list(self.resolution)}


def default_grid(sample, h: float, spacing_factor: float = 1.0 / 3.0, inflate: float | None = None) -> GridSpec:
    """Bounding box of the sample inflated by h, with spacing about spacing_factor*h."""
    sample = np.asarray(sample, dtype=float)
    pad = h if inflate is None else inflate
    lo = sample.min(axis=0) - pad
    hi = sample.max(axis=0) + pad
    step = spacing_factor * h
    res = [int(math.ceil((b - a) / step)) + 1 for a, b in zip(lo, hi)]
    return GridSpec(tuple(lo), tuple(hi), tuple(res))


@dataclass
class DensityFloor:
    """Node filter f_hat >= threshold, the threshold being a sample quantile of f_hat(X_i)."""

    q: float
    threshold: float

    def __call__(self, density) -> np.ndarray:
        return np.asarray(density) >= self.threshold


def density_floor_mask(est: KernelDensity, q: float = 0.05, sample_values=None) -> DensityFloor:
    """Floor at the ceil(q n)-th order statistic of the estimate at the sample points."""
    if not 0 < q < 1:
        raise ValueError(f"floor quantile must be in (0, 1), got {q}")
    vals = est.values_at_sample() if sample_values is None else np.asarray(sample_values)
    srt = np.sort(vals)
    k = max(1, math.ceil(q * srt.size))
    return DensityFloor(q=q, threshold=float(srt[k - 1]))


@dataclass
class RidgeField:
    grid: GridSpec
    p_hat: np.ndarray
    lambda_r1: np.ndarray
    valid: np.ndarray
    r: int
    h: float
    use_log: bool = False
    n: int = 0
    density: np.ndarray = dc_field(default=None, repr=False)   # f_hat at nodes
    grad: np.ndarray = dc_field(default=None, repr=False)      # gradient of f_hat (or log f_hat)
    raw_jets: np.ndarray = dc_field(default=None, repr=False)  # (N, 1 + d + d(d+1)/2) jets of f_hat
    gap_ok: np.ndarray = dc_field(default=None, repr=False)
    log_floor: float = 0.0
    floor_threshold: float = 0.0

    @property
    def coords(self) -> np.ndarray:
        return self.grid.nodes()

    @property
    def lambda_negative(self) -> np.ndarray:
        return self.valid & (self.lambda_r1 < 0)

    def metadata(self) -> dict:
        return {
            "schema": SCHEMA,
            "grid": self.grid.to_dict(),
            "r": self.r,
            "h": self.h,
            "use_log": self.use_log,
            "n": self.n,
            "log_floor": self.log_floor,
            "floor_threshold": self.floor_threshold,
        }


def transformed_jets(raw: np.ndarray, d: int, use_log: bool, log_floor: float):
    v = raw[..., 0]
    g = raw[..., 1:1 + d]
    hv = raw[..., 1 + d:]
    if use_log:
        return log_transform(v, g, hv, log_floor)
    return v, g, hv


def evaluate_field(
    est: KernelDensity,
    grid: GridSpec,
    r: int = 1,
    use_log: bool = False,
    gap_tol: float | None = None,
    floor_q: float | None = 0.05,
    log_floor: float | None = None,
    node_cap: int = NODE_CAP,
) -> RidgeField:
    """Nonridgeness p_hat and lambda_{r+1} at every grid node.

    A node is valid when the eigen-gap holds and f_hat is positive and, if
    ``floor_q`` is given, at least the floor_q sample quantile of f_hat.
    """
    if grid.d != est.d:
        raise ValueError(f"grid dimension {grid.d} != estimator dimension {est.d}")
    if grid.size > node_cap:
        raise ValueError(f"grid has {grid.size} nodes, cap is {node_cap}")
    if not 1 <= r < est.d:
        raise ValueError(f"ridge dimension must satisfy 1 <= r < d, got {r}")
    X = grid.nodes()
    v, g, hv = est.jets(X)
    raw = np.column_stack([v, g, hv])
    if log_floor is None:
        # the floor needs f_hat at every sample point, so skip it when unused
        log_floor = default_log_floor(est) if use_log else 0.0
    tv, tg, thv = transformed_jets(raw, est.d, use_log, log_floor)
    p, lam, gap_ok = batch_nonridgeness(unvech_batch(thv, est.d), tg, r, gap_tol)
    valid = gap_ok & (v > 0)
    threshold = 0.0
    if floor_q is not None:
        floor = density_floor_mask(est, floor_q)
        threshold = floor.threshold
        valid &= floor(v)
    return RidgeField(
        grid=grid, p_hat=p, lambda_r1=lam, valid=valid, r=r, h=est.h, use_log=use_log, n=est.n,
        density=v, grad=tg, raw_jets=raw, gap_ok=gap_ok, log_floor=log_floor, floor_threshold=threshold,
    )


def sublevel_region(field: RidgeField, eps: float) -> np.ndarray:
    """Node mask of {p_hat <= eps, lambda_{r+1} < 0} restricted to valid nodes."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return field.valid & (field.p_hat <= eps) & (field.lambda_r1 < 0)


def hausdorff_to_set(points, target) -> tuple[float, float]:
    """Directed Hausdorff distances (points -> target, target -> points)."""
    A = np.atleast_2d(np.asarray(points, dtype=float))
    T = np.atleast_2d(np.asarray(target, dtype=float))
    if A.shape[0] == 0 or T.shape[0] == 0:
        raise ValueError("hausdorff_to_set needs nonempty point sets")
    a_to_t = cKDTree(T).query(A)[0].max()
    t_to_a = cKDTree(A).query(T)[0].max()
    return float(a_to_t), float(t_to_a)


def write_field(field: RidgeField, prefix, mask=None) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` (one row per node) and ``<prefix>.json`` (grid metadata)."""
    prefix = Path(prefix)
    coords = field.coords
    d = coords.shape[1]
    cols = [f"x{i}" for i in range(d)] + ["p_hat", "lambda_r1", "valid"]
    if mask is not None:
        cols.append("mask")
    csv_path = prefix.with_suffix(".csv")
    lines = [",".join(cols)]
    for i in range(coords.shape[0]):
        parts = [repr(float(c)) for c in coords[i]]
        parts += [repr(float(field.p_hat[i])), repr(float(field.lambda_r1[i])), str(int(field.valid[i]))]
        if mask is not None:
            parts.append(str(int(mask[i])))
        lines.append(",".join(parts))
    csv_path.write_text("\n".join(lines) + "\n")
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(field.metadata(), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def read_field(prefix) -> tuple[RidgeField, np.ndarray | None]:
    """Inverse of :func:`write_field`; returns the field and the mask column if present."""
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    if meta.get("schema") != SCHEMA:
        raise ValueError(f"unexpected field schema {meta.get('schema')!r}")
    grid = GridSpec(**{k: tuple(v) for k, v in meta["grid"].items()})
    with prefix.with_suffix(".csv").open() as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d = grid.d
    p = np.array([float(r[d]) for r in rows])
    lam = np.array([float(r[d + 1]) for r in rows])
    valid = np.array([r[d + 2] == "1" for r in rows])
    mask = np.array([r[d + 3] == "1" for r in rows]) if "mask" in header else None
    fld = RidgeField(
        grid=grid, p_hat=p, lambda_r1=lam, valid=valid, r=meta["r"], h=meta["h"],
        use_log=meta["use_log"], n=meta["n"], log_floor=meta["log_floor"],
        floor_threshold=meta["floor_threshold"],
    )
    return fld, mask
