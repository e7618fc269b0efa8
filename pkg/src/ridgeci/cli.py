"""Command-line front end: ``ridgeci <command> [options]``.

Commands
--------
estimate         fit the density and write the nonridgeness field
confidence       bootstrap the threshold and write the confidence region
infer            growth-exponent estimate and flat-ridge test report
coverage         Monte Carlo coverage study (JSON lines plus a summary)
validate-kernel  numerical checks on the kernel jets

Options can also come from a JSON document given with ``--config``; explicit
command-line flags override it. The fully resolved configuration is printed
as one JSON line before any work starts. Failures exit with status 2
(configuration) or 3 (numerical) and print one line
``ridgeci: error kind=<config|numerical> reason=<text>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

SCHEMA = "ridgeci.cli/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("estimate", "confidence", "infer", "coverage", "validate-kernel")

DEFAULTS = {
    "input": None,
    "model": None,
    "model_params": {},
    "n": 2000,
    "r": 1,
    "h": "auto",
    "alpha": 0.1,
    "B": 200,
    "M": 100,
    "mode": "multiplier",
    "rho": "tube",
    "log_density": False,
    "floor_q": 0.05,
    "grid": "auto",
    "seed": 0,
    "threads": 1,
    "out": "ridgeci-out",
    "resume": False,
    "r_n": None,
    "identity_resample": False,
    "zero_gradient": False,
}


class ConfigError(ValueError):
    pass


def _rho_value(text):
    if isinstance(text, (int, float)):
        return float(text)
    if text in ("zero", "tube", "auto"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--rho must be a number or one of zero, tube, auto; got {text!r}") from None


def parse_grid(text, d: int):
    """``auto`` or 3d comma-separated numbers: lower corner, upper corner, nodes per axis."""
    from .field import GridSpec

    if text == "auto":
        return None
    parts = text.split(",") if isinstance(text, str) else list(text)
    if len(parts) != 3 * d:
        raise ConfigError(f"--grid needs {3 * d} comma-separated values for d={d}, got {len(parts)}")
    try:
        vals = [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"--grid values must be numeric, got {text!r}") from None
    try:
        return GridSpec(tuple(vals[:d]), tuple(vals[d:2 * d]), tuple(int(v) for v in vals[2 * d:]))
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON document with option values")
    common.add_argument("--input", help="CSV sample, one point per row")
    common.add_argument("--model", help="synthetic model name (instead of --input)")
    common.add_argument("--n", type=int, help="synthetic sample size")
    common.add_argument("--r", type=int, help="ridge dimension")
    common.add_argument("--h", help="bandwidth or 'auto'")
    common.add_argument("--alpha", type=float, help="one minus the confidence level")
    common.add_argument("--B", type=int, help="bootstrap replicates")
    common.add_argument("--M", type=int, help="coverage runs")
    common.add_argument("--mode", choices=("multiplier", "empirical"))
    common.add_argument("--rho", help="candidate level: number, zero, tube or auto")
    common.add_argument("--log-density", dest="log_density", action="store_const", const=True,
                        help="work with log f_hat instead of f_hat")
    common.add_argument("--floor-q", dest="floor_q", type=float, help="density floor sample quantile")
    common.add_argument("--grid", help="'auto' or lower..,upper..,nodes.. (3d numbers)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="maximum worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--resume", action="store_const", const=True, help="continue a coverage study")
    common.add_argument("--r-n", dest="r_n", type=float, help="vernier radius (default 1/ln n)")
    common.add_argument("--identity-resample", dest="identity_resample", action="store_const", const=True,
                        help=argparse.SUPPRESS)
    common.add_argument("--zero-gradient", dest="zero_gradient", action="store_const", const=True,
                        help=argparse.SUPPRESS)
    common.add_argument("--self-check", dest="self_check", action="store_true", help=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="ridgeci", description="Ridge estimation with bootstrap confidence regions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    cfg["rho"] = _rho_value(cfg["rho"])
    if cfg["h"] != "auto":
        try:
            cfg["h"] = float(cfg["h"])
        except (TypeError, ValueError):
            raise ConfigError(f"--h must be a positive number or 'auto', got {cfg['h']!r}") from None
        if not cfg["h"] > 0:
            raise ConfigError("--h must be positive")
    if cfg["threads"] < 1:
        raise ConfigError("--threads must be at least 1")
    if cfg["command"] != "validate-kernel":
        if (cfg["input"] is None) == (cfg["model"] is None):
            raise ConfigError("give exactly one of --input and --model")
        if cfg["input"] is not None and not Path(cfg["input"]).exists():
            raise ConfigError(f"input file not found: {cfg['input']}")
        if cfg["command"] == "coverage" and cfg["model"] is None:
            raise ConfigError("coverage needs --model")
    if not 0 < cfg["alpha"] < 1:
        raise ConfigError(f"--alpha must be in (0, 1), got {cfg['alpha']}")
    if not 0 < cfg["floor_q"] < 1:
        raise ConfigError(f"--floor-q must be in (0, 1), got {cfg['floor_q']}")
    for key in ("B", "M", "n"):
        if cfg[key] < 1:
            raise ConfigError(f"--{key} must be positive")
    return cfg


def _emit(path: Path, record) -> None:
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_data(cfg: dict):
    from .kde import load_sample_csv
    from .synthetic import build_model, sample

    if cfg["input"] is not None:
        try:
            return load_sample_csv(cfg["input"]), None
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from None
    try:
        model = build_model(cfg["model"], cfg["model_params"] or None)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    return sample(model, cfg["n"], cfg["seed"]), model


def prepare(cfg: dict, spacing_cap: float | None = None):
    """Sample, estimator and field for a resolved configuration."""
    from .field import default_grid, evaluate_field
    from .kde import default_bandwidth, fit

    X, model = load_data(cfg)
    d = X.shape[1]
    if not 1 <= cfg["r"] < d:
        raise ConfigError(f"--r must satisfy 1 <= r < d = {d}, got {cfg['r']}")
    case = model.case if model is not None else "auto"
    h = default_bandwidth(X, case) if cfg["h"] == "auto" else cfg["h"]
    grid = parse_grid(cfg["grid"], d)
    if grid is None:
        factor = 1.0 / 3.0
        if spacing_cap is not None:
            factor = min(factor, spacing_cap / h)
        grid = default_grid(X, h, spacing_factor=factor)
    est = fit(X, h)
    fld = evaluate_field(est, grid, r=cfg["r"], use_log=cfg["log_density"], floor_q=cfg["floor_q"])
    if not fld.valid.any():
        raise FloatingPointError("no valid grid node: every node fails the eigen-gap or the density floor")
    return X, model, est, fld


def resolved_rho(cfg, est, fld) -> float:
    from .bootstrap import candidate_set, resolve_rho

    if cfg["rho"] == "tube":
        return float(fld.p_hat[candidate_set(fld, "tube")].max())
    return resolve_rho(fld, cfg["rho"], est)


def cmd_estimate(cfg: dict, out: Path) -> dict:
    from .field import write_field

    X, model, est, fld = prepare(cfg)
    write_field(fld, out / "field")
    resolved = {"schema": SCHEMA, "command": "estimate", "n": int(X.shape[0]), "d": int(X.shape[1]),
                "h": est.h, "grid": fld.grid.to_dict(), "rho_n": resolved_rho(cfg, est, fld),
                "valid_nodes": int(fld.valid.sum())}
    _emit(out / "resolved.json", resolved)
    return resolved


def boundary_nodes(mask: np.ndarray, shape) -> np.ndarray:
    """Masked nodes with at least one axis neighbour outside the mask (or off the grid)."""
    m = np.asarray(mask, dtype=bool).reshape(shape)
    edge = np.zeros_like(m)
    for ax in range(m.ndim):
        padded = np.pad(m, [(1, 1) if k == ax else (0, 0) for k in range(m.ndim)], constant_values=False)
        lo = np.take(padded, range(0, m.shape[ax]), axis=ax)
        hi = np.take(padded, range(2, m.shape[ax] + 2), axis=ax)
        edge |= m & (~lo | ~hi)
    return np.flatnonzero(edge.ravel())


def cmd_confidence(cfg: dict, out: Path) -> dict:
    from .bootstrap import BootstrapConfig, confidence_region, write_draws
    from .field import write_field

    X, model, est, fld = prepare(cfg)
    try:
        bcfg = BootstrapConfig(B=cfg["B"], mode=cfg["mode"], rho_n=cfg["rho"], alpha=cfg["alpha"], seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    region, draws = confidence_region(est, fld, bcfg, identity=cfg["identity_resample"])
    write_field(fld, out / "region", mask=region.mask)
    write_draws(out / "draws.json", bcfg, draws, region)
    coords = fld.coords
    idx = boundary_nodes(region.mask, fld.grid.shape)
    cols = [f"x{i}" for i in range(coords.shape[1])]
    lines = ["# schema " + SCHEMA + " boundary", ",".join(["node"] + cols)]
    lines += [",".join([str(int(i))] + [repr(float(c)) for c in coords[i]]) for i in idx]
    (out / "boundary.csv").write_text("\n".join(lines) + "\n")
    summary = {"schema": SCHEMA, "command": "confidence", "h": est.h, "grid": fld.grid.to_dict(),
               "threshold": region.threshold, "alpha": region.alpha, "mode": region.mode,
               "rho_n": region.rho_n, "candidate_count": region.candidate_count,
               "mask_nodes": int(region.mask.sum()), "boundary_nodes": int(idx.size)}
    _emit(out / "resolved.json", summary)
    return summary


def cmd_infer(cfg: dict, out: Path) -> dict:
    from .inference import flatness_test

    if cfg["input"] is not None:
        n = sum(1 for _ in open(cfg["input"]))
    else:
        n = cfg["n"]
    r_n = cfg["r_n"] if cfg["r_n"] is not None else 1.0 / math.log(max(n, 3))
    X, model, est, fld = prepare(cfg, spacing_cap=r_n / 4)
    gradient = np.zeros((fld.grid.size, fld.grid.d)) if cfg["zero_gradient"] else None
    rho = cfg["rho"]
    res = flatness_test(est, fld, rho_n=rho, alpha=cfg["alpha"], B=cfg["B"], seed=cfg["seed"], r_n=r_n,
                        scale="curvature" if rho == "tube" else "raw", gradient=gradient)
    report = {"schema": SCHEMA, "command": "infer", "h": est.h, "grid": fld.grid.to_dict(), **res.to_dict()}
    _emit(out / "infer.json", report)
    return report


def cmd_coverage(cfg: dict, out: Path) -> dict:
    from .synthetic import coverage_experiment

    h = cfg["h"] if cfg["h"] != "auto" else "auto"
    summary = coverage_experiment(
        cfg["model"], n=cfg["n"], B=cfg["B"], M=cfg["M"], alpha=cfg["alpha"], mode=cfg["mode"],
        seed=cfg["seed"], workers=cfg["threads"], records_path=out / "runs.jsonl", resume=cfg["resume"],
        params=dict(cfg["model_params"] or {}), rho_n=cfg["rho"], use_log=cfg["log_density"],
        floor_q=cfg["floor_q"], bandwidth=h,
    )
    summary = {"schema": SCHEMA, **summary}
    _emit(out / "summary.json", summary)
    return {k: v for k, v in summary.items() if k != "per_run_records"}


def cmd_validate_kernel(cfg: dict, out: Path, self_check: bool = False) -> dict:
    from .diagnostics import check_kernel, run_all

    reports = run_all(cfg["seed"]) if self_check else [check_kernel(2, cfg["seed"])]
    record = {"schema": SCHEMA, "command": "validate-kernel", "checks": [r.to_dict() for r in reports]}
    _emit(out / "checks.json", record)
    if not all(r.passed for r in reports):
        failed = ",".join(r.name for r in reports if not r.passed)
        raise FloatingPointError(f"failed checks: {failed}")
    return {"passed": [r.name for r in reports]}


def _fail(kind: str, code: int, msg) -> int:
    reason = " ".join(str(msg).split())
    print(f"ridgeci: error kind={kind} reason={reason}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .bootstrap import EmptyCandidateSet
    from .spectral import EigenGapError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail("config", EXIT_CONFIG, f"output directory {cfg['out']} is not writable: {exc}")
    print(json.dumps({"schema": SCHEMA, "resolved_config": cfg}, sort_keys=True, default=_json_default))
    try:
        if args.command == "estimate":
            result = cmd_estimate(cfg, out)
        elif args.command == "confidence":
            result = cmd_confidence(cfg, out)
        elif args.command == "infer":
            result = cmd_infer(cfg, out)
        elif args.command == "coverage":
            result = cmd_coverage(cfg, out)
        else:
            result = cmd_validate_kernel(cfg, out, self_check=args.self_check)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except (EmptyCandidateSet, EigenGapError, FloatingPointError, ArithmeticError) as exc:
        return _fail("numerical", EXIT_NUMERICAL, exc)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        return _fail("config", EXIT_CONFIG, exc)
    print(json.dumps({"schema": SCHEMA, "result": result}, sort_keys=True, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
