"""Command-line front end: ``kernelcal {calibrate,confidence,experiment}``.

Exit codes: 0 success, 1 configuration or input error, 2 optimizer
divergence, 3 degenerate confidence set (non-PD Sigma or singular H).
Standard output carries only human-readable tables; artifacts go to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from .core_math import as_param
from .estimator import ScoreContext, calibrate
from .exceptions import (
    ConfigError,
    DegenerateDataError,
    DivergedError,
    DomainError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)
from .experiments import ExperimentConfig, builtin_configs, format_table, run_batch, write_report
from .inference import build_confidence_set, estimate_sandwich
from .simulator import generate_target_data, read_data_csv, write_data_csv

logger = logging.getLogger("kernelcal")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_DEGENERATE = 0, 1, 2, 3

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}

_DIST = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"enum": ["exp", "gamma"]},
        "rate": _POS,
        "param": _NONNEG_INT,
        "shape": _POS,
    },
}
_KERNEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["gaussian", "laplacian", "riesz"]},
        "sigma": {"anyOf": [_POS, {"const": "median"}]},
        "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "epsilon": {"type": "number", "minimum": 0},
    },
}
_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "kernelcal run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["target", "model", "domain"],
    "properties": {
        "id": {"type": "string"},
        "target": {
            "type": "object",
            "additionalProperties": False,
            "required": ["arrival", "service"],
            "properties": {
                "arrival": _DIST,
                "service": _DIST,
                "burn_in": _NONNEG_INT,
                "horizon": _POS_INT,
                "contamination": {"type": "number", "minimum": 0, "maximum": 1},
                "noise_sd": {"type": "number", "minimum": 0},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["arrival", "service"],
            "properties": {
                "arrival": _DIST,
                "service": _DIST,
                "burn_in": _NONNEG_INT,
                "horizon": _POS_INT,
            },
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper"],
            "properties": {"lower": _VEC, "upper": _VEC},
        },
        "kernel": _KERNEL,
        "m": {"type": "integer", "minimum": 2},
        "n": {"type": "integer", "minimum": 2},
        "n_c": {"type": "integer", "minimum": 2},
        "R": _POS_INT,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sgd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta0": _POS,
                "max_iters": _NONNEG_INT,
                "optimizer": {"enum": ["adam", "sgd"]},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps_adam": _POS,
                "averaging_window": _NONNEG_INT,
            },
        },
        "hessian_step": _POS,
        "theta_star": {"anyOf": [_VEC, {"const": "estimate"}]},
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": {"type": "integer", "minimum": 2},
                "n": {"type": "integer", "minimum": 2},
                "max_iters": _NONNEG_INT,
                "averaging_window": _NONNEG_INT,
                "eta0": _POS,
            },
        },
        "sweeps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": {"type": "array", "items": _POS, "minItems": 1},
                "beta": {"type": "array", "items": _KERNEL["properties"]["beta"], "minItems": 1},
                "n": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "m": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "contamination": {
                    "type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1
                },
                "kernel": {"type": "array", "items": _KERNEL, "minItems": 1},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "threads": _NONNEG_INT,
        "out": {"type": "string"},
        "cache_dir": {"type": "string"},
    },
}

_RUN_KEYS = ("seed", "threads", "out", "cache_dir")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse and validate a JSON run configuration; returns (config, run options)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _Fail(EXIT_CONFIG, f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Fail(
            EXIT_CONFIG, f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise _Fail(EXIT_CONFIG, f"{path}: {where}: {exc.message}") from None
    run = {k: doc.pop(k) for k in _RUN_KEYS if k in doc}
    doc.setdefault("id", Path(path).stem)
    return ExperimentConfig.from_dict(doc), run


def _pick(flag, run: dict, key: str, default):
    """Precedence: command-line flag > config file > default."""
    if flag is not None:
        return flag
    return run.get(key, default)


def _streams(seed: int):
    """Independent generators for data synthesis, optimization and the sandwich."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _data(cfg: ExperimentConfig, data_path, rng) -> np.ndarray:
    if data_path is not None:
        data = read_data_csv(data_path, d=1)
        if data.shape[0] < 2:
            raise ConfigError(f"{data_path}: need at least two observations")
        return data
    return generate_target_data(cfg.target, cfg.m, rng)


def _out_dir(args, run: dict) -> Path:
    out = Path(_pick(args.out, run, "out", "kernelcal-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "R", None) is not None:
        cfg = replace(cfg, R=args.R)
    if getattr(args, "alpha", None) is not None:
        cfg = replace(cfg, alpha=args.alpha)
    return cfg


def cmd_calibrate(args) -> int:
    cfg, run = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    seed = int(_pick(args.seed, run, "seed", 0))
    data_rng, opt_rng, _ = _streams(seed)
    data = _data(cfg, args.data, data_rng)
    ctx = ScoreContext(data, cfg.kernel, cfg.model, cfg.domain, cfg.n)
    theta0 = cfg.domain.sample(opt_rng)
    result = calibrate(ctx, cfg.sgd, theta0, opt_rng)
    out = _out_dir(args, run)
    result.write_trace(out / "trace.csv")
    if args.data is None:
        write_data_csv(out / "data.csv", data)
    payload = {
        "theta_hat": result.theta_hat.tolist(),
        "theta0": result.theta0.tolist(),
        "final_score": float(result.score_trace[-1]) if result.iterations else None,
        "iterations": result.iterations,
        "kernel": ctx.kernel.to_dict(),
        "param_names": cfg.model.param_names,
        "seed": seed,
    }
    with open(out / "theta_hat.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    names = cfg.model.param_names
    print("parameter  estimate")
    for name, value in zip(names, result.theta_hat):
        print(f"{name:<9}  {value:.6f}")
    return EXIT_OK


def _theta_hat(spec: str, p: int) -> np.ndarray:
    path = Path(spec)
    if path.exists():
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _Fail(EXIT_CONFIG, f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
        values = doc["theta_hat"] if isinstance(doc, dict) else doc
    else:
        try:
            values = [float(v) for v in spec.split(",")]
        except ValueError:
            raise _Fail(EXIT_CONFIG, f"--theta-hat {spec!r} is neither a file nor a comma list") from None
    theta = as_param(values)
    if theta.shape[0] != p:
        raise _Fail(EXIT_CONFIG, f"theta_hat has {theta.shape[0]} entries, model expects {p}")
    return theta


def cmd_confidence(args) -> int:
    cfg, run = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    seed = int(_pick(args.seed, run, "seed", 0))
    data_rng, _, cs_rng = _streams(seed)
    theta_hat = _theta_hat(args.theta_hat, cfg.model.p)
    data = _data(cfg, args.data, data_rng)
    ctx = ScoreContext(data, cfg.kernel, cfg.model, cfg.domain, cfg.n)
    out = _out_dir(args, run)
    sandwich = estimate_sandwich(ctx, theta_hat, cfg.n_c, cs_rng, cfg.hessian_step)
    try:
        cs = build_confidence_set(sandwich, theta_hat, cfg.alpha)
    except (SingularMatrixError, NotPositiveDefiniteError) as exc:
        diag = {
            "error": type(exc).__name__,
            "message": str(exc),
            "H_hat": sandwich.H_hat.tolist(),
            "Sigma_hat": sandwich.Sigma_hat.tolist(),
            "eigenvalues_H": np.linalg.eigvalsh(sandwich.H_hat).tolist(),
            "eigenvalues_Sigma": np.linalg.eigvalsh(sandwich.Sigma_hat).tolist(),
        }
        with open(out / "degenerate.json", "w") as fh:
            json.dump(diag, fh, indent=2)
        raise _Fail(EXIT_DEGENERATE, f"degenerate confidence set: {exc}; diagnostics in {out / 'degenerate.json'}")
    cs.write_json(out / "confidence.json")
    width, height = cs.widths()
    print(f"alpha={cfg.alpha:g}  threshold={cs.threshold:.6f}")
    if cs.p == 1:
        geo = cs.geometry()["interval"]
        print(f"interval [{geo['lo']:.6f}, {geo['hi']:.6f}]  width {width:.6f}")
    else:
        print(f"ellipse width {width:.6f}  height {height if height is not None else float('nan'):.6f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config is not None:
        cfg, run = load_config(args.config)
    else:
        configs = builtin_configs()
        if args.builtin not in configs:
            raise _Fail(EXIT_CONFIG, f"unknown experiment {args.builtin!r}; valid ids: {', '.join(configs)}")
        cfg, run = configs[args.builtin], {}
    cfg = _apply_overrides(cfg, args)
    seed = int(_pick(args.seed, run, "seed", 0))
    threads = int(_pick(args.threads, run, "threads", 1))
    out = _out_dir(args, run)
    cache = Path(_pick(args.cache_dir, run, "cache_dir", str(out / "cache")))
    metrics = run_batch(cfg, seed, threads=threads, cache_dir=cache)
    write_report(metrics, out)
    print(format_table(metrics))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelcal", description="Kernel-score calibration of G/G/1 simulators.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (default: config or 0)")
        p.add_argument("--out", help="output directory (default: config or ./kernelcal-out)")
        p.add_argument("--threads", type=int, help="worker processes, 0 = all cores")

    p = sub.add_parser("calibrate", help="estimate theta by projected SGD")
    common(p)
    p.add_argument("--data", help="CSV of observations; replaces synthetic target data")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("confidence", help="sandwich matrices and confidence set at theta_hat")
    common(p)
    p.add_argument("--theta-hat", required=True, help="theta_hat.json from calibrate, or a comma list")
    p.add_argument("--data", help="CSV of observations; replaces synthetic target data")
    p.add_argument("--alpha", type=float, help="override the config's alpha")
    p.set_defaults(func=cmd_confidence)

    p = sub.add_parser("experiment", help="Monte Carlo batch for a built-in or configured experiment")
    p.add_argument("builtin", nargs="?", help=f"built-in id: {', '.join(builtin_configs())}")
    common(p, config_required=False)
    p.add_argument("--R", type=int, help="override the replication count")
    p.add_argument("--cache-dir", help="directory for cached reference optima")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "experiment" and (args.builtin is None) == (args.config is None):
        print("error: give exactly one of a built-in id and --config", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "R", None) is not None and args.R < 1:
        print("error: --R must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None and args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DivergedError as exc:
        print(f"error: optimizer diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SingularMatrixError, NotPositiveDefiniteError, DegenerateDataError) as exc:
        print(f"error: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
