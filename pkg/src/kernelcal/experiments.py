"""Declarative Monte Carlo experiments: configs, the replication harness and reports.

A config describes one target system, one simulation model and the
estimator settings. Optional sweeps (over the target's service shape ``a``,
the Riesz exponent ``beta``, ``n``, ``m``, the contamination fraction or the
kernel) expand it into a list of concrete configs, each of which yields one
:class:`RunMetrics` row.

Seeding: run ``r`` of a sweep point draws from
``SeedSequence(master_seed, spawn_key=(0, r))`` and the reference optimum
from ``spawn_key=(1,)``, so results do not depend on the worker count or on
the order in which runs finish.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core_math import BoxDomain
from .estimator import SGDConfig, ScoreContext, calibrate, estimate_optimal_parameter
from .exceptions import ConfigError, KernelCalError
from .inference import build_confidence_set, estimate_sandwich
from .kernels import KernelSpec
from .simulator import Dist, GG1Model, TargetSystem, generate_target_data

logger = logging.getLogger(__name__)

__all__ = [
    "ReferenceRun",
    "ExperimentConfig",
    "RunRecord",
    "RunMetrics",
    "builtin_configs",
    "builtin_ids",
    "expand_sweeps",
    "resolve_theta_star",
    "run_experiment",
    "run_batch",
    "write_report",
]

SWEEP_KEYS = ("a", "beta", "n", "m", "contamination", "kernel")


@dataclass(frozen=True)
class ReferenceRun:
    """Settings of the large run that estimates the reference optimum."""

    m: int = 5000
    n: int = 1000
    max_iters: int = 1000
    averaging_window: int = 100
    eta0: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    target: TargetSystem
    model: GG1Model
    domain: BoxDomain
    kernel: KernelSpec
    m: int = 500
    n: int = 500
    n_c: int = 5000
    R: int = 100
    alpha: float = 0.05
    sgd: SGDConfig = field(default_factory=SGDConfig)
    hessian_step: float = 0.1
    # a list of floats (known optimum) or None (estimate by a reference run)
    theta_star: tuple[float, ...] | None = None
    reference: ReferenceRun = field(default_factory=ReferenceRun)
    sweeps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        if self.m < 2 or self.n < 2 or self.n_c < 2:
            raise ConfigError("m, n and n_c must be at least 2")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if self.domain.dim != self.model.p:
            raise ConfigError(
                f"domain has dimension {self.domain.dim} but the model has {self.model.p} parameters"
            )
        if self.theta_star is not None:
            star = tuple(float(v) for v in self.theta_star)
            if len(star) != self.model.p:
                raise ConfigError("theta_star dimension does not match the model")
            object.__setattr__(self, "theta_star", star)
        unknown = set(self.sweeps) - set(SWEEP_KEYS)
        if unknown:
            raise ConfigError(f"unknown sweep keys {sorted(unknown)}; valid: {SWEEP_KEYS}")
        for key, values in self.sweeps.items():
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"sweep {key!r} needs a non-empty list")

    @property
    def p(self) -> int:
        return self.model.p

    def to_dict(self) -> dict:
        sweeps = {}
        for key, values in self.sweeps.items():
            if key == "kernel":
                sweeps[key] = [_kernel_of(v).to_dict() for v in values]
            else:
                sweeps[key] = list(values)
        return {
            "id": self.id,
            "target": self.target.to_dict(),
            "model": self.model.to_dict(),
            "domain": {"lower": list(self.domain.lower), "upper": list(self.domain.upper)},
            "kernel": self.kernel.to_dict(),
            "m": self.m,
            "n": self.n,
            "n_c": self.n_c,
            "R": self.R,
            "alpha": self.alpha,
            "sgd": {k: v for k, v in asdict(self.sgd).items() if k != "seed"},
            "hessian_step": self.hessian_step,
            "theta_star": list(self.theta_star) if self.theta_star is not None else "estimate",
            "reference": asdict(self.reference),
            "sweeps": sweeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        try:
            star = d.get("theta_star", "estimate")
            sweeps = d.get("sweeps", {})
            if "kernel" in sweeps:
                sweeps["kernel"] = [KernelSpec.from_dict(k) for k in sweeps["kernel"]]
            return cls(
                id=str(d["id"]),
                target=TargetSystem.from_dict(d["target"]),
                model=GG1Model.from_dict(d["model"]),
                domain=BoxDomain(d["domain"]["lower"], d["domain"]["upper"]),
                kernel=KernelSpec.from_dict(d.get("kernel", {"kind": "riesz"})),
                m=int(d.get("m", 500)),
                n=int(d.get("n", 500)),
                n_c=int(d.get("n_c", 5000)),
                R=int(d.get("R", 100)),
                alpha=float(d.get("alpha", 0.05)),
                sgd=SGDConfig(**d.get("sgd", {})),
                hessian_step=float(d.get("hessian_step", 0.1)),
                theta_star=None if star == "estimate" else tuple(star),
                reference=ReferenceRun(**d.get("reference", {})),
                sweeps=sweeps,
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from None
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None


def _kernel_of(v) -> KernelSpec:
    return v if isinstance(v, KernelSpec) else KernelSpec.from_dict(v)


# -- built-in experiments ------------------------------------------------------

_EXP = Dist.exp
_GAMMA = Dist.gamma


def _sgd(iters: int) -> SGDConfig:
    return SGDConfig(eta0=1.0, max_iters=iters, averaging_window=100)


def builtin_configs() -> dict[str, ExperimentConfig]:
    """The four experiments plus the beta, n, bias and contamination sweeps."""
    riesz = KernelSpec("riesz", beta=1.0)
    gauss = KernelSpec("gaussian")
    both = [gauss, riesz]
    a_values = [1.0, 0.8, 0.6, 0.4, 0.2]

    exp1 = ExperimentConfig(
        id="exp1",
        target=TargetSystem(_EXP(rate=1.0), _EXP(rate=1.2)),
        model=GG1Model(_EXP(rate=1.0), _EXP(param=0)),
        domain=BoxDomain([1.05], [5.0]),
        kernel=riesz,
        m=500, n=500, R=100,
        sgd=_sgd(200),
        theta_star=(1.2,),
    )
    exp2 = ExperimentConfig(
        id="exp2",
        target=TargetSystem(_EXP(rate=1.0), _GAMMA(1.0, rate=1.2)),
        model=GG1Model(_EXP(rate=1.0), _EXP(param=0)),
        domain=BoxDomain([1.05], [8.0]),
        kernel=gauss,
        m=500, n=500, R=100,
        sgd=_sgd(200),
        theta_star=None,
        reference=ReferenceRun(max_iters=800),
        sweeps={"a": a_values},
    )
    exp3_model = GG1Model(_GAMMA(0.5, param=1), _EXP(param=0), burn_in=0, horizon=10)
    exp3 = ExperimentConfig(
        id="exp3",
        target=TargetSystem(_GAMMA(0.5, rate=1.0), _EXP(rate=1.0), burn_in=0, horizon=10),
        model=exp3_model,
        domain=BoxDomain([0.2, 0.2], [5.0, 5.0]),
        kernel=riesz,
        m=500, n=500, R=100,
        sgd=_sgd(800),
        theta_star=(1.0, 1.0),
        sweeps={"kernel": both},
    )
    exp4 = ExperimentConfig(
        id="exp4",
        target=TargetSystem(_GAMMA(0.5, rate=1.0), _GAMMA(1.0, rate=2.5), burn_in=10, horizon=20),
        model=GG1Model(_GAMMA(0.5, param=1), _EXP(param=0), burn_in=10, horizon=20),
        domain=BoxDomain([1.0, 0.2], [12.0, 4.0]),
        kernel=riesz,
        m=1000, n=1000, R=100,
        sgd=_sgd(800),
        theta_star=None,
        sweeps={"a": a_values, "kernel": both},
    )
    return {
        "exp1": exp1,
        "exp2": exp2,
        "exp3": exp3,
        "exp4": exp4,
        "beta_sweep": replace(
            exp2, id="beta_sweep", kernel=riesz,
            sweeps={"a": a_values, "beta": [1.25, 1.5, 1.75, 2.0]},
        ),
        "n_sweep": replace(exp1, id="n_sweep", sweeps={"n": [2, 10, 50, 100, 200, 500]}),
        "bias": replace(exp4, id="bias", sweeps={"a": a_values, "m": [1000, 2000, 5000]}),
        "contamination": replace(
            exp3, id="contamination", m=1000, n=1000,
            target=replace(exp3.target, noise_sd=0.1),
            sweeps={"contamination": [0.01, 0.05, 0.1, 0.2, 0.5], "kernel": both},
        ),
    }


def builtin_ids() -> list[str]:
    return list(builtin_configs())


# -- sweeps --------------------------------------------------------------------

def _apply_point(cfg: ExperimentConfig, point: dict) -> ExperimentConfig:
    target, kernel, m, n = cfg.target, cfg.kernel, cfg.m, cfg.n
    if "kernel" in point:
        kernel = _kernel_of(point["kernel"])
    if "a" in point:
        a = float(point["a"])
        service = target.service
        target = replace(target, service=Dist("gamma", rate=service.rate, shape=a))
    if "beta" in point:
        if kernel.kind != "riesz":
            raise ConfigError("a beta sweep needs the Riesz kernel")
        kernel = replace(kernel, beta=float(point["beta"]))
    if "contamination" in point:
        target = replace(target, contamination=float(point["contamination"]))
    if "m" in point:
        m = int(point["m"])
    if "n" in point:
        n = int(point["n"])
    return replace(cfg, target=target, kernel=kernel, m=m, n=n, sweeps={})


def expand_sweeps(cfg: ExperimentConfig) -> list[tuple[dict, ExperimentConfig]]:
    """Cartesian product of the sweep lists, in declaration order."""
    if not cfg.sweeps:
        return [({}, replace(cfg, sweeps={}))]
    keys = [k for k in SWEEP_KEYS if k in cfg.sweeps]
    out = []
    for combo in itertools.product(*(cfg.sweeps[k] for k in keys)):
        point = dict(zip(keys, combo))
        out.append((point, _apply_point(cfg, point)))
    return out


# -- reference optimum ---------------------------------------------------------

def _reference_key(cfg: ExperimentConfig, master_seed: int) -> str:
    payload = {
        "target": cfg.target.to_dict(),
        "model": cfg.model.to_dict(),
        "domain": [list(cfg.domain.lower), list(cfg.domain.upper)],
        "kernel": cfg.kernel.to_dict(),
        "reference": asdict(cfg.reference),
        "seed": master_seed,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def resolve_theta_star(cfg: ExperimentConfig, master_seed: int, cache_dir=None) -> np.ndarray:
    """Known optimum, or a tail-averaged large run cached as JSON under ``cache_dir``."""
    if cfg.theta_star is not None:
        return np.asarray(cfg.theta_star, dtype=float)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"theta_star_{_reference_key(cfg, master_seed)}.json"
        if path.exists():
            with open(path) as fh:
                return np.asarray(json.load(fh)["theta_star"], dtype=float)
    ref = cfg.reference
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1,)))
    sgd = SGDConfig(eta0=ref.eta0, max_iters=ref.max_iters, averaging_window=ref.averaging_window)
    start = time.perf_counter()
    star = estimate_optimal_parameter(
        cfg.target, cfg.model, cfg.kernel, sgd, cfg.domain, rng, m=ref.m, n=ref.n
    )
    logger.info("reference optimum %s for %s in %.1fs", star, cfg.id, time.perf_counter() - start)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"theta_star": star.tolist(), "config": cfg.to_dict(), "seed": master_seed}, fh)
    return star


# -- replications ----------------------------------------------------------------

@dataclass
class RunRecord:
    index: int
    theta_hat: np.ndarray | None
    in_set: bool
    width: float | None
    height: float | None
    degenerate: bool
    reason: str
    seconds: float
    geometry: dict | None = field(default=None, repr=False)


def _one_run(cfg: ExperimentConfig, theta_star: np.ndarray, master_seed: int, r: int) -> RunRecord:
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0, r)))
    start = time.perf_counter()
    theta_hat = None
    try:
        data = generate_target_data(cfg.target, cfg.m, rng)
        ctx = ScoreContext(data, cfg.kernel, cfg.model, cfg.domain, cfg.n)
        theta0 = cfg.domain.sample(rng)
        theta_hat = calibrate(ctx, cfg.sgd, theta0, rng).theta_hat
        sandwich = estimate_sandwich(ctx, theta_hat, cfg.n_c, rng, cfg.hessian_step)
        cs = build_confidence_set(sandwich, theta_hat, cfg.alpha)
        width, height = cs.widths()
        return RunRecord(
            r, theta_hat, cs.contains(theta_star), width, height, False, "",
            time.perf_counter() - start, cs.to_dict(),
        )
    except KernelCalError as exc:
        return RunRecord(
            r, theta_hat, False, None, None, True, f"{type(exc).__name__}: {exc}",
            time.perf_counter() - start,
        )


def _run_star(args):
    return _one_run(*args)


@dataclass
class RunMetrics:
    config: ExperimentConfig
    point: dict
    theta_star: np.ndarray
    records: list[RunRecord]

    @property
    def R(self) -> int:
        return len(self.records)

    @property
    def degenerate_count(self) -> int:
        return sum(rec.degenerate for rec in self.records)

    def _ok(self) -> list[RunRecord]:
        return [rec for rec in self.records if not rec.degenerate]

    @property
    def mse(self) -> np.ndarray:
        """Per-coordinate mean squared error over runs that produced an estimate."""
        est = [rec.theta_hat for rec in self.records if rec.theta_hat is not None]
        if not est:
            return np.full(self.theta_star.shape, math.nan)
        return np.mean((np.asarray(est) - self.theta_star) ** 2, axis=0)

    @property
    def coverage(self) -> float:
        ok = self._ok()
        if not ok:
            return math.nan
        return sum(rec.in_set for rec in ok) / len(ok)

    @property
    def mean_width(self) -> float:
        ok = self._ok()
        return float(np.mean([rec.width for rec in ok])) if ok else math.nan

    @property
    def mean_height(self) -> float | None:
        ok = self._ok()
        if self.config.p < 2:
            return None
        return float(np.mean([rec.height for rec in ok])) if ok else math.nan

    @property
    def mean_seconds(self) -> float:
        return float(np.mean([rec.seconds for rec in self.records]))


def _workers(threads: int) -> int:
    if threads < 0:
        raise ConfigError("threads must be >= 0")
    return threads or os.cpu_count() or 1


def run_experiment(
    cfg: ExperimentConfig,
    master_seed: int,
    threads: int = 1,
    cache_dir=None,
    point: dict | None = None,
) -> RunMetrics:
    """All R replications of one concrete (already expanded) config."""
    if cfg.sweeps:
        raise ConfigError("config still has sweeps; use run_batch or expand_sweeps")
    theta_star = resolve_theta_star(cfg, master_seed, cache_dir)
    jobs = [(cfg, theta_star, master_seed, r) for r in range(cfg.R)]
    workers = min(_workers(threads), cfg.R)
    if workers == 1:
        records = [_run_star(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves submission order, so the reduce below is sequential by run index
            records = list(pool.map(_run_star, jobs))
    return RunMetrics(cfg, dict(point or {}), theta_star, records)


def run_batch(cfg: ExperimentConfig, master_seed: int, threads: int = 1, cache_dir=None) -> list[RunMetrics]:
    return [
        run_experiment(concrete, master_seed, threads, cache_dir, point)
        for point, concrete in expand_sweeps(cfg)
    ]


# -- reports -----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _coord_names(metrics: list[RunMetrics]) -> list[str]:
    if not metrics:
        return ["theta"]
    names = metrics[0].config.model.param_names
    for met in metrics[1:]:
        if met.config.model.param_names != names:
            raise ConfigError("a report must not mix parameter layouts")
    return names


def _point_label(idx: int, met: RunMetrics) -> str:
    parts = [f"{idx:03d}", met.config.kernel.kind]
    for key in ("a", "beta", "n", "m", "contamination"):
        if key in met.point:
            parts.append(f"{key}{met.point[key]}")
    return "_".join(parts)


SUMMARY_FILE = "summary.csv"
RUNS_FILE = "runs.csv"
# wall-clock columns; every other column is a deterministic function of config and seed
TIMING_COLUMNS = ("mean_seconds", "seconds")


def write_report(metrics: list[RunMetrics], path) -> Path:
    """Summary CSV, per-run CSV and per-set geometry JSON files under directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        names = _coord_names(metrics)
        header = (
            ["experiment_id", "kernel", "a", "beta", "m", "n", "R"]
            + [f"mse_{c}" for c in names]
            + ["coverage", "width", "height", "degenerate_count", "mean_seconds"]
            + [f"theta_star_{c}" for c in names]
        )
        with open(out / SUMMARY_FILE, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for met in metrics:
                cfg = met.config
                service = cfg.target.service
                a = service.shape if service.family == "gamma" else 1.0
                beta = cfg.kernel.beta if cfg.kernel.kind == "riesz" else None
                writer.writerow(
                    [cfg.id, cfg.kernel.kind, _fmt(a), _fmt(beta), cfg.m, cfg.n, met.R]
                    + [_fmt(v) for v in met.mse]
                    + [_fmt(met.coverage), _fmt(met.mean_width), _fmt(met.mean_height),
                       met.degenerate_count, _fmt(met.mean_seconds)]
                    + [_fmt(v) for v in met.theta_star]
                )
        with open(out / RUNS_FILE, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["point", "run"] + [f"theta_hat_{c}" for c in names]
                + ["in_set", "width", "height", "degenerate", "reason", "seconds"]
            )
            for idx, met in enumerate(metrics):
                label = _point_label(idx, met)
                for rec in met.records:
                    theta = rec.theta_hat if rec.theta_hat is not None else [None] * len(names)
                    writer.writerow(
                        [label, rec.index] + [_fmt(v) for v in theta]
                        + [_fmt(rec.in_set), _fmt(rec.width), _fmt(rec.height),
                           _fmt(rec.degenerate), rec.reason, _fmt(rec.seconds)]
                    )
                    if rec.geometry is not None:
                        gdir = out / "geometry" / label
                        gdir.mkdir(parents=True, exist_ok=True)
                        with open(gdir / f"run_{rec.index:04d}.json", "w") as gh:
                            json.dump(rec.geometry, gh, indent=1)
    except OSError as exc:
        raise OSError(f"writing report under {out}: {exc}") from exc
    return out / SUMMARY_FILE


def format_table(metrics: list[RunMetrics]) -> str:
    """Human-readable aggregate table for standard output."""
    names = _coord_names(metrics)
    cols = ["id", "kernel", "point"] + [f"mse_{c}" for c in names] + ["cov", "width", "height", "degen", "sec"]
    rows = []
    for met in metrics:
        point = ",".join(
            f"{k}={v}" for k, v in met.point.items() if k != "kernel"
        ) or "-"
        height = met.mean_height
        rows.append(
            [met.config.id, met.config.kernel.label, point]
            + [f"{v:.3g}" for v in met.mse]
            + [f"{met.coverage:.3f}", f"{met.mean_width:.4g}",
               "-" if height is None else f"{height:.4g}",
               str(met.degenerate_count), f"{met.mean_seconds:.2f}"]
        )
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)
