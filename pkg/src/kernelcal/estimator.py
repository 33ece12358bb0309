"""Kernel simulated score, its U-statistic gradient and projected SGD.

For simulated outputs ``Y_1..Y_n`` (duals in theta) and data ``X_1..X_m``
the kernel simulated score is::

    L(theta) = 1/(n(n-1)) sum_{i != j} k(Y_i, Y_j) - 2/(mn) sum_{i,j} k(Y_j, X_i)

Its gradient is evaluated exactly for fixed latent draws. All kernels are
functions of the difference of their arguments, so per pair only
``dk/dY`` is needed; it is contracted with the output Jacobian ``dY/dtheta``
once per replication, giving ``O((n^2 + mn) d + n d p)`` work.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Dual
from .core_math import BoxDomain, as_param, project
from .exceptions import ConfigError, DivergedError, DomainError
from .kernels import KernelSpec, pair_sums
from .simulator import (
    GG1Model,
    LatentBlock,
    TargetSystem,
    draw_latent_blocks,
    generate_target_data,
    pushforward_waiting_time,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ScoreContext",
    "SGDConfig",
    "CalibrationResult",
    "kernel_simulated_score",
    "data_self_term",
    "full_mmd2",
    "score_on_latents",
    "score_gradient_step",
    "calibrate",
    "estimate_optimal_parameter",
]

@dataclass
class ScoreContext:
    """Everything the score needs apart from theta and the random stream."""

    data: np.ndarray
    kernel: KernelSpec
    model: GG1Model
    domain: BoxDomain
    n: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        self.data = data
        if data.shape[0] < 2:
            raise ConfigError("need at least two data points")
        if self.n < 2:
            raise ConfigError("need n >= 2 simulated replications (U-statistic)")
        if not self.kernel.resolved:
            self.kernel = self.kernel.resolve(data)
        if self.domain.dim != self.model.p:
            raise ConfigError(
                f"domain dimension {self.domain.dim} != model parameter count {self.model.p}"
            )

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def ratio(self) -> float:
        """Sample-size ratio n / (m + n)."""
        return self.n / (self.m + self.n)


@dataclass(frozen=True)
class SGDConfig:
    """Projected SGD settings; the step scale at iteration t is ``eta0 / sqrt(1 + t)``."""

    eta0: float = 1.0
    max_iters: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    averaging_window: int = 0
    seed: int | None = None

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ConfigError("eta0 must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if not (0 <= self.averaging_window <= max(self.max_iters, 0)):
            raise ConfigError("averaging_window must lie in [0, max_iters]")


@dataclass
class CalibrationResult:
    theta_hat: np.ndarray
    theta0: np.ndarray
    score_trace: np.ndarray
    theta_trace: np.ndarray = field(repr=False)
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.score_trace)

    def write_trace(self, path) -> None:
        """CSV with columns iteration, score, theta_0..theta_{p-1}."""
        p = self.theta_hat.shape[0]
        with open(path, "w") as fh:
            fh.write(",".join(["iteration", "score"] + [f"theta_{i}" for i in range(p)]) + "\n")
            for t, (s, th) in enumerate(zip(self.score_trace, self.theta_trace)):
                fh.write(",".join([str(t), repr(float(s))] + [repr(float(v)) for v in th]) + "\n")


def kernel_simulated_score(ctx: ScoreContext, y: Dual) -> Dual:
    """U-statistic kernel simulated score of the simulated sample ``y`` (n x d dual)."""
    yv = y.value
    if yv.ndim == 1:
        y = y.reshape(-1, 1)
        yv = y.value
    n = yv.shape[0]
    if n < 2:
        raise ConfigError("kernel simulated score needs n >= 2")
    x = ctx.data
    m = x.shape[0]
    if yv.shape[1] != x.shape[1]:
        raise ValueError(f"simulated dimension {yv.shape[1]} != data dimension {x.shape[1]}")
    pair_total, rows, cols = pair_sums(ctx.kernel, yv, yv, same=True)
    cross_total, cross_rows, _ = pair_sums(ctx.kernel, yv, x)
    value = pair_total / (n * (n - 1)) - 2.0 * cross_total / (m * n)
    coef = (rows - cols) / (n * (n - 1)) - 2.0 * cross_rows / (m * n)
    grad = np.einsum("nd,ndp->p", coef, y.grad)
    return Dual(value, grad)


def data_self_term(ctx: ScoreContext) -> float:
    """1/(m(m-1)) sum_{i != j} k(X_i, X_j), constant in theta."""
    total, _, _ = pair_sums(ctx.kernel, ctx.data, ctx.data, same=True)
    return total / (ctx.m * (ctx.m - 1))


def full_mmd2(ctx: ScoreContext, y: Dual) -> float:
    """Unbiased squared-MMD estimate between the simulated sample and the data."""
    return float(kernel_simulated_score(ctx, y).value) + data_self_term(ctx)


def score_on_latents(ctx: ScoreContext, theta, latents: LatentBlock) -> tuple[float, np.ndarray]:
    """Score and gradient at ``theta`` for given (frozen) latent blocks."""
    theta = as_param(theta)
    y = pushforward_waiting_time(ctx.model, ad.lift_param(theta), latents)
    y = y.reshape(y.shape[0], 1)
    score = kernel_simulated_score(ctx, y)
    return float(score.value), np.asarray(score.grad, dtype=float)


def score_gradient_step(ctx: ScoreContext, theta, rng: np.random.Generator):
    """Draw a fresh simulated sample of size ``ctx.n`` and return ``(score, grad)``."""
    latents = draw_latent_blocks(ctx.model, ctx.n, rng)
    return score_on_latents(ctx, theta, latents)


def calibrate(
    ctx: ScoreContext,
    cfg: SGDConfig,
    theta0,
    rng: np.random.Generator | None = None,
) -> CalibrationResult:
    """Projected (Adam) SGD on the kernel simulated score."""
    theta0 = as_param(theta0)
    if not ctx.domain.contains(theta0):
        raise DomainError(f"theta0 {theta0} lies outside the domain {ctx.domain}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    p = theta0.shape[0]
    theta = theta0.copy()
    first = np.zeros(p)
    second = np.zeros(p)
    scores = np.empty(cfg.max_iters)
    trace = np.empty((cfg.max_iters, p))
    start = time.perf_counter()
    for t in range(cfg.max_iters):
        score, grad = score_gradient_step(ctx, theta, rng)
        if not (math.isfinite(score) and np.all(np.isfinite(grad))):
            raise DivergedError(f"non-finite score or gradient at iteration {t}", t)
        lr = cfg.eta0 / math.sqrt(1.0 + t)
        if cfg.optimizer == "adam":
            first = cfg.beta1 * first + (1.0 - cfg.beta1) * grad
            second = cfg.beta2 * second + (1.0 - cfg.beta2) * grad * grad
            m_hat = first / (1.0 - cfg.beta1 ** (t + 1))
            v_hat = second / (1.0 - cfg.beta2 ** (t + 1))
            step = lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
        else:
            step = lr * grad
        theta = project(theta - step, ctx.domain)
        scores[t] = score
        trace[t] = theta
    if cfg.averaging_window > 0:
        theta_hat = trace[-cfg.averaging_window :].mean(axis=0)
    else:
        theta_hat = theta
    elapsed = time.perf_counter() - start
    logger.debug("calibrated to %s in %.2fs (%d iterations)", theta_hat, elapsed, cfg.max_iters)
    return CalibrationResult(theta_hat, theta0, scores, trace, elapsed)


def estimate_optimal_parameter(
    target: TargetSystem,
    model: GG1Model,
    kernel: KernelSpec,
    cfg: SGDConfig,
    domain: BoxDomain,
    rng: np.random.Generator,
    m: int = 5000,
    n: int = 1000,
    theta0=None,
) -> np.ndarray:
    """Reference optimum from a large target sample, tail-averaged SGD.

    Used as the truth for MSE and coverage when the model is inexact.
    """
    data = generate_target_data(target, m, rng)
    ctx = ScoreContext(data, kernel, model, domain, n)
    if theta0 is None:
        theta0 = domain.sample(rng)
    return calibrate(ctx, cfg, theta0, rng).theta_hat
