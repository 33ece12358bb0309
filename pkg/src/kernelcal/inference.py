"""Sandwich covariance plug-ins and confidence ellipsoids for the fitted parameter.

The asymptotic covariance of the estimator is ``H^-1 Sigma H^-1`` with ``H``
the Hessian of the population score and ``Sigma`` four times the covariance
(over data points) of the mean kernel gradient. Both are estimated on one
frozen latent sample of size ``n_c``; the confidence set is the ellipsoid

    { theta : || sqrt(m) Sigma^-1/2 H (theta - theta_hat) ||^2 <= chi2_{1-alpha}(p) }.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core_math import (
    BoxDomain,
    as_param,
    chi2_quantile,
    jacobi_eigh,
    sym_inverse,
    sym_inverse_sqrt,
    symmetrize,
)
from .estimator import ScoreContext, score_on_latents
from .exceptions import ConfigError, DomainError
from .kernels import pairwise
from .simulator import LatentBlock, draw_latent_blocks, pushforward_waiting_time
from . import autodiff as ad

__all__ = [
    "SandwichEstimate",
    "ConfidenceSet",
    "mean_kernel_gradients",
    "estimate_sigma",
    "finite_difference_hessian",
    "estimate_hessian",
    "estimate_sandwich",
    "build_confidence_set",
    "set_geometry",
    "confidence_set_from_dict",
]

_BLOCK = 1 << 20


def _simulate_frozen(ctx: ScoreContext, theta, latents: LatentBlock):
    y = pushforward_waiting_time(ctx.model, ad.lift_param(as_param(theta)), latents)
    return y.reshape(y.shape[0], 1)


def mean_kernel_gradients(ctx: ScoreContext, theta_hat, latents: LatentBlock) -> np.ndarray:
    """Per-observation mean gradient ``mu_i = 1/n_c sum_j grad k(G(Z_j), X_i)``, shape (m, p)."""
    y = _simulate_frozen(ctx, theta_hat, latents)
    yv, jac = y.value, y.grad
    nc = yv.shape[0]
    x = ctx.data
    out = np.zeros((x.shape[0], jac.shape[-1]))
    step = max(1, _BLOCK // max(x.shape[0] * x.shape[1], 1))
    for start in range(0, nc, step):
        stop = min(nc, start + step)
        _, g = pairwise(ctx.kernel, yv[start:stop], x, with_value=False)
        out += np.einsum("jid,jdp->ip", g, jac[start:stop])
    return out / nc


def estimate_sigma(ctx: ScoreContext, theta_hat, latents: LatentBlock) -> np.ndarray:
    """``4/(m-1) sum_i (mu_i - mu_bar)(mu_i - mu_bar)^T`` on frozen latents."""
    if ctx.m < 2:
        raise ConfigError("need m >= 2 to estimate Sigma")
    mu = mean_kernel_gradients(ctx, theta_hat, latents)
    centred = mu - mu.mean(axis=0)
    # deviations at rounding level of mu carry no information (identical X_i)
    scale = np.max(np.abs(mu), axis=0, initial=0.0)
    centred[np.abs(centred) <= 64 * np.finfo(float).eps * scale] = 0.0
    return symmetrize(4.0 / (ctx.m - 1) * np.einsum("ip,iq->pq", centred, centred))


def finite_difference_hessian(grad_fn, theta, h: float, domain: BoxDomain | None = None,
                              h_min: float = 1e-4) -> np.ndarray:
    """Central differences of ``grad_fn``: column i is (g(theta + h e_i) - g(theta - h e_i)) / 2h.

    If the stencil leaves ``domain`` the step is halved (with a warning)
    until it fits; below ``h_min`` a :class:`DomainError` is raised.
    """
    theta = as_param(theta)
    p = theta.shape[0]
    if domain is not None:
        lo = np.asarray(domain.lower)
        hi = np.asarray(domain.upper)
        h0 = h
        while np.any(theta - h < lo) or np.any(theta + h > hi):
            h *= 0.5
            if h < h_min:
                raise DomainError(f"finite-difference stencil around {theta} leaves the domain")
        if h != h0:
            warnings.warn(f"Hessian step shrunk from {h0:g} to {h:g} to stay inside the domain", stacklevel=2)
    hess = np.empty((p, p))
    for i in range(p):
        e = np.zeros(p)
        e[i] = h
        hess[:, i] = (np.asarray(grad_fn(theta + e)) - np.asarray(grad_fn(theta - e))) / (2.0 * h)
    return symmetrize(hess)


def estimate_hessian(ctx: ScoreContext, theta_hat, latents: LatentBlock, h: float = 0.1) -> np.ndarray:
    """Hessian of the kernel simulated score on frozen latents of size ``n_c``."""
    return finite_difference_hessian(
        lambda th: score_on_latents(ctx, th, latents)[1], theta_hat, h, ctx.domain
    )


@dataclass
class SandwichEstimate:
    H_hat: np.ndarray
    Sigma_hat: np.ndarray
    m: int
    n_c: int

    @property
    def C_hat(self) -> np.ndarray:
        """Godambe matrix ``H^-1 Sigma H^-1``."""
        h_inv = sym_inverse(self.H_hat)
        return symmetrize(h_inv @ self.Sigma_hat @ h_inv)


def estimate_sandwich(ctx: ScoreContext, theta_hat, n_c: int, rng: np.random.Generator,
                      h: float = 0.1) -> SandwichEstimate:
    """Draw one latent sample of size ``n_c`` and estimate both H and Sigma on it."""
    if n_c < 2:
        raise ConfigError("n_c must be at least 2")
    latents = draw_latent_blocks(ctx.model, n_c, rng)
    sigma = estimate_sigma(ctx, theta_hat, latents)
    hess = estimate_hessian(ctx, theta_hat, latents, h)
    return SandwichEstimate(hess, sigma, ctx.m, n_c)


@dataclass(frozen=True)
class ConfidenceSet:
    """Ellipsoid ``{theta : ||W (theta - center)||^2 <= threshold}``."""

    center: np.ndarray
    whitener: np.ndarray
    threshold: float
    alpha: float
    sandwich: SandwichEstimate | None = None

    @property
    def p(self) -> int:
        return self.center.shape[0]

    def statistic(self, theta) -> float:
        theta = as_param(theta)
        if theta.shape != self.center.shape:
            raise ValueError(f"expected a {self.p}-vector, got shape {theta.shape}")
        z = self.whitener @ (theta - self.center)
        return float(z @ z)

    def contains(self, theta) -> bool:
        return self.statistic(theta) <= self.threshold

    @property
    def shape_matrix(self) -> np.ndarray:
        """A = W^T W, so the set is (theta - c)^T A (theta - c) <= threshold."""
        return symmetrize(self.whitener.T @ self.whitener)

    def half_extents(self) -> np.ndarray:
        """Half-widths of the axis-aligned bounding box."""
        cov = sym_inverse(self.shape_matrix)
        return np.sqrt(self.threshold * np.diag(cov))

    def geometry(self, n_points: int = 256) -> dict:
        """Interval (p = 1) or ellipse (p = 2) description of the set."""
        if self.p == 1:
            half = math.sqrt(self.threshold) / abs(float(self.whitener[0, 0]))
            c = float(self.center[0])
            return {"interval": {"lo": c - half, "hi": c + half, "width": 2.0 * half}}
        if self.p != 2:
            raise NotImplementedError("geometry is only available for p <= 2")
        w, v = jacobi_eigh(self.shape_matrix)
        # ascending eigenvalues: the first eigenvector is the major axis
        axes = np.sqrt(self.threshold / w)
        angle = math.atan2(v[1, 0], v[0, 0])
        t = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
        pts = (
            self.center[None, :]
            + (axes[0] * np.cos(t))[:, None] * v[:, 0][None, :]
            + (axes[1] * np.sin(t))[:, None] * v[:, 1][None, :]
        )
        ext = self.half_extents()
        return {
            "ellipse": {
                "center": self.center.tolist(),
                "axes": axes.tolist(),
                "angle_rad": angle,
                "width": float(2.0 * ext[0]),
                "height": float(2.0 * ext[1]),
                "boundary_points": pts.tolist(),
            }
        }

    def widths(self) -> tuple[float, float | None]:
        """(width, height) as reported in experiment tables; height is None for p = 1."""
        ext = 2.0 * self.half_extents()
        return float(ext[0]), (float(ext[1]) if self.p >= 2 else None)

    def to_dict(self, n_points: int = 256) -> dict:
        d = {
            "alpha": self.alpha,
            "p": self.p,
            "center": self.center.tolist(),
            "threshold": self.threshold,
            "whitener": self.whitener.tolist(),
        }
        if self.sandwich is not None:
            d["H_hat"] = self.sandwich.H_hat.tolist()
            d["Sigma_hat"] = self.sandwich.Sigma_hat.tolist()
            d["C_hat"] = self.sandwich.C_hat.tolist()
            d["m"] = self.sandwich.m
            d["n_c"] = self.sandwich.n_c
        if self.p <= 2:
            d.update(self.geometry(n_points))
        return d

    def write_json(self, path, n_points: int = 256) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(n_points), fh, indent=2)


def build_confidence_set(sandwich: SandwichEstimate, theta_hat, alpha: float = 0.05) -> ConfidenceSet:
    """Precompute ``sqrt(m) Sigma^-1/2 H`` and the chi-square threshold."""
    theta_hat = as_param(theta_hat)
    p = theta_hat.shape[0]
    sigma = symmetrize(sandwich.Sigma_hat)
    hess = symmetrize(sandwich.H_hat)
    if sigma.shape != (p, p) or hess.shape != (p, p):
        raise ValueError("sandwich matrices do not match the parameter dimension")
    inv_sqrt = sym_inverse_sqrt(sigma)
    sym_inverse(hess)  # raises SingularMatrixError for a singular Hessian
    whitener = math.sqrt(sandwich.m) * inv_sqrt @ hess
    return ConfidenceSet(theta_hat.copy(), whitener, chi2_quantile(alpha, p), alpha, sandwich)


def set_geometry(cset: ConfidenceSet, n_points: int = 256) -> dict:
    return cset.geometry(n_points)


def confidence_set_from_dict(d: dict) -> ConfidenceSet:
    sandwich = None
    if "H_hat" in d:
        sandwich = SandwichEstimate(np.asarray(d["H_hat"]), np.asarray(d["Sigma_hat"]),
                                    int(d["m"]), int(d["n_c"]))
    return ConfidenceSet(np.asarray(d["center"], dtype=float), np.asarray(d["whitener"], dtype=float),
                         float(d["threshold"]), float(d["alpha"]), sandwich)

