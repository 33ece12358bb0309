"""Translation-invariant kernels used by the kernel score.

All three kernels depend on ``x - y`` only:

* Gaussian   ``exp(-||x - y||_2^2 / (2 sigma))``
* Laplacian  ``exp(-||x - y||_1 / sigma)``
* Riesz      ``-1/2 (||x - y||_2^2 + eps)^(beta / 2)``

The Gaussian bandwidth may be left as ``"median"`` and resolved from data
with :func:`median_heuristic`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numba
import numpy as np

from . import autodiff as ad
from .autodiff import Dual
from .exceptions import ConfigError, DegenerateDataError

__all__ = [
    "KernelSpec",
    "gaussian",
    "laplacian",
    "riesz",
    "median_heuristic",
    "eval_kernel",
    "eval_dual",
    "pairwise",
    "pair_sums",
]

MEDIAN = "median"
_KINDS = ("gaussian", "laplacian", "riesz")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus hyperparameters.

    ``sigma`` is used by the Gaussian and Laplacian kernels (``"median"`` for
    the Gaussian defers to the median heuristic); ``beta`` and ``epsilon`` by
    the Riesz kernel.
    """

    kind: str = "riesz"
    sigma: float | str | None = None
    beta: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}; choose from {_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "riesz":
            if not (0.0 < self.beta <= 2.0):
                raise ConfigError(f"Riesz beta must lie in (0, 2], got {self.beta}")
            if self.epsilon < 0:
                raise ConfigError("Riesz epsilon must be nonnegative")
            if self.beta == 2.0:
                warnings.warn(
                    "Riesz kernel with beta=2 gives a proper but not strictly proper score",
                    stacklevel=3,
                )
        else:
            sigma = self.sigma
            if sigma is None:
                sigma = MEDIAN if kind == "gaussian" else None
            if sigma is None:
                raise ConfigError("Laplacian kernel needs an explicit sigma")
            if sigma == MEDIAN and kind != "gaussian":
                raise ConfigError("the median heuristic is only wired for the Gaussian kernel")
            if sigma != MEDIAN and not float(sigma) > 0:
                raise ConfigError(f"sigma must be positive, got {sigma}")
            object.__setattr__(self, "sigma", sigma if sigma == MEDIAN else float(sigma))

    @property
    def resolved(self) -> bool:
        return self.kind == "riesz" or self.sigma != MEDIAN

    def resolve(self, data) -> "KernelSpec":
        """Fix a pending median-heuristic bandwidth from ``data``."""
        if self.resolved:
            return self
        return replace(self, sigma=median_heuristic(data))

    @property
    def label(self) -> str:
        if self.kind == "riesz":
            return f"riesz(beta={self.beta:g})"
        return f"{self.kind}(sigma={self.sigma if isinstance(self.sigma, str) else f'{self.sigma:.6g}'})"

    def to_dict(self) -> dict:
        if self.kind == "riesz":
            return {"kind": "riesz", "beta": self.beta, "epsilon": self.epsilon}
        return {"kind": self.kind, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)


def gaussian(sigma=MEDIAN) -> KernelSpec:
    return KernelSpec("gaussian", sigma=sigma)


def laplacian(sigma) -> KernelSpec:
    return KernelSpec("laplacian", sigma=sigma)


def riesz(beta=1.0, epsilon=1e-8) -> KernelSpec:
    return KernelSpec("riesz", beta=beta, epsilon=epsilon)


def median_heuristic(data) -> float:
    """Half the median squared Euclidean distance over all unordered pairs."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise DegenerateDataError("median heuristic needs at least two points")
    iu, ju = np.triu_indices(n, 1)
    sq = np.sum((x[iu] - x[ju]) ** 2, axis=1)
    sigma = 0.5 * float(np.median(sq))
    if sigma <= 0:
        raise DegenerateDataError("median pairwise distance is zero; bandwidth would vanish")
    return sigma


def _check_resolved(spec: KernelSpec):
    if not spec.resolved:
        raise ConfigError("kernel bandwidth is still pending the median heuristic; call resolve()")


def eval_kernel(spec: KernelSpec, x, y) -> np.ndarray:
    """k(x, y) over the trailing (data) axis; leading axes broadcast."""
    _check_resolved(spec)
    diff = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(y, dtype=float))
    if spec.kind == "gaussian":
        return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * spec.sigma))
    if spec.kind == "laplacian":
        return np.exp(-np.sum(np.abs(diff), axis=-1) / spec.sigma)
    sq = np.sum(diff * diff, axis=-1) + spec.epsilon
    return -0.5 * sq ** (spec.beta / 2.0)


def eval_dual(spec: KernelSpec, x, y) -> Dual:
    """k(x, y) as a dual, chain rule taken through both arguments.

    Either argument may be a constant array (data points). For the Riesz
    kernel at coincident points with ``epsilon == 0`` the derivative is 0.
    """
    _check_resolved(spec)
    p = x.p if isinstance(x, Dual) else y.p
    if not isinstance(x, Dual):
        x = ad.constant(np.atleast_1d(x), p)
    if not isinstance(y, Dual):
        y = ad.constant(np.atleast_1d(y), p)
    diff = x - y
    if spec.kind == "gaussian":
        return ad.exp(-(diff * diff).sum(axis=-1) / (2.0 * spec.sigma))
    if spec.kind == "laplacian":
        return ad.exp(-ad.absolute(diff).sum(axis=-1) / spec.sigma)
    s = (diff * diff).sum(axis=-1) + spec.epsilon
    half = spec.beta / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        deriv = np.where(s.value > 0, half * s.value ** (half - 1.0), 0.0)
    return Dual(-0.5 * s.value**half, -0.5 * deriv[..., None] * s.grad)


def pairwise(spec: KernelSpec, a, b, with_value: bool = True):
    """Kernel matrix and its derivative in the first argument.

    For ``a`` of shape ``(na, d)`` and ``b`` of shape ``(nb, d)`` returns
    ``(K, G)`` with ``K[i, j] = k(a_i, b_j)`` and
    ``G[i, j] = d k(a_i, b_j) / d a_i`` (shape ``(na, nb, d)``). Because all
    kernels are functions of ``a - b``, the derivative in the second argument
    is ``-G``.
    """
    _check_resolved(spec)
    diff = a[:, None, :] - b[None, :, :]
    if spec.kind == "gaussian":
        k = np.exp(np.sum(diff * diff, axis=-1) * (-0.5 / spec.sigma))
        g = diff * (k * (-1.0 / spec.sigma))[..., None]
    elif spec.kind == "laplacian":
        k = np.exp(np.sum(np.abs(diff), axis=-1) * (-1.0 / spec.sigma))
        g = np.sign(diff) * (k * (-1.0 / spec.sigma))[..., None]
    else:
        s = np.sum(diff * diff, axis=-1) + spec.epsilon
        half = spec.beta / 2.0
        if spec.beta == 1.0:
            r = np.sqrt(s)
            k = -0.5 * r if with_value else None
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(r > 0, -0.5 / r, 0.0)
        else:
            k = -0.5 * s**half if with_value else None
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(s > 0, -half * s ** (half - 1.0), 0.0)
        g = diff * w[..., None]
    return k, g


_KIND_CODE = {"gaussian": 0, "laplacian": 1, "riesz": 2}


@numba.njit(cache=True)
def _pair_loop(a, b, same, kind, sigma, beta, eps):
    # generic d: one pass, no na x nb temporaries
    na, d = a.shape
    nb = b.shape[0]
    total = 0.0
    rows = np.zeros((na, d))
    cols = np.zeros((nb, d))
    half = 0.5 * beta
    diff = np.empty(d)
    for i in range(na):
        # with a == b only i < j is visited: k is symmetric and dk/da flips sign
        start = i + 1 if same else 0
        for j in range(start, nb):
            sq = 0.0
            l1 = 0.0
            for t in range(d):
                diff[t] = a[i, t] - b[j, t]
                sq += diff[t] * diff[t]
                l1 += abs(diff[t])
            if kind == 0:
                k = np.exp(-0.5 * sq / sigma)
                w = -k / sigma
            elif kind == 1:
                k = np.exp(-l1 / sigma)
                w = -k / sigma
            else:
                s = sq + eps
                if beta == 1.0:
                    r = np.sqrt(s)
                    k = -0.5 * r
                    w = -0.5 / r if r > 0.0 else 0.0
                else:
                    k = -0.5 * s**half
                    w = -half * s ** (half - 1.0) if s > 0.0 else 0.0
            for t in range(d):
                if kind == 1:
                    g = w * np.sign(diff[t])
                else:
                    g = w * diff[t]
                rows[i, t] += g
                cols[j, t] += g
                if same:
                    rows[j, t] -= g
                    cols[i, t] -= g
            total += 2.0 * k if same else k
    return total, rows, cols


@numba.njit(cache=True)
def _pair_loop_1d(a, b, same, kind, sigma, beta, eps):
    # d == 1 with the kernel branch hoisted out of the inner loop
    na = a.shape[0]
    nb = b.shape[0]
    total = 0.0
    rows = np.zeros(na)
    acc = np.zeros(nb)
    half = 0.5 * beta
    for i in range(na):
        ai = a[i]
        row = 0.0
        tot = 0.0
        start = i + 1 if same else 0
        if kind == 0:
            c = -0.5 / sigma
            for j in range(start, nb):
                dt = ai - b[j]
                k = np.exp(c * dt * dt)
                tot += k
                g = -k * dt / sigma
                row += g
                acc[j] += g
        elif kind == 1:
            for j in range(start, nb):
                dt = ai - b[j]
                k = np.exp(-abs(dt) / sigma)
                tot += k
                g = -k * np.sign(dt) / sigma
                row += g
                acc[j] += g
        elif beta == 1.0:
            for j in range(start, nb):
                dt = ai - b[j]
                r = np.sqrt(dt * dt + eps)
                tot -= 0.5 * r
                g = -0.5 * dt / r if r > 0.0 else 0.0
                row += g
                acc[j] += g
        else:
            for j in range(start, nb):
                dt = ai - b[j]
                s = dt * dt + eps
                tot -= 0.5 * s**half
                g = -half * s ** (half - 1.0) * dt if s > 0.0 else 0.0
                row += g
                acc[j] += g
        rows[i] = row
        total += tot
    if same:
        # the mirrored pair (j, i) contributes -g to row j and +g to column i
        rows = rows - acc
        return 2.0 * total, rows, -rows
    return total, rows, acc


def pair_sums(spec: KernelSpec, a, b, same: bool = False):
    """Fused reductions of the kernel matrix between ``a`` (na, d) and ``b`` (nb, d).

    Returns ``(total, rows, cols)`` where ``total = sum_{i,j} k(a_i, b_j)``,
    ``rows[i] = sum_j dk(a_i, b_j)/da_i`` and ``cols[j] = sum_i dk(a_i, b_j)/da_i``.
    With ``same=True`` (``a is b``) the diagonal is excluded from ``total``;
    its derivative terms are zero anyway. No ``na x nb`` array is formed.
    """
    _check_resolved(spec)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"expected (na, d) and (nb, d) arrays, got {a.shape} and {b.shape}")
    if same and a.shape != b.shape:
        raise ValueError("same=True needs identical samples")
    sigma = float(spec.sigma) if spec.kind != "riesz" else 1.0
    args = (bool(same), _KIND_CODE[spec.kind], sigma, float(spec.beta), float(spec.epsilon))
    if a.shape[1] == 1:
        total, rows, cols = _pair_loop_1d(a[:, 0], b[:, 0], *args)
        return total, rows[:, None], cols[:, None]
    return _pair_loop(a, b, *args)
