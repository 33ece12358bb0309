"""Parameter-space primitives, small symmetric linear algebra and the chi-square quantile.

Everything here works on tiny dense problems (the parameter dimension is at
most a handful), so clarity beats vectorisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NotPositiveDefiniteError, SingularMatrixError

__all__ = [
    "BoxDomain",
    "as_param",
    "project",
    "regularized_lower_gamma",
    "chi2_cdf",
    "chi2_quantile",
    "symmetrize",
    "jacobi_eigh",
    "sym_inverse",
    "sym_inverse_sqrt",
]


def as_param(theta) -> np.ndarray:
    """Return ``theta`` as a finite 1-d float array (a parameter vector)."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"parameter vector must be 1-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"parameter vector has non-finite entries: {arr}")
    return arr


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]`` in parameter space."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper elementwise, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, theta) -> bool:
        theta = as_param(theta)
        if theta.shape[0] != self.dim:
            return False
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw from the box."""
        return rng.uniform(np.asarray(self.lower), np.asarray(self.upper))


def project(theta, domain: BoxDomain) -> np.ndarray:
    """Euclidean projection onto the box (per-coordinate clamp)."""
    theta = as_param(theta)
    if theta.shape[0] != domain.dim:
        raise ValueError(
            f"dimension mismatch: theta has {theta.shape[0]} entries, domain {domain.dim}"
        )
    return np.minimum(np.maximum(theta, domain.lower), domain.upper)


# --------------------------------------------------------------------------
# chi-square distribution

_EPS = 1e-16
_TINY = 1e-300


def _lower_gamma_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cfrac(a, x):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _lower_gamma_series(a, x)
    return 1.0 - _upper_gamma_cfrac(a, x)


def chi2_cdf(q: float, p: int) -> float:
    """CDF of the chi-square distribution with ``p`` degrees of freedom."""
    if q <= 0:
        return 0.0
    return regularized_lower_gamma(p / 2.0, q / 2.0)


def _chi2_pdf(q, p):
    a = p / 2.0
    return math.exp((a - 1.0) * math.log(q) - q / 2.0 - math.lgamma(a) - a * math.log(2.0))


def chi2_quantile(alpha: float, p: int) -> float:
    """Upper ``alpha`` quantile of chi-square(p): the q with CDF(q) = 1 - alpha.

    Safeguarded Newton iteration inside a bisection bracket.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if int(p) != p or p < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {p}")
    p = int(p)
    target = 1.0 - alpha

    lo, hi = 0.0, max(1.0, float(p))
    while chi2_cdf(hi, p) < target:
        lo, hi = hi, 2.0 * hi
    q = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(q, p) - target
        if f > 0:
            hi = q
        else:
            lo = q
        if abs(f) < 1e-15 or hi - lo < 1e-15 * max(1.0, q):
            break
        dens = _chi2_pdf(q, p)
        step = q - f / dens if dens > 0 else None
        q = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return q


# --------------------------------------------------------------------------
# symmetric matrices


def symmetrize(m) -> np.ndarray:
    """(M + M^T) / 2, exactly symmetric."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    s = 0.5 * (m + m.T)
    # the two triangles can differ in the last bit; copy one over the other
    iu = np.triu_indices_from(s, 1)
    s.T[iu] = s[iu]
    return s


def jacobi_eigh(m, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ascending eigenvalues ``w`` and orthonormal columns
    ``V`` such that ``M = V diag(w) V^T``.
    """
    a = symmetrize(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a)) or 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if a[i, j] == 0.0:
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[i, i] = rot[j, j] = c
                rot[i, j] = s
                rot[j, i] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def sym_inverse(m) -> np.ndarray:
    """Inverse of a symmetric, numerically nonsingular matrix."""
    w, v = jacobi_eigh(m)
    absw = np.abs(w)
    big = absw.max() if absw.size else 0.0
    if big == 0.0 or absw.min() <= 1e-12 * big:
        cond = float("inf") if absw.min() == 0 else big / absw.min()
        raise SingularMatrixError(f"matrix is numerically singular (condition {cond:.3g})", cond)
    return symmetrize((v / w) @ v.T)


def sym_inverse_sqrt(m, rtol: float = 1e-12) -> np.ndarray:
    """Inverse square root ``A`` of an SPD matrix, so that ``A M A = I``."""
    w, v = jacobi_eigh(m)
    big = np.abs(w).max() if w.size else 0.0
    if w.size == 0 or w[0] <= rtol * big:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (smallest eigenvalue {w[0] if w.size else 'n/a'})",
            float(w[0]) if w.size else float("nan"),
        )
    return symmetrize((v / np.sqrt(w)) @ v.T)
