"""Forward-mode automatic differentiation with numpy-backed dual numbers.

A :class:`Dual` carries a primal ``value`` of any shape ``S`` and a tangent
``grad`` of shape ``S + (p,)`` holding the derivative of every entry with
respect to the ``p`` calibration parameters. A scalar dual (``S == ()``) is
the usual value-plus-gradient pair; arrays of duals are simply duals with a
non-empty ``S``, which keeps the simulator and kernels vectorised.

Plain floats and arrays mixed into arithmetic are treated as constants.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Dual",
    "lift_param",
    "constant",
    "dual_arith",
    "dual_unary",
    "exp",
    "log",
    "sqrt",
    "absolute",
    "abs_smooth",
    "relu",
    "pow_const",
    "grad_check",
]


class Dual:
    """Primal value together with its gradient with respect to theta."""

    __slots__ = ("value", "grad")
    __array_ufunc__ = None  # make ndarray <op> Dual defer to Dual

    def __init__(self, value, grad):
        value = np.asarray(value, dtype=float)
        grad = np.asarray(grad, dtype=float)
        if grad.shape[:-1] != value.shape:
            raise ValueError(
                f"grad shape {grad.shape} does not match value shape {value.shape} + (p,)"
            )
        self.value = value
        self.grad = grad

    # -- structure ---------------------------------------------------------
    @property
    def p(self) -> int:
        return self.grad.shape[-1]

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.value[idx], self.grad[idx + (slice(None),)])

    def __repr__(self):
        return f"Dual(value={self.value!r}, grad={self.grad!r})"

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        axis = _normalize_axis(axis, self.ndim)
        return Dual(self.value.sum(axis=axis), self.grad.sum(axis=axis))

    def mean(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        axis = _normalize_axis(axis, self.ndim)
        return Dual(self.value.mean(axis=axis), self.grad.mean(axis=axis))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        value = self.value.reshape(shape)
        return Dual(value, self.grad.reshape(value.shape + (self.p,)))

    # -- arithmetic --------------------------------------------------------
    def __neg__(self):
        return Dual(-self.value, -self.grad)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            # the trailing gradient axis lines up under ordinary broadcasting
            return Dual(self.value + other.value, self.grad + other.grad)
        other = np.asarray(other, dtype=float)
        value = self.value + other
        grad = self.grad
        if value.shape != self.value.shape:
            grad = np.broadcast_to(grad, value.shape + (self.p,))
        return Dual(value, grad)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            grad = self.grad * other.value[..., None] + other.grad * self.value[..., None]
            return Dual(self.value * other.value, grad)
        other = np.asarray(other, dtype=float)
        return Dual(self.value * other, self.grad * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if np.any(other.value == 0):
                raise DomainError("division by a dual with zero value")
            value = self.value / other.value
            grad = (self.grad - value[..., None] * other.grad) / other.value[..., None]
            return Dual(value, grad)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise DomainError("division by zero")
        return Dual(self.value / other, self.grad / other[..., None])

    def __rtruediv__(self, other):
        if np.any(self.value == 0):
            raise DomainError("division by a dual with zero value")
        other = np.asarray(other, dtype=float)
        value = other / self.value
        return Dual(value, -(value / self.value)[..., None] * self.grad)

    def __pow__(self, c):
        return pow_const(self, c)


def _normalize_axis(axis, ndim):
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def constant(x, p: int) -> Dual:
    """Lift a constant (scalar or array) to a dual with zero gradient."""
    x = np.asarray(x, dtype=float)
    return Dual(x, np.zeros(x.shape + (p,)))


def lift_param(theta) -> Dual:
    """Seed the parameter vector: entry i has value theta[i] and gradient e_i."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = theta.shape[0]
    return Dual(theta.copy(), np.eye(p))


def _chain(a: Dual, value, deriv):
    return Dual(value, a.grad * np.asarray(deriv)[..., None])


def exp(a: Dual) -> Dual:
    v = np.exp(a.value)
    return _chain(a, v, v)


def log(a: Dual) -> Dual:
    if np.any(a.value <= 0):
        raise DomainError("log of a nonpositive value")
    return _chain(a, np.log(a.value), 1.0 / a.value)


def sqrt(a: Dual) -> Dual:
    if np.any(a.value <= 0):
        raise DomainError("sqrt needs a positive value for a finite derivative")
    v = np.sqrt(a.value)
    return _chain(a, v, 0.5 / v)


def absolute(a: Dual) -> Dual:
    """|x| with derivative sign(x) (0 at the kink)."""
    return _chain(a, np.abs(a.value), np.sign(a.value))


def abs_smooth(a: Dual, eps: float) -> Dual:
    """sqrt(x^2 + eps), a smooth surrogate for |x|; derivative 0 at x == 0 when eps == 0."""
    if eps < 0:
        raise DomainError("smoothing eps must be nonnegative")
    v = np.sqrt(a.value * a.value + eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(v > 0, a.value / np.where(v > 0, v, 1.0), 0.0)
    return _chain(a, v, d)


def relu(a: Dual) -> Dual:
    """max(x, 0); the derivative at exactly 0 is taken as 0."""
    mask = a.value > 0
    return _chain(a, np.where(mask, a.value, 0.0), mask.astype(float))


def pow_const(a: Dual, c: float) -> Dual:
    c = float(c)
    if not c.is_integer() and np.any(a.value <= 0):
        raise DomainError("non-integer power of a nonpositive value")
    if c == 0:
        return constant(np.ones_like(a.value), a.p)
    return _chain(a, a.value**c, c * a.value ** (c - 1.0))


_ARITH = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}

_UNARY = {
    "neg": lambda a: -a,
    "exp": exp,
    "ln": log,
    "log": log,
    "sqrt": sqrt,
    "abs": absolute,
    "relu": relu,
}


def dual_arith(a, b, op: str) -> Dual:
    """Binary arithmetic by name: ``add``, ``sub``, ``mul`` or ``div``."""
    try:
        fn = _ARITH[op]
    except KeyError:
        raise ValueError(f"unknown binary op {op!r}") from None
    return fn(a, b)


def dual_unary(a: Dual, op: str, arg: float | None = None) -> Dual:
    """Unary op by name; ``abs_smooth`` takes eps and ``pow_const`` the exponent as ``arg``."""
    if op == "abs_smooth":
        return abs_smooth(a, 0.0 if arg is None else arg)
    if op == "pow_const":
        if arg is None:
            raise ValueError("pow_const needs an exponent")
        return pow_const(a, arg)
    try:
        fn = _UNARY[op]
    except KeyError:
        raise ValueError(f"unknown unary op {op!r}") from None
    return fn(a)


def grad_check(f, theta, h: float = 1e-5) -> float:
    """Compare forward-mode gradients of ``f`` with central differences.

    ``f`` maps a parameter dual (as produced by :func:`lift_param`) to a
    scalar dual and must reuse the same randomness on every call. Returns
    ``max_i |ad_i - fd_i| / (1 + |fd_i|)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = theta.shape[0]
    ad = np.asarray(f(lift_param(theta)).grad, dtype=float).reshape(p)
    worst = 0.0
    for i in range(p):
        step = np.zeros(p)
        step[i] = h
        fp = float(f(constant(theta + step, p)).value)
        fm = float(f(constant(theta - step, p)).value)
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(ad[i] - fd) / (1.0 + abs(fd)))
    return worst
