"""G/G/1 queue simulation as a pushforward of reference draws.

Service and inter-arrival times are produced by scaling rate-one reference
draws, ``S = Z / mu``: ``Z ~ Exp(1)`` gives ``Exp(mu)`` and
``Z ~ Gamma(a, 1)`` gives ``Gamma(a, mu)``. Waiting times then follow the
Lindley recursion ``W_{j+1} = max(0, W_j + S_j - T_j)`` started from
``W_0 = 0``; one replication outputs the average of ``W_{B+1}, ..., W_{B+T}``
after ``B`` burn-in customers. Because the map from theta to the output is a
composition of divisions and ReLUs, forward-mode duals carry exact pathwise
gradients through it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Dual
from .exceptions import ConfigError, DomainError

__all__ = [
    "Dist",
    "GG1Model",
    "TargetSystem",
    "LatentBlock",
    "draw_reference",
    "draw_latent_block",
    "draw_latent_blocks",
    "lindley_average",
    "pushforward_waiting_time",
    "simulate_model_sample",
    "generate_target_data",
    "read_data_csv",
    "write_data_csv",
]


@dataclass(frozen=True)
class Dist:
    """Exponential or Gamma distribution with a fixed or theta-driven rate.

    Exactly one of ``rate`` (a constant) and ``param`` (an index into theta)
    is set for model slots; target-system slots always carry a fixed rate.
    ``shape`` is ignored for ``family == "exp"``.
    """

    family: str = "exp"
    rate: float | None = None
    param: int | None = None
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in ("exp", "gamma"):
            raise ConfigError(f"unknown distribution family {self.family!r}")
        if (self.rate is None) == (self.param is None):
            raise ConfigError("set exactly one of rate (fixed) and param (theta index)")
        if self.rate is not None and not self.rate > 0:
            raise ConfigError(f"rate must be positive, got {self.rate}")
        if self.family == "gamma" and not self.shape > 0:
            raise ConfigError(f"gamma shape must be positive, got {self.shape}")
        if self.family == "exp":
            object.__setattr__(self, "shape", 1.0)

    @classmethod
    def exp(cls, rate=None, param=None):
        return cls("exp", rate=rate, param=param)

    @classmethod
    def gamma(cls, shape, rate=None, param=None):
        return cls("gamma", rate=rate, param=param, shape=shape)

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "gamma":
            d["shape"] = self.shape
        if self.rate is not None:
            d["rate"] = self.rate
        else:
            d["param"] = self.param
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Dist":
        return cls(**d)

    def describe(self) -> str:
        rate = f"{self.rate:g}" if self.rate is not None else f"theta[{self.param}]"
        if self.family == "exp":
            return f"Exp({rate})"
        return f"Gamma({self.shape:g}, {rate})"


def draw_reference(dist: Dist, size, rng: np.random.Generator) -> np.ndarray:
    """Rate-one reference draws for ``dist``: Exp(1) or Gamma(shape, 1)."""
    if dist.family == "exp" or dist.shape == 1.0:
        return rng.standard_exponential(size)
    if dist.shape == 0.5:
        g = rng.standard_normal(size)
        return 0.5 * g * g
    return rng.standard_gamma(dist.shape, size)


@dataclass(frozen=True)
class GG1Model:
    """G/G/1 simulation model whose rates are (partly) given by theta."""

    arrival: Dist
    service: Dist
    burn_in: int = 10
    horizon: int = 50

    def __post_init__(self):
        if self.burn_in < 0 or self.horizon < 1:
            raise ConfigError("need burn_in >= 0 and horizon >= 1")
        used = sorted(d.param for d in (self.arrival, self.service) if d.param is not None)
        if not used:
            raise ConfigError("model has no theta-driven rate")
        if used != list(range(len(used))):
            raise ConfigError(f"theta indices must be 0..p-1 each used once, got {used}")

    @property
    def p(self) -> int:
        return sum(d.param is not None for d in (self.arrival, self.service))

    @property
    def length(self) -> int:
        return self.burn_in + self.horizon

    @property
    def param_names(self) -> list[str]:
        names = [""] * self.p
        if self.service.param is not None:
            names[self.service.param] = "mu"
        if self.arrival.param is not None:
            names[self.arrival.param] = "lambda"
        return names

    def to_dict(self) -> dict:
        return {
            "arrival": self.arrival.to_dict(),
            "service": self.service.to_dict(),
            "burn_in": self.burn_in,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GG1Model":
        return cls(
            arrival=Dist.from_dict(d["arrival"]),
            service=Dist.from_dict(d["service"]),
            burn_in=int(d.get("burn_in", 10)),
            horizon=int(d.get("horizon", 50)),
        )


@dataclass(frozen=True)
class TargetSystem:
    """Fully specified G/G/1 queue standing in for the real system.

    A fraction ``contamination`` of the generated observations receives
    additive ``N(0, noise_sd^2)`` noise.
    """

    arrival: Dist
    service: Dist
    burn_in: int = 10
    horizon: int = 50
    contamination: float = 0.0
    noise_sd: float = 0.1

    def __post_init__(self):
        for d in (self.arrival, self.service):
            if d.rate is None:
                raise ConfigError("target-system distributions need fixed rates")
        if not (0.0 <= self.contamination <= 1.0):
            raise ConfigError("contamination fraction must lie in [0, 1]")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")
        if self.burn_in < 0 or self.horizon < 1:
            raise ConfigError("need burn_in >= 0 and horizon >= 1")

    def to_dict(self) -> dict:
        return {
            "arrival": self.arrival.to_dict(),
            "service": self.service.to_dict(),
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "contamination": self.contamination,
            "noise_sd": self.noise_sd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSystem":
        return cls(
            arrival=Dist.from_dict(d["arrival"]),
            service=Dist.from_dict(d["service"]),
            burn_in=int(d.get("burn_in", 10)),
            horizon=int(d.get("horizon", 50)),
            contamination=float(d.get("contamination", 0.0)),
            noise_sd=float(d.get("noise_sd", 0.1)),
        )


@dataclass
class LatentBlock:
    """Reference draws for one or more replications (last axis = customers)."""

    service: np.ndarray
    arrival: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.service.shape != self.arrival.shape:
            raise ValueError("service and arrival latents must have the same shape")

    def __len__(self):
        return self.service.shape[-1]

    def __getitem__(self, idx):
        return LatentBlock(self.service[idx], self.arrival[idx])


def draw_latent_blocks(model: GG1Model, n: int, rng: np.random.Generator) -> LatentBlock:
    """``n`` independent latent blocks, stacked along axis 0."""
    size = (n, model.length)
    service = draw_reference(model.service, size, rng)
    arrival = draw_reference(model.arrival, size, rng)
    return LatentBlock(service, arrival)


def draw_latent_block(model: GG1Model, rng: np.random.Generator) -> LatentBlock:
    """A single latent block (one replication)."""
    return draw_latent_blocks(model, 1, rng)[0]


def lindley_average(service_times, interarrival_times, burn_in: int) -> np.ndarray:
    """Average post-burn-in waiting time, plain floats, vectorised over leading axes."""
    s = np.asarray(service_times, dtype=float)
    t = np.asarray(interarrival_times, dtype=float)
    d = s - t
    w = np.zeros(d.shape[:-1])
    acc = np.zeros(d.shape[:-1])
    for j in range(d.shape[-1]):
        w = np.maximum(w + d[..., j], 0.0)
        if j >= burn_in:
            acc = acc + w
    return acc / (d.shape[-1] - burn_in)


def _rate(dist: Dist, theta: Dual):
    if dist.param is None:
        return dist.rate
    r = theta[dist.param]
    if np.any(r.value <= 0):
        raise DomainError(f"rate theta[{dist.param}] = {r.value} must be positive")
    return r


def pushforward_waiting_time(model: GG1Model, theta: Dual, block: LatentBlock) -> Dual:
    """Average post-burn-in waiting time as a dual in theta.

    ``block`` may hold one replication (1-d latents) or a stack of them; the
    result has the block's leading shape.
    """
    if not isinstance(theta, Dual):
        theta = ad.lift_param(theta)
    if len(block) != model.length:
        raise ValueError(f"latent block length {len(block)} != burn_in + horizon {model.length}")
    service = block.service / _rate(model.service, theta)
    arrival = block.arrival / _rate(model.arrival, theta)
    if not isinstance(service, Dual):
        service = ad.constant(service, theta.p)
    diff = service - arrival
    lead = diff.shape[:-1]
    w = ad.constant(np.zeros(lead), theta.p)
    acc = ad.constant(np.zeros(lead), theta.p)
    for j in range(model.length):
        w = ad.relu(w + diff[..., j])
        if j >= model.burn_in:
            acc = acc + w
    return acc / float(model.horizon)


def simulate_model_sample(model: GG1Model, theta, n: int, rng: np.random.Generator) -> Dual:
    """``n`` fresh replications of the model output, shape ``(n, 1)`` as a dual."""
    if n < 2:
        raise ConfigError("need at least two simulated replications")
    if not isinstance(theta, Dual):
        theta = ad.lift_param(theta)
    blocks = draw_latent_blocks(model, n, rng)
    return pushforward_waiting_time(model, theta, blocks).reshape(n, 1)


def _scaled(dist: Dist, size, rng):
    return draw_reference(dist, size, rng) / dist.rate


def generate_target_data(target: TargetSystem, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` i.i.d. average waiting times from the target queue, shape ``(m, 1)``."""
    if m < 1:
        raise ConfigError("m must be at least 1")
    size = (m, target.burn_in + target.horizon)
    service = _scaled(target.service, size, rng)
    arrival = _scaled(target.arrival, size, rng)
    x = lindley_average(service, arrival, target.burn_in)
    if target.contamination > 0:
        k = int(math.floor(target.contamination * m + 1e-9))
        if k:
            idx = rng.choice(m, size=k, replace=False)
            x[idx] += rng.normal(0.0, target.noise_sd, size=k)
    return x.reshape(m, 1)


def write_data_csv(path, data) -> None:
    """One observation per row, no header."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def read_data_csv(path, d: int | None = None) -> np.ndarray:
    """Read observations written by :func:`write_data_csv`.

    A non-numeric first row is treated as a header. Raises ``ConfigError``
    naming the first row whose column count or content is invalid.
    """
    rows = []
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ConfigError(f"{path}: row {lineno} is not numeric: {row}") from None
            if d is None:
                d = len(values)
            if len(values) != d:
                raise ConfigError(
                    f"{path}: row {lineno} has {len(values)} columns, expected {d}"
                )
            if not all(math.isfinite(v) for v in values):
                raise ConfigError(f"{path}: row {lineno} has non-finite values")
            rows.append(values)
    if not rows:
        raise ConfigError(f"{path}: no observations")
    return np.asarray(rows, dtype=float)
