"""Service-time and cycle-length laws with exact moments, transforms and samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np
from scipy import stats

from regen_bounds.errors import ConfigError, DomainError

UINT64_MAX = 2**64 - 1
WEIGHT_TOLERANCE = 1e-12
# below this |s| * scale the uniform transform switches to its Taylor series
SERIES_THRESHOLD = 1e-4


class RngStream:
    """Philox counter-based stream keyed by (seed, stream id).

    A stream is owned by one consumer; parallel work uses distinct stream ids.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= UINT64_MAX:
                raise DomainError(f"RngStream: {name} must be an unsigned 64-bit integer, got {value!r}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class ServiceDistribution:
    kind: ClassVar[str] = ""

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def s0(self) -> float:
        """Abscissa of convergence of E exp(s X)."""
        return math.inf

    def moment(self, r: int) -> float:
        raise NotImplementedError

    def mgf(self, s: float) -> float:
        raise NotImplementedError

    def mgf_prime(self, s: float) -> float:
        """E X exp(s X)."""
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def sf(self, x: float) -> float:
        return 1.0 - self.cdf(x)

    def pdf(self, x: float) -> float | None:
        return None

    def partial_mean_above(self, t: float) -> float:
        """E[X; X >= t]."""
        raise NotImplementedError

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def _check_moment_order(self, r: int) -> None:
        if int(r) != r or r < 1:
            raise DomainError(f"moment: order must be a positive integer, got {r!r}")

    def _check_transform(self, s: float) -> None:
        if s >= self.s0:
            raise DomainError(f"mgf: s={s} is at or beyond s0={self.s0} for {self.kind}; the transform diverges")


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float
    kind: ClassVar[str] = "exponential"

    def __post_init__(self) -> None:
        _require_positive(self.rate, "rate")

    @property
    def s0(self) -> float:
        return self.rate

    def moment(self, r: int) -> float:
        self._check_moment_order(r)
        return math.factorial(int(r)) / self.rate**r

    def mgf(self, s: float) -> float:
        self._check_transform(s)
        return self.rate / (self.rate - s)

    def mgf_prime(self, s: float) -> float:
        self._check_transform(s)
        return self.rate / (self.rate - s) ** 2

    def cdf(self, x: float) -> float:
        return float(stats.expon.cdf(x, scale=1.0 / self.rate))

    def pdf(self, x: float) -> float:
        return float(stats.expon.pdf(x, scale=1.0 / self.rate))

    def partial_mean_above(self, t: float) -> float:
        if t <= 0:
            return self.mean
        return math.exp(-self.rate * t) * (t + 1.0 / self.rate)

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        return rng.generator.exponential(1.0 / self.rate, size)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    value: float
    kind: ClassVar[str] = "deterministic"

    def __post_init__(self) -> None:
        _require_positive(self.value, "value")

    def moment(self, r: int) -> float:
        self._check_moment_order(r)
        return self.value**r

    def mgf(self, s: float) -> float:
        return math.exp(s * self.value)

    def mgf_prime(self, s: float) -> float:
        return self.value * math.exp(s * self.value)

    def cdf(self, x: float) -> float:
        # P(X < x): the jump sits just after the atom
        return 1.0 if x > self.value else 0.0

    def partial_mean_above(self, t: float) -> float:
        return self.value if t <= self.value else 0.0

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        if size is None:
            return self.value
        return np.full(size, self.value)

    def support(self) -> tuple[float, float]:
        return (self.value, self.value)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "value": self.value}


@dataclass(frozen=True)
class Erlang(ServiceDistribution):
    shape: int
    rate: float
    kind: ClassVar[str] = "erlang"

    def __post_init__(self) -> None:
        if isinstance(self.shape, bool) or int(self.shape) != self.shape or self.shape < 1:
            raise DomainError(f"erlang: shape must be a positive integer, got {self.shape!r}")
        _require_positive(self.rate, "rate")

    @property
    def s0(self) -> float:
        return self.rate

    def moment(self, r: int) -> float:
        self._check_moment_order(r)
        rising = math.prod(range(int(self.shape), int(self.shape) + int(r)))
        return rising / self.rate**r

    def mgf(self, s: float) -> float:
        self._check_transform(s)
        return (self.rate / (self.rate - s)) ** self.shape

    def mgf_prime(self, s: float) -> float:
        self._check_transform(s)
        return self.shape * self.rate**self.shape / (self.rate - s) ** (self.shape + 1)

    def cdf(self, x: float) -> float:
        return float(stats.gamma.cdf(x, self.shape, scale=1.0 / self.rate))

    def pdf(self, x: float) -> float:
        return float(stats.gamma.pdf(x, self.shape, scale=1.0 / self.rate))

    def partial_mean_above(self, t: float) -> float:
        return self.mean * float(stats.gamma.sf(t, self.shape + 1, scale=1.0 / self.rate))

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        return rng.generator.gamma(self.shape, 1.0 / self.rate, size)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "shape": int(self.shape), "rate": self.rate}


@dataclass(frozen=True)
class Uniform(ServiceDistribution):
    lo: float
    hi: float
    kind: ClassVar[str] = "uniform"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo < 0 or self.hi <= self.lo:
            raise DomainError(f"uniform: need 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def moment(self, r: int) -> float:
        self._check_moment_order(r)
        return (self.hi ** (r + 1) - self.lo ** (r + 1)) / ((r + 1) * self.width)

    def mgf(self, s: float) -> float:
        if s == 0:
            return 1.0
        if abs(s) * self.hi < SERIES_THRESHOLD:
            return 1.0 + s * self.moment(1) + s * s / 2.0 * self.moment(2) + s**3 / 6.0 * self.moment(3)
        return math.exp(s * self.lo) * math.expm1(s * self.width) / (s * self.width)

    def mgf_prime(self, s: float) -> float:
        if abs(s) * self.hi < SERIES_THRESHOLD:
            return self.moment(1) + s * self.moment(2) + s * s / 2.0 * self.moment(3)
        a, b, w = self.lo, self.hi, self.width
        return (math.exp(s * b) * (b / s - 1.0 / s**2) - math.exp(s * a) * (a / s - 1.0 / s**2)) / w

    def cdf(self, x: float) -> float:
        return float(stats.uniform.cdf(x, loc=self.lo, scale=self.width))

    def pdf(self, x: float) -> float:
        return float(stats.uniform.pdf(x, loc=self.lo, scale=self.width))

    def partial_mean_above(self, t: float) -> float:
        lo = min(max(t, self.lo), self.hi)
        return (self.hi**2 - lo**2) / (2.0 * self.width)

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        return rng.generator.uniform(self.lo, self.hi, size)

    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class HyperExponential(ServiceDistribution):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    kind: ClassVar[str] = "hyperexponential"
    _w: np.ndarray = field(init=False, repr=False, compare=False)
    _r: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if w.ndim != 1 or w.shape != r.shape or w.size == 0:
            raise DomainError("hyperexponential: weights and rates must be non-empty lists of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise DomainError(f"hyperexponential: weights must be nonnegative and sum to 1, got {list(w)}")
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise DomainError(f"hyperexponential: rates must be positive, got {list(r)}")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "rates", tuple(float(v) for v in r))
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_r", r)

    @property
    def s0(self) -> float:
        return float(self._r.min())

    def moment(self, r: int) -> float:
        self._check_moment_order(r)
        return float(np.sum(self._w * math.factorial(int(r)) / self._r**r))

    def mgf(self, s: float) -> float:
        self._check_transform(s)
        return float(np.sum(self._w * self._r / (self._r - s)))

    def mgf_prime(self, s: float) -> float:
        self._check_transform(s)
        return float(np.sum(self._w * self._r / (self._r - s) ** 2))

    def cdf(self, x: float) -> float:
        return float(np.sum(self._w * stats.expon.cdf(x, scale=1.0 / self._r)))

    def pdf(self, x: float) -> float:
        return float(np.sum(self._w * stats.expon.pdf(x, scale=1.0 / self._r)))

    def partial_mean_above(self, t: float) -> float:
        if t <= 0:
            return self.mean
        return float(np.sum(self._w * np.exp(-self._r * t) * (t + 1.0 / self._r)))

    def sample(self, rng: RngStream, size: int | None = None) -> float | np.ndarray:
        gen = rng.generator
        if size is None:
            idx = gen.choice(self._r.size, p=self._w)
            return float(gen.exponential(1.0 / self._r[idx]))
        idx = gen.choice(self._r.size, p=self._w, size=size)
        return gen.exponential(1.0 / self._r[idx])

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "weights": list(self.weights), "rates": list(self.rates)}


DISTRIBUTION_FIELDS: dict[str, tuple[type[ServiceDistribution], tuple[str, ...]]] = {
    "exponential": (Exponential, ("rate",)),
    "deterministic": (Deterministic, ("value",)),
    "erlang": (Erlang, ("shape", "rate")),
    "uniform": (Uniform, ("lo", "hi")),
    "hyperexponential": (HyperExponential, ("weights", "rates")),
}


def parse_distribution(data: Any, path: str = "service") -> ServiceDistribution:
    """Build a distribution from {"type": ..., <params>}; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError(path, "must be an object")
    kind = data.get("type")
    if not isinstance(kind, str) or kind not in DISTRIBUTION_FIELDS:
        raise ConfigError(f"{path}.type", f"must be one of {sorted(DISTRIBUTION_FIELDS)}, got {kind!r}")

    cls, names = DISTRIBUTION_FIELDS[kind]
    unknown = sorted(set(data) - {"type", *names})
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", f"unknown key for {kind} distribution")

    kwargs: dict[str, Any] = {}
    for name in names:
        if name not in data:
            raise ConfigError(f"{path}.{name}", "missing required field")
        value = data[name]
        if name in {"weights", "rates"}:
            if not isinstance(value, list) or not all(_is_number(v) for v in value):
                raise ConfigError(f"{path}.{name}", "must be a list of numbers")
            kwargs[name] = tuple(float(v) for v in value)
        elif name == "shape":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}.{name}", "must be a positive integer")
            kwargs[name] = value
        else:
            if not _is_number(value):
                raise ConfigError(f"{path}.{name}", "must be a number")
            kwargs[name] = float(value)

    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise ConfigError(path, str(exc)) from exc


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require_positive(value: float, name: str) -> None:
    if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
