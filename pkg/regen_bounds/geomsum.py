"""Delayed geometric sums: exponential-approximation error bounds and simulation.

For S = d + z_2 + ... + z_nu with nu ~ Geometric(q) on {1, 2, ...}, the error
of the exponential approximation is

    Delta_S(x) = 1 - exp(-x) - P(S <= a1 x / q*),   q* = -ln(1 - q).

`lemma21_lower` and `lemma22_upper` bracket Delta_S(x); both rest on Lorden's
envelope for the renewal function of the generic summand.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from regen_bounds.distributions import RngStream, ServiceDistribution
from regen_bounds.errors import DomainError
from regen_bounds.models import SimEstimate
from regen_bounds.parallel import chunk_sizes, stream_id

logger = logging.getLogger(__name__)

E_MINUS_2 = math.e - 2.0
DEFAULT_X_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))


def q_star(q: float) -> float:
    if not 0 < q < 1:
        raise DomainError(f"q_star: q must lie in (0, 1), got {q}")
    return -math.log1p(-q)


def lorden_bounds(t: float, a1: float, a2: float) -> tuple[float, float]:
    """Envelope t/a1 - 1 <= H(t) <= t/a1 + a2/a1^2 - 1 of the renewal function."""
    if not a1 > 0:
        raise DomainError(f"lorden_bounds: a1 must be positive, got {a1}")
    if t < 0:
        raise DomainError(f"lorden_bounds: t must be nonnegative, got {t}")
    if a2 < a1 * a1 * (1 - 1e-12):
        raise DomainError(f"lorden_bounds: a2={a2} < a1^2={a1 * a1}")
    return t / a1 - 1.0, t / a1 + a2 / (a1 * a1) - 1.0


@dataclass(frozen=True)
class SummandStats:
    """Moments of the generic summand and the law of the delayed first summand.

    delay_tail(t) = 1 - F_d(t); delay_partial_mean(t) = g(t) = (1/a1) E[d; d >= t].
    """

    a1: float
    a2: float
    a1_delay: float
    delay_tail: Callable[[float], float] = field(compare=False)
    delay_partial_mean: Callable[[float], float] = field(compare=False)

    def __post_init__(self) -> None:
        if not self.a1 > 0:
            raise DomainError(f"SummandStats: a1 must be positive, got {self.a1}")
        if self.a2 < self.a1**2 * (1 - 1e-12):
            raise DomainError(f"SummandStats: a2={self.a2} < a1^2={self.a1**2}")
        if self.a1_delay < 0:
            raise DomainError(f"SummandStats: a1_delay must be nonnegative, got {self.a1_delay}")

    @property
    def cv2_plus_one(self) -> float:
        return self.a2 / self.a1**2

    @classmethod
    def from_laws(cls, summand: ServiceDistribution, delay: ServiceDistribution | None = None) -> "SummandStats":
        first = delay if delay is not None else summand
        a1 = summand.moment(1)
        return cls(
            a1=a1,
            a2=summand.moment(2),
            a1_delay=first.moment(1),
            delay_tail=first.sf,
            delay_partial_mean=lambda t: first.partial_mean_above(t) / a1,
        )

    @classmethod
    def without_delay_term(cls, summand: ServiceDistribution) -> "SummandStats":
        """Stats for a zero-length first summand."""
        return cls(
            a1=summand.moment(1),
            a2=summand.moment(2),
            a1_delay=0.0,
            delay_tail=lambda t: 0.0 if t > 0 else 1.0,
            delay_partial_mean=lambda t: 0.0,
        )


@dataclass(frozen=True)
class GeomSumError:
    x: float
    q: float
    q_star: float
    lower: float
    upper: float | None

    @property
    def informative(self) -> bool:
        return self.lower > -1 and (self.upper is None or self.upper < 1)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _check_q(q: float, op: str) -> None:
    if not 0 < q < 0.5:
        raise DomainError(f"{op}: q must lie in (0, 1/2), got {q}")


def lemma21_lower(x: float, q: float, stats: SummandStats) -> float:
    if not x > 0:
        raise DomainError(f"lemma21_lower: x must be positive, got {x}")
    _check_q(q, "lemma21_lower")
    qs = q_star(q)
    g = stats.delay_partial_mean(stats.a1 * x / qs)
    return qs * math.exp(-x) * (stats.a1_delay / stats.a1 - stats.cv2_plus_one - g)


def lemma22_upper(x: float, q: float, stats: SummandStats) -> float:
    if not 0 < x < 1:
        raise DomainError(f"lemma22_upper: x must lie in (0, 1), got {x}")
    _check_q(q, "lemma22_upper")
    qs = q_star(q)
    r = stats.cv2_plus_one
    c1 = (2 * x * x * E_MINUS_2 + x) * stats.delay_tail(stats.a1 * x / qs)
    c2 = E_MINUS_2 * ((2 * r + 1) * (x + (r - 1) * qs) + 2 * r * x - 2 * x + qs)
    head = stats.a1_delay / stats.a1 * (1 + 2 * x * E_MINUS_2)
    return qs * math.exp(-x) * (head + c1 + c2)


def geomsum_error(x: float, q: float, stats: SummandStats) -> GeomSumError:
    upper = lemma22_upper(x, q, stats) if 0 < x < 1 else None
    return GeomSumError(x=x, q=q, q_star=q_star(q), lower=lemma21_lower(x, q, stats), upper=upper)


def delta_exact_exponential(x: float, q: float) -> float:
    """Delta_S(x) for i.i.d. exponential summands without delay: S is Exp(q/a1)."""
    if x == 0:
        return 0.0
    return math.exp(-x * q / q_star(q)) - math.exp(-x)


def delayed_renewal_bounds(t: float, stats: SummandStats) -> tuple[float, float]:
    """Bracket for the delayed renewal function H_d(t) via Lorden and total probability."""
    if t < 0:
        raise DomainError(f"delayed_renewal_bounds: t must be nonnegative, got {t}")
    a1 = stats.a1
    f_d = 1.0 - stats.delay_tail(t)
    lower = t / a1 - stats.delay_tail(t) * t / a1 - stats.a1_delay / a1
    upper = (t / a1 + stats.cv2_plus_one) * f_d + stats.delay_partial_mean(t) - stats.a1_delay / a1
    return lower, upper


def sample_geom_sums(
    summand: ServiceDistribution,
    delay: ServiceDistribution | None,
    q: float,
    size: int,
    rng: RngStream,
) -> np.ndarray:
    gen = rng.generator
    nu = gen.geometric(q, size)
    first = delay if delay is not None else summand
    total = np.array(first.sample(rng, size), dtype=float)
    remaining = nu - 1
    idx = np.flatnonzero(remaining > 0)
    while idx.size:
        total[idx] += summand.sample(rng, idx.size)
        remaining[idx] -= 1
        idx = idx[remaining[idx] > 0]
    return total


@dataclass(frozen=True)
class GeomSumCdf:
    q: float
    q_star: float
    a1: float
    xs: tuple[float, ...]
    cdf: tuple[SimEstimate, ...]
    mean: SimEstimate

    @property
    def deltas(self) -> list[float]:
        return [1.0 - math.exp(-x) - est.value for x, est in zip(self.xs, self.cdf)]

    def max_deviation(self) -> float:
        return max(abs(d) for d in self.deltas)


def simulate_geom_sum(
    summand: ServiceDistribution,
    delay: ServiceDistribution | None,
    q: float,
    n: int,
    rng: RngStream,
    xs: Sequence[float] = DEFAULT_X_GRID,
    chunk_size: int = 65536,
) -> GeomSumCdf:
    """Empirical G_S at a1*x/q* for each x, from n independent delayed geometric sums."""
    if n < 2:
        raise DomainError(f"simulate_geom_sum: need n >= 2 replications, got {n}")
    qs = q_star(q)
    a1 = summand.moment(1)
    parts = []
    for k, size in enumerate(chunk_sizes(n, chunk_size)):
        parts.append(sample_geom_sums(summand, delay, q, size, rng.spawn(stream_id(rng.stream_id, k))))
    sums = np.concatenate(parts)
    logger.debug("simulate_geom_sum: q=%.4g n=%d mean=%.4g", q, n, sums.mean())
    cdf = tuple(SimEstimate.from_samples(sums <= a1 * x / qs) for x in xs)
    return GeomSumCdf(q=q, q_star=qs, a1=a1, xs=tuple(xs), cdf=cdf, mean=SimEstimate.from_samples(sums))


def renewal_transform_delta(x: float, q: float, counts: np.ndarray) -> SimEstimate:
    """Delta_S(x) = E (1-q)^N_d(a1 x / q*) - exp(-x) from sampled renewal counts."""
    weights = np.power(1.0 - q, np.asarray(counts, dtype=float))
    est = SimEstimate.from_samples(weights)
    return SimEstimate(value=est.value - math.exp(-x), stderr=est.stderr, n=est.n)
