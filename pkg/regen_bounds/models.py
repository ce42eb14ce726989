from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from regen_bounds.errors import DomainError

MOMENT_SOURCES = {"exact", "envelope", "monte-carlo", "user"}


@dataclass(frozen=True)
class CycleMoments:
    m1: float
    m2: float
    m_gamma: float
    gamma: float = 3.0

    def __post_init__(self) -> None:
        if not self.m1 > 0:
            raise DomainError(f"CycleMoments: m1 must be positive, got {self.m1}")
        if not self.gamma > 2:
            raise DomainError(f"CycleMoments: gamma must exceed 2, got {self.gamma}")
        # relative slack for moments that come out of simulation or rounding
        if self.m2 < self.m1**2 * (1 - 1e-12):
            raise DomainError(f"CycleMoments: m2={self.m2} < m1^2={self.m1**2}")
        if self.m_gamma < self.m1**self.gamma * (1 - 1e-12):
            raise DomainError(f"CycleMoments: m_gamma={self.m_gamma} < m1^gamma={self.m1**self.gamma}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SplitCycleStats:
    q: float
    m1_minus: float
    m2_minus: float
    m1_plus_hat: float
    source: str = "exact"

    def __post_init__(self) -> None:
        if self.source not in MOMENT_SOURCES:
            raise DomainError(f"SplitCycleStats: unknown source {self.source!r}")
        if not 0 < self.q < 1:
            raise DomainError(f"SplitCycleStats: q must lie in (0, 1), got {self.q}")
        if not (self.m1_minus > 0 and self.m2_minus > 0 and self.m1_plus_hat > 0):
            raise DomainError("SplitCycleStats: conditional moments must be positive")
        if self.m2_minus < self.m1_minus**2 * (1 - 1e-12):
            raise DomainError(f"SplitCycleStats: m2_minus={self.m2_minus} < m1_minus^2={self.m1_minus**2}")

    @property
    def ratio(self) -> float:
        return self.m1_plus_hat / self.m1_minus

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    x: float
    lower: float
    upper: float | None
    tail_lower: float
    q: float
    q_star: float
    label: str
    source: str = "exact"
    informative: bool = True
    inverted: bool = False
    asymptotic: bool = False
    lower_only: bool = False
    lower_stderr: float | None = None
    upper_stderr: float | None = None
    notes: tuple[str, ...] = ()

    @classmethod
    def build(
        cls,
        x: float,
        lower: float,
        upper: float | None,
        q: float,
        q_star: float,
        label: str,
        **kwargs: Any,
    ) -> "BoundReport":
        tail_lower = math.exp(-x) + lower
        informative = lower > -1 and tail_lower <= 1 and (upper is None or upper < 1)
        inverted = upper is not None and lower > upper
        return cls(
            x=x,
            lower=lower,
            upper=upper,
            tail_lower=tail_lower,
            q=q,
            q_star=q_star,
            label=label,
            informative=informative,
            inverted=inverted,
            lower_only=upper is None,
            **kwargs,
        )

    def with_updates(self, **kwargs: Any) -> "BoundReport":
        return replace(self, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["notes"] = list(self.notes)
        return out


@dataclass(frozen=True)
class SimEstimate:
    value: float
    stderr: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise DomainError(f"SimEstimate: need n >= 2 replications, got {self.n}")

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "SimEstimate":
        arr = np.asarray(samples, dtype=float)
        n = int(arr.size)
        if n < 2:
            raise DomainError(f"SimEstimate: need n >= 2 replications, got {n}")
        return cls(value=float(arr.mean()), stderr=float(arr.std(ddof=1) / math.sqrt(n)), n=n)

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CycleRecord:
    total_length: float
    idle_time: float
    max_level: int
    hit_level: bool
    hit_time_continuous: float | None
    hit_time_embedded: float | None

    def to_row(self) -> list[Any]:
        return [
            self.total_length,
            self.idle_time,
            self.max_level,
            int(self.hit_level),
            "" if self.hit_time_continuous is None else self.hit_time_continuous,
            "" if self.hit_time_embedded is None else self.hit_time_embedded,
        ]


@dataclass(frozen=True)
class QueueBoundReport:
    """Bounds for one queue instance, level u and scaled time x."""

    model: dict[str, Any]
    u: int
    x: float
    q: float
    q_star: float
    m1: float
    m2: float
    m1_minus: float
    m_hat1_plus: float
    corollary: BoundReport
    theorem: BoundReport | None = None
    light_tail: BoundReport | None = None
    display: BoundReport | None = None
    provenance: dict[str, str] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def bounds(self) -> list[BoundReport]:
        return [b for b in (self.corollary, self.theorem, self.light_tail, self.display) if b is not None]

    def with_updates(self, **kwargs: Any) -> "QueueBoundReport":
        return replace(self, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "u": self.u,
            "x": self.x,
            "q": self.q,
            "q_star": self.q_star,
            "m1": self.m1,
            "m2": self.m2,
            "m1_minus": self.m1_minus,
            "m_hat1_plus": self.m_hat1_plus,
            "provenance": dict(self.provenance),
            "extras": dict(self.extras),
            "notes": list(self.notes),
            "corollary": self.corollary.to_dict(),
            "theorem": self.theorem.to_dict() if self.theorem else None,
            "light_tail": self.light_tail.to_dict() if self.light_tail else None,
            "display": self.display.to_dict() if self.display else None,
        }


@dataclass(frozen=True)
class CycleEstimates:
    """Monte Carlo estimates of the cycle statistics; conditional entries are None without enough cycles."""

    n: int
    u: int
    q: SimEstimate
    m1: SimEstimate
    m2: SimEstimate
    m3: SimEstimate
    m1_minus: SimEstimate | None = None
    m2_minus: SimEstimate | None = None
    m1_plus: SimEstimate | None = None
    m_hat1_plus: SimEstimate | None = None
    m_hat1_plus_embedded: SimEstimate | None = None

    def to_dict(self) -> dict[str, Any]:
        return {k: (v.to_dict() if isinstance(v, SimEstimate) else v) for k, v in self.__dict__.items()}
