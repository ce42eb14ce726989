"""Closed forms for the M/M/1 queue through its two-boundary random walk.

While busy, the queue length moves up with probability p = lambda/(lambda+mu)
and down with probability 1 - p, one step per exponential(lambda+mu) holding
time. Starting from 1 the walk is absorbed at 0 (end of the busy period) or
at u (the level is reached). Step counts are denoted with a star; times are
step counts divided by lambda + mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from regen_bounds.bounds import queue_bound_report
from regen_bounds.distributions import Exponential
from regen_bounds.errors import DomainError
from regen_bounds.geomsum import E_MINUS_2, q_star
from regen_bounds.mg1 import MG1Model
from regen_bounds.models import BoundReport, CycleEstimates, QueueBoundReport

CLOCKS = ("continuous", "embedded")
# below this |1 - rho| the exceedance probability is evaluated as a finite sum
NEAR_CRITICAL = 1e-6


@dataclass(frozen=True)
class MM1Model:
    lam: float
    mu: float

    def __post_init__(self) -> None:
        for name, value in (("lambda", self.lam), ("mu", self.mu)):
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"MM1Model: {name} must be a finite positive number, got {value}")
        if not self.lam < self.mu:
            raise DomainError(f"MM1Model: rho = lambda/mu = {self.rho:.6g} must be below 1")

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def p(self) -> float:
        return self.lam / (self.lam + self.mu)

    @property
    def step_rate(self) -> float:
        return self.lam + self.mu

    def as_mg1(self) -> MG1Model:
        return MG1Model(lam=self.lam, service=Exponential(rate=self.mu))

    def to_dict(self) -> dict[str, Any]:
        return {"lambda": self.lam, "mu": self.mu, "rho": self.rho, "p": self.p}


@dataclass(frozen=True)
class WalkTransforms:
    """Roots h1 >= h2 of p s h^2 - h + (1-p) s = 0 and their s-derivatives, at s = 1."""

    h1_at_1: float
    h2_at_1: float
    dh1_at_1: float
    dh2_at_1: float


def _check_level(u: int, op: str, minimum: int = 2) -> None:
    if isinstance(u, bool) or int(u) != u or u < minimum:
        raise DomainError(f"{op}: level u must be an integer >= {minimum}, got {u!r}")


def walk_transforms(model: MM1Model) -> WalkTransforms:
    p = model.p
    return WalkTransforms(
        h1_at_1=1.0 / model.rho,
        h2_at_1=1.0,
        dh1_at_1=-(1 - p) / (p * (1 - 2 * p)),
        dh2_at_1=1.0 / (1 - 2 * p),
    )


def exceedance(model: MM1Model, u: int) -> float:
    """q(u) = (1 - rho) rho^(u-1) / (1 - rho^u)."""
    _check_level(u, "exceedance", minimum=1)
    rho = model.rho
    if abs(1 - rho) < NEAR_CRITICAL:
        return rho ** (u - 1) / math.fsum(rho**j for j in range(u))
    log_rho = math.log(rho)
    return (1 - rho) * math.exp((u - 1) * log_rho) / -math.expm1(u * log_rho)


def absorb_low_probability(model: MM1Model, u: int) -> float:
    """P_{1,0}(1): the walk from 1 hits 0 before u."""
    _check_level(u, "absorb_low_probability", minimum=1)
    r = 1.0 / model.rho
    return r * math.expm1((u - 1) * math.log(r)) / math.expm1(u * math.log(r))


def reach_mean_star(model: MM1Model, u: int) -> float:
    """E[steps; absorbed at u] from 1.

    With r = 1/rho this is
    [u (r - 1)(r^u + 1) - (r + 1)(r^u - 1)] / [(1 - 2p)(r^u - 1)^2],
    evaluated in powers of rho so large u cannot overflow.
    """
    _check_level(u, "reach_mean_star")
    rho, p = model.rho, model.p
    rho_u = math.exp(u * math.log(rho))
    one_minus = -math.expm1(u * math.log(rho))
    num = u * (1 - rho) * (1 + rho_u) - (1 + rho) * one_minus
    return rho ** (u - 1) * num / ((1 - 2 * p) * one_minus**2)


def reach_mean_star_from_transforms(model: MM1Model, u: int) -> float:
    """Derivative at s = 1 of (h1 - h2) / (h1^u - h2^u) by the quotient rule."""
    _check_level(u, "reach_mean_star_from_transforms")
    t = walk_transforms(model)
    num = t.h1_at_1 - t.h2_at_1
    dnum = t.dh1_at_1 - t.dh2_at_1
    den = t.h1_at_1**u - t.h2_at_1**u
    dden = u * (t.h1_at_1 ** (u - 1) * t.dh1_at_1 - t.h2_at_1 ** (u - 1) * t.dh2_at_1)
    return (dnum * den - num * dden) / den**2


def absorption_mean_star(model: MM1Model, u: int) -> float:
    """m*: expected steps until the walk from 1 is absorbed at 0 or u."""
    _check_level(u, "absorption_mean_star")
    rho, p = model.rho, model.p
    rho_u = math.exp(u * math.log(rho))
    return (1 + u * (2 - 1 / p) * rho_u / -math.expm1(u * math.log(rho))) / (1 - 2 * p)


def return_mean_star(model: MM1Model, u: int) -> float:
    return absorption_mean_star(model, u) - reach_mean_star(model, u)


def reach_mean_time(model: MM1Model, u: int) -> float:
    return reach_mean_star(model, u) / model.step_rate


def mhat1_plus(model: MM1Model, u: int, clock: str = "continuous") -> float:
    """Mean time to reach u within a cycle that reaches it.

    The embedded clock stops at the end of the service in progress when u is
    reached; its residual is exponential(mu), so the two clocks differ by 1/mu.
    """
    if clock not in CLOCKS:
        raise DomainError(f"mhat1_plus: clock must be one of {CLOCKS}, got {clock!r}")
    value = 1.0 / model.lam + reach_mean_time(model, u) / exceedance(model, u)
    return value + 1.0 / model.mu if clock == "embedded" else value


def mhat1_plus_asymptotic(model: MM1Model, u: int) -> float:
    """Large-u form with the O(u rho^u) remainder dropped; display only."""
    _check_level(u, "mhat1_plus_asymptotic")
    rho = model.rho
    return 1.0 / model.lam + (u - (1 + rho) / (1 - rho)) / (model.mu - model.lam)


def m1_minus(model: MM1Model, u: int) -> float:
    """Mean length of a cycle that does not reach u, idle period included."""
    _check_level(u, "m1_minus")
    return 1.0 / model.lam + return_mean_star(model, u) / model.step_rate / (1 - exceedance(model, u))


def cycle_moments(model: MM1Model) -> tuple[float, float]:
    lam, rho = model.lam, model.rho
    m1 = 1.0 / ((1 - rho) * lam)
    m2 = 2.0 / (lam**2 * (1 - rho)) + (2.0 / model.mu**2) / (1 - rho) ** 3
    return m1, m2


def _display_bounds(model: MM1Model, u: int, x: float, ratio: float) -> BoundReport:
    rho = model.rho
    prefactor = (1 - rho) * rho ** (u - 1)
    c = 1 - rho + rho**2 / (1 - rho)
    lower = math.exp(-x) * prefactor * (ratio - 2 * c)
    upper = math.exp(-x) * prefactor * (ratio * (1 + 2 * x * E_MINUS_2) + 8 * E_MINUS_2 * c * x - x)
    q = exceedance(model, u)
    return BoundReport.build(
        x,
        lower,
        upper,
        q,
        q_star(q),
        label="display",
        asymptotic=True,
        notes=(f"prefactor (1-rho) rho^(u-1) = {prefactor:.6g} in place of q*", "asymptotic: o(1) set to 0"),
    )


def statement42_report(
    model: MM1Model,
    u: int,
    x: float,
    clock: str = "continuous",
    mode: str = "exact",
    m_gamma: float | None = None,
    gamma: float = 3.0,
    m_gamma_source: str = "user",
    m_gamma_stderr: float | None = None,
    estimates: CycleEstimates | None = None,
) -> QueueBoundReport:
    _check_level(u, "statement42_report")
    q = exceedance(model, u)
    if not q < 0.5:
        raise DomainError(f"statement42_report: q(u)={q:.6g} must lie below 1/2; raise u")
    m1, m2 = cycle_moments(model)
    mm = m1_minus(model, u)
    mh = mhat1_plus(model, u, clock)
    report = queue_bound_report(
        model.to_dict(),
        u,
        x,
        q,
        m1,
        m2,
        mm,
        mh,
        mode=mode,
        m_gamma=m_gamma,
        gamma=gamma,
        m_gamma_source=m_gamma_source,
        m_gamma_stderr=m_gamma_stderr,
        estimates=estimates,
        m_hat1_plus_lower=1.0 / model.lam,
        extras={
            "rho": model.rho,
            "p": model.p,
            "display_prefactor": (1 - model.rho) * model.rho ** (u - 1),
            "m_hat1_plus_asymptotic": mhat1_plus_asymptotic(model, u),
            "reach_mean_star": reach_mean_star(model, u),
            "absorption_mean_star": absorption_mean_star(model, u),
        },
        notes=(f"m_hat1+ measured on the {clock} clock",),
    )
    return report.with_updates(display=_display_bounds(model, u, x, mh / mm))
