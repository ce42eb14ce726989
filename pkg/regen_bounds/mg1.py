"""M/G/1 queue-length process as a regenerative process.

Cycles start with an idle period; a busy period is analysed on the chain
embedded at service completions. d_k is the probability of k arrivals during
one service, D_k = 1 - sum_{i<=k} d_i its tail. Three linear systems of order
u - 2 give the exceedance probability q(u), the conditional mean time to
reach u, and the conditional mean length of a cycle that does not reach u.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import integrate, optimize, stats

from regen_bounds.bounds import corollary11_bounds, queue_bound_report
from regen_bounds.distributions import (
    Deterministic,
    Erlang,
    Exponential,
    HyperExponential,
    ServiceDistribution,
)
from regen_bounds.errors import DomainError, NoRootError, QuadratureError
from regen_bounds.linsolve import DenseSystem, solve
from regen_bounds.models import CycleEstimates, QueueBoundReport

logger = logging.getLogger(__name__)

TAIL_TOLERANCE = 1e-12
QUAD_TOLERANCE = 1e-10
ROOT_TOLERANCE = 1e-14
MAX_BRACKET_STEPS = 200
MAX_TRUNCATION = 1 << 16


@dataclass(frozen=True)
class MG1Model:
    lam: float
    service: ServiceDistribution

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"MG1Model: lambda must be a finite positive number, got {self.lam}")
        if not self.rho < 1:
            raise DomainError(f"MG1Model: load rho = lambda * b1 = {self.rho:.6g} must be below 1")

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    def to_dict(self) -> dict[str, Any]:
        return {"lambda": self.lam, "service": self.service.to_dict(), "rho": self.rho}


@dataclass(frozen=True)
class TabooSolution:
    u: int
    d: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    q_ku: tuple[float, ...]
    q_u: float
    reach_means: tuple[float, ...]
    return_means: tuple[float, ...]
    m_hat1_plus: float
    m1_minus: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "u": self.u,
            "K": int(self.d.size - 1),
            "q_ku": list(self.q_ku),
            "q_u": self.q_u,
            "reach_means": list(self.reach_means),
            "return_means": list(self.return_means),
            "m_hat1_plus": self.m_hat1_plus,
            "m1_minus": self.m1_minus,
        }


@dataclass(frozen=True)
class LightTailParams:
    beta: float
    gamma_rate: float
    v_lambda: float
    alpha: float

    def to_dict(self) -> dict[str, float]:
        return {"beta": self.beta, "gamma_rate": self.gamma_rate, "v_lambda": self.v_lambda, "alpha": self.alpha}


def truncation_level(model: MG1Model, u: int) -> int:
    return u + math.ceil(50 + 10 * model.rho)


def _arrival_pmf(model: MG1Model, k: np.ndarray, tol: float) -> np.ndarray:
    lam, g = model.lam, model.service
    if isinstance(g, Exponential):
        p = lam / (lam + g.rate)
        return (1 - p) * p**k
    if isinstance(g, Erlang):
        return stats.nbinom.pmf(k, g.shape, g.rate / (lam + g.rate))
    if isinstance(g, Deterministic):
        return stats.poisson.pmf(k, lam * g.value)
    if isinstance(g, HyperExponential):
        out = np.zeros(k.size)
        for w, r in zip(g.weights, g.rates):
            p = lam / (lam + r)
            out += w * (1 - p) * p**k
        return out

    lo, hi = g.support()
    out = np.empty(k.size)
    for idx, kk in enumerate(k):
        value, abserr = integrate.quad(
            lambda x, kk=kk: stats.poisson.pmf(kk, lam * x) * g.pdf(x), lo, hi, epsabs=tol / 10, epsrel=0.0, limit=200
        )
        if abserr > tol:
            raise QuadratureError(f"arrivals_per_service: d_{kk} error estimate {abserr:.2e} exceeds tol={tol:.2e}")
        out[idx] = value
    return out


def arrivals_per_service(model: MG1Model, K: int, tol: float = QUAD_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """d_0..d_K and the tails D_k.

    Large tails are taken by complement; once the tail drops below 1/2 it is
    summed from d_K backwards so deep tails keep their relative accuracy.
    """
    if K < 0:
        raise DomainError(f"arrivals_per_service: K must be nonnegative, got {K}")
    if not tol > 0:
        raise DomainError(f"arrivals_per_service: tol must be positive, got {tol}")
    d = _arrival_pmf(model, np.arange(K + 1), tol)
    head = np.maximum(1.0 - np.cumsum(d), 0.0)
    tail = np.append(np.cumsum(d[:0:-1])[::-1], 0.0)
    D = np.where(tail < 0.5, tail, head)
    return d, D


@lru_cache(maxsize=64)
def _kernel(model: MG1Model, u: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached d and D, truncated once the mass beyond K drops below TAIL_TOLERANCE; read-only."""
    K = truncation_level(model, u)
    d, D = arrivals_per_service(model, K)
    while 1.0 - d.sum() >= TAIL_TOLERANCE:
        if K >= MAX_TRUNCATION:
            raise QuadratureError(
                f"arrivals_per_service: mass beyond K={K} is {1.0 - d.sum():.3e}, above {TAIL_TOLERANCE:.0e}"
            )
        K *= 2
        d, D = arrivals_per_service(model, K)
    logger.debug("arrivals_per_service: u=%d K=%d D_K=%.3e", u, K, 1.0 - d.sum())
    d.setflags(write=False)
    D.setflags(write=False)
    return d, D


def _service_weights(model: MG1Model, d: np.ndarray, count: int) -> np.ndarray:
    """E[eta; nu = k] = (k+1) d_{k+1} / lambda for k < count."""
    k = np.arange(count)
    return (k + 1) * d[1 : count + 1] / model.lam


def _embedded_matrix(d: np.ndarray, u: int) -> np.ndarray:
    # row i: from i customers, k arrivals lead to i + k - 1 (state 0 is absorbing)
    n = u - 2
    a = np.eye(n)
    for i in range(1, n + 1):
        for k in range(u - i):
            j = i + k - 1
            if j >= 1:
                a[i - 1, j - 1] -= d[k]
    return a


def _check_level(u: int, op: str) -> None:
    if isinstance(u, bool) or int(u) != u or u < 1:
        raise DomainError(f"{op}: level u must be an integer >= 1, got {u!r}")


def solve_exceedance(model: MG1Model, u: int) -> tuple[np.ndarray, float]:
    """q_{k,u} for k = 1..u-2 (empty for u <= 2) and q(u) = q_{1,u}."""
    _check_level(u, "solve_exceedance")
    if u == 1:
        return np.empty(0), 1.0
    d, D = _kernel(model, u)
    if u == 2:
        return np.empty(0), float(D[0])
    rhs = np.array([D[u - i - 1] for i in range(1, u - 1)])
    q_ku = solve(DenseSystem(_embedded_matrix(d, u), rhs))
    return q_ku, float(q_ku[0])


def solve_reach_means(model: MG1Model, u: int, q_ku: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Conditional-defective means 0m_{i,u} and m_hat1+ on the service-completion clock."""
    _check_level(u, "solve_reach_means")
    if u == 1:
        return np.empty(0), 1.0 / model.lam
    d, D = _kernel(model, u)
    b1 = model.service.mean
    if u == 2:
        m_1 = b1 - d[1] / model.lam
        return np.array([m_1]), 1.0 / model.lam + m_1 / D[0]

    if q_ku is None:
        q_ku, _ = solve_exceedance(model, u)

    w_all = _service_weights(model, d, d.size - 1)
    w = w_all[: u - 1]
    # E[eta; nu >= s], by complement while large and summed from the far end once small
    head = b1 - np.concatenate(([0.0], np.cumsum(w_all)))
    tail = np.append(np.cumsum(w_all[::-1])[::-1], 0.0)
    beyond = np.where(tail < 0.5 * b1, tail, head)
    qq = np.concatenate(([0.0], q_ku))
    rhs = np.empty(u - 2)
    for i in range(1, u - 1):
        span = u - i
        rhs[i - 1] = beyond[span] + sum(w[k] * qq[i + k - 1] for k in range(span))
    reach = solve(DenseSystem(_embedded_matrix(d, u), rhs))
    return reach, 1.0 / model.lam + float(reach[0]) / float(q_ku[0])


def solve_return_means(model: MG1Model, u: int, q_ku: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Means um_{i,0} of the time to empty before reaching u, and m1-."""
    _check_level(u, "solve_return_means")
    if u == 1:
        raise DomainError("solve_return_means: every cycle reaches level 1, m1- is undefined")
    d, D = _kernel(model, u)
    if u == 2:
        m_1 = d[1] / model.lam
        return np.array([m_1]), 1.0 / model.lam + m_1 / (1.0 - D[0])

    if q_ku is None:
        q_ku, _ = solve_exceedance(model, u)
    w = _service_weights(model, d, u - 1)
    qq = np.concatenate(([0.0], q_ku))
    rhs = np.empty(u - 2)
    for i in range(1, u - 1):
        rhs[i - 1] = sum(w[k] * (1.0 - qq[i + k - 1]) for k in range(u - i))
    back = solve(DenseSystem(_embedded_matrix(d, u), rhs))
    return back, 1.0 / model.lam + float(back[0]) / (1.0 - q_ku[0])


def solve_taboo(model: MG1Model, u: int) -> TabooSolution:
    _check_level(u, "solve_taboo")
    d, D = _kernel(model, u)
    q_ku, q = solve_exceedance(model, u)
    reach, m_hat = solve_reach_means(model, u, q_ku)
    if u == 1:
        back, m1_minus = np.empty(0), None
    else:
        back, m1_minus = solve_return_means(model, u, q_ku)
    logger.info("solve_taboo: u=%d q=%.6g m_hat1+=%.6g m1-=%s", u, q, m_hat, m1_minus)
    return TabooSolution(
        u=u,
        d=d,
        D=D,
        q_ku=tuple(float(v) for v in q_ku),
        q_u=q,
        reach_means=tuple(float(v) for v in reach),
        return_means=tuple(float(v) for v in back),
        m_hat1_plus=m_hat,
        m1_minus=m1_minus,
    )


def cycle_moments(model: MG1Model) -> tuple[float, float]:
    lam, rho = model.lam, model.rho
    m1 = 1.0 / ((1 - rho) * lam)
    m2 = 2.0 / (lam**2 * (1 - rho)) + model.service.moment(2) / (1 - rho) ** 3
    return m1, m2


def _bracket_root(f: Any, lo: float, s0: float, start: float, op: str) -> tuple[float, float]:
    """First hi > lo with f(hi) > 0, walking towards s0 or doubling when s0 is infinite."""
    hi = start
    for j in range(1, MAX_BRACKET_STEPS + 1):
        if math.isfinite(s0):
            hi = s0 * (1 - 2.0**-j)
            if hi <= lo:
                continue
        else:
            hi = max(hi, lo) * 2
        try:
            value = f(hi)
        except (DomainError, OverflowError):
            break
        if value > 0:
            return lo, hi
    raise NoRootError(f"{op}: no sign change found below s0={s0}")


def busy_decay(model: MG1Model) -> tuple[float, float]:
    """(v_lambda, alpha): M'(v) = 1/lambda and alpha = lambda + v - lambda M(v)."""
    g, lam = model.service, model.lam

    def f(v: float) -> float:
        return g.mgf_prime(v) - 1.0 / lam

    lo, hi = _bracket_root(f, 0.0, g.s0, 1.0 / g.mean, "busy_decay")
    v = optimize.brentq(f, lo, hi, xtol=ROOT_TOLERANCE, maxiter=500)
    alpha = lam + v - lam * g.mgf(v)
    logger.debug("busy_decay: bracket [%.4g, %.4g] v=%.12g alpha=%.12g", lo, hi, v, alpha)
    if not alpha > 0:
        raise NoRootError(f"busy_decay: alpha={alpha} is not positive")
    return float(v), float(alpha)


def cramer_root(model: MG1Model) -> tuple[float, float]:
    """(beta, gamma): E exp(beta eta) = 1 + beta/lambda, gamma = ln(1 + beta/lambda)."""
    g, lam = model.service, model.lam

    def f(s: float) -> float:
        return g.mgf(s) - 1.0 - s / lam

    v, _ = busy_decay(model)
    lo, hi = _bracket_root(f, v, g.s0, max(v, 1.0 / g.mean), "cramer_root")
    beta = optimize.brentq(f, lo, hi, xtol=ROOT_TOLERANCE, maxiter=500)
    logger.debug("cramer_root: bracket [%.4g, %.4g] beta=%.12g", lo, hi, beta)
    return float(beta), math.log1p(beta / lam)


def light_tail_params(model: MG1Model) -> LightTailParams:
    beta, gamma_rate = cramer_root(model)
    v, alpha = busy_decay(model)
    return LightTailParams(beta=beta, gamma_rate=gamma_rate, v_lambda=v, alpha=alpha)


def mhat_light_tail_bound(
    model: MG1Model,
    u: int,
    q_u: float,
    params: LightTailParams | None = None,
) -> tuple[float, float]:
    """Asymptotic upper bounds on m_hat1+: the q(u) form and the decay-rate form."""
    _check_level(u, "mhat_light_tail_bound")
    if not 0 < q_u <= 1:
        raise DomainError(f"mhat_light_tail_bound: q_u must lie in (0, 1], got {q_u}")
    params = params or light_tail_params(model)
    base = 1.0 / model.lam
    via_q = base + u / (params.alpha * math.e * q_u ** (1.0 / u))
    via_gamma = base + u * math.exp(params.gamma_rate - 1.0) / params.alpha
    return via_q, via_gamma


def statement41_report(
    model: MG1Model,
    u: int,
    x: float,
    mode: str = "exact",
    m_gamma: float | None = None,
    gamma: float = 3.0,
    m_gamma_source: str = "user",
    m_gamma_stderr: float | None = None,
    estimates: CycleEstimates | None = None,
    light_tail: bool = False,
) -> QueueBoundReport:
    """Corollary and Theorem bounds for the M/G/1 queue length at level u.

    m_hat1+ is on the service-completion clock. With light_tail=True the
    report also carries the Corollary bound with m_hat1+ replaced by its
    decay-rate bound.
    """
    _check_level(u, "statement41_report")
    taboo = solve_taboo(model, u)
    if not taboo.q_u < 0.5 or taboo.m1_minus is None:
        raise DomainError(f"statement41_report: q(u)={taboo.q_u:.6g} must lie below 1/2; raise u")
    m1, m2 = cycle_moments(model)
    extras: dict[str, float] = {"rho": model.rho, "K": float(taboo.d.size - 1)}

    report = queue_bound_report(
        model.to_dict(),
        u,
        x,
        taboo.q_u,
        m1,
        m2,
        taboo.m1_minus,
        taboo.m_hat1_plus,
        mode=mode,
        m_gamma=m_gamma,
        gamma=gamma,
        m_gamma_source=m_gamma_source,
        m_gamma_stderr=m_gamma_stderr,
        estimates=estimates,
        m_hat1_plus_lower=1.0 / model.lam,
        extras=extras,
        notes=("m_hat1+ measured on the service-completion clock",),
    )
    if not light_tail:
        return report

    params = light_tail_params(model)
    via_q, via_gamma = mhat_light_tail_bound(model, u, taboo.q_u, params)
    extras.update(params.to_dict())
    extras.update(m_hat1_plus_bound_q=via_q, m_hat1_plus_bound_gamma=via_gamma)
    substituted = corollary11_bounds(x, taboo.q_u, m1, m2, via_gamma / taboo.m1_minus)
    substituted = substituted.with_updates(
        label="light-tail",
        notes=substituted.notes + ("m_hat1+ replaced by its decay-rate bound",),
    )
    return report.with_updates(light_tail=substituted, extras=extras)


def exceedance_slope(model: MG1Model, levels: range) -> float:
    """Least-squares slope of log q(u) over the given levels."""
    qs = [solve_exceedance(model, u)[1] for u in levels]
    slope, _ = np.polyfit(np.asarray(list(levels), dtype=float), np.log(qs), 1)
    return float(slope)

