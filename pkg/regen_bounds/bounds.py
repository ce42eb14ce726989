"""Two-sided bounds on Delta_X(x) = 1 - exp(-x) - G_X(x m1- / q*) for regenerative processes.

G_X is the law of the first time the process reaches level u; cycles that
reach u have probability q. The first passage time is a delayed geometric
sum of type-1 cycle lengths, with the time to reach u inside the first
type-2 cycle as the delayed term, so the geometric-sum lemmas apply with
a1 = m1-, a2 = m2-, a1_d = m_hat1+.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Callable

from scipy.optimize import minimize_scalar

from regen_bounds.errors import DegenerateError, DomainError
from regen_bounds.geomsum import E_MINUS_2, q_star
from regen_bounds.models import BoundReport, CycleEstimates, CycleMoments, QueueBoundReport, SplitCycleStats

logger = logging.getLogger(__name__)

TWO_SIDED = "two-sided"
LOWER_ONLY = "lower-only"


def split_moment_identity(m_r_minus: float, m_r_plus: float, q: float) -> float:
    """m_r = (1 - q) m_r- + q m_r+."""
    if not 0 < q < 1:
        raise DomainError(f"split_moment_identity: q must lie in (0, 1), got {q}")
    return (1.0 - q) * m_r_minus + q * m_r_plus


@dataclass(frozen=True)
class MomentEnvelopes:
    q: float
    gamma: float
    m_gamma: float
    m1_minus: tuple[float, float]
    m2_minus: tuple[float, float]
    m1_plus_max: float
    m2_plus_max: float
    m_gamma_plus_max: float

    def contains(self, name: str, value: float) -> bool:
        lo, hi = getattr(self, name)
        return lo <= value <= hi

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def split_moment_envelopes(moments: CycleMoments, q: float) -> MomentEnvelopes:
    if not 0 < q < 1:
        raise DomainError(f"split_moment_envelopes: q must lie in (0, 1), got {q}")
    g, mg = moments.gamma, moments.m_gamma
    m1_lo = (moments.m1 - mg ** (1 / g) * q ** (1 - 1 / g)) / (1 - q)
    if m1_lo <= 0:
        raise DegenerateError(
            f"split_moment_envelopes: lower bracket for m1- is {m1_lo:.4g} <= 0 at q={q:.4g}; q is too large"
        )
    m2_lo = (moments.m2 - mg ** (2 / g) * q ** (1 - 2 / g)) / (1 - q)
    return MomentEnvelopes(
        q=q,
        gamma=g,
        m_gamma=mg,
        m1_minus=(m1_lo, moments.m1 / (1 - q)),
        m2_minus=(m2_lo, moments.m2 / (1 - q)),
        m1_plus_max=(mg / q) ** (1 / g),
        m2_plus_max=(mg / q) ** (2 / g),
        m_gamma_plus_max=mg / q,
    )


def hit_time_tail_bound(t: float, moments: CycleMoments, q: float) -> float:
    if not t > 0:
        raise DomainError(f"hit_time_tail_bound: t must be positive, got {t}")
    return moments.m_gamma / (q * t**moments.gamma)


def _g_bound(x: float, q: float, m1m: float, mg: float, g: float) -> float:
    return g * mg * q_star(q) ** (g - 2) * (1 + q) / (m1m**g * (g - 1) * x ** (g - 1))


def partial_mean_tail_bound(x: float, q: float, m1_minus: float, moments: CycleMoments) -> float:
    """Upper bound on g(x m1- / q*) built from the m_gamma tail bound.

    g(t) = E[T_hat; T_hat > t] / m1-, with T_hat the time to reach u inside a
    cycle that reaches it.
    """
    if not x > 0:
        raise DomainError(f"partial_mean_tail_bound: x must be positive, got {x}")
    return _g_bound(x, q, m1_minus, moments.m_gamma, moments.gamma)


def _check_q(q: float, op: str) -> None:
    if not 0 < q < 0.5:
        raise DomainError(f"{op}: q must lie in (0, 1/2), got {q}")


def _theorem_lower(x: float, q: float, m1m: float, m2m: float, mhat: float, mg: float, g: float) -> float:
    qs = q_star(q)
    c0 = m2m / m1m**2 + _g_bound(x, q, m1m, mg, g)
    return math.exp(-x) * qs * (mhat / m1m - c0)


def _theorem_upper(x: float, q: float, m1m: float, m2m: float, mhat: float, mg: float, g: float) -> float:
    qs = q_star(q)
    r = m2m / m1m**2
    c1 = (2 * x * E_MINUS_2 + 1) * mg * qs ** (g - 1) * (1 + q) / (m1m**g * x ** (g - 1))
    c2 = E_MINUS_2 * ((2 * r + 1) * (x + (r - 1) * qs) + 2 * r * x - 2 * x + qs)
    return math.exp(-x) * qs * (mhat / m1m * (1 + 2 * x * E_MINUS_2) + c1 + c2)


def _check_x(x: float, mode: str, op: str) -> None:
    if mode == TWO_SIDED:
        if not 0 < x < 1:
            raise DomainError(f"{op}: x must lie in (0, 1) for two-sided bounds, got {x}")
    elif mode == LOWER_ONLY:
        if not x > 0:
            raise DomainError(f"{op}: x must be positive, got {x}")
    else:
        raise DomainError(f"{op}: unknown mode {mode!r}")


def theorem11_bounds(
    x: float,
    split: SplitCycleStats,
    moments: CycleMoments,
    mode: str = TWO_SIDED,
) -> BoundReport:
    """Finite-q bracket for Delta_X(x); mode="lower-only" also accepts x >= 1."""
    _check_x(x, mode, "theorem11_bounds")
    _check_q(split.q, "theorem11_bounds")
    args = (x, split.q, split.m1_minus, split.m2_minus, split.m1_plus_hat, moments.m_gamma, moments.gamma)
    lower = _theorem_lower(*args)
    upper = _theorem_upper(*args) if mode == TWO_SIDED else None
    return BoundReport.build(x, lower, upper, split.q, q_star(split.q), label="theorem", source=split.source)


def theorem11_bounds_with_errors(
    x: float,
    split: SplitCycleStats,
    moments: CycleMoments,
    stderrs: dict[str, float],
    mode: str = TWO_SIDED,
) -> BoundReport:
    """Theorem bounds at point estimates with delta-method standard errors.

    stderrs may carry q, m1_minus, m2_minus, m1_plus_hat and m_gamma; missing
    entries count as exact.
    """
    report = theorem11_bounds(x, split, moments, mode)
    point = {
        "q": split.q,
        "m1_minus": split.m1_minus,
        "m2_minus": split.m2_minus,
        "m1_plus_hat": split.m1_plus_hat,
        "m_gamma": moments.m_gamma,
    }
    unknown = set(stderrs) - set(point)
    if unknown:
        raise DomainError(f"theorem11_bounds_with_errors: unknown stderr keys {sorted(unknown)}")

    def evaluate(fn: Callable[..., float], p: dict[str, float]) -> float:
        return fn(x, p["q"], p["m1_minus"], p["m2_minus"], p["m1_plus_hat"], p["m_gamma"], moments.gamma)

    def propagated(fn: Callable[..., float]) -> float:
        total = 0.0
        for name, se in stderrs.items():
            if not se:
                continue
            h = 1e-6 * abs(point[name]) or 1e-9
            hi = dict(point, **{name: point[name] + h})
            lo = dict(point, **{name: point[name] - h})
            total += ((evaluate(fn, hi) - evaluate(fn, lo)) / (2 * h) * se) ** 2
        return math.sqrt(total)

    return report.with_updates(
        lower_stderr=propagated(_theorem_lower),
        upper_stderr=propagated(_theorem_upper) if report.upper is not None else None,
    )


def theorem11_envelope_bounds(
    x: float,
    moments: CycleMoments,
    q: float,
    m_hat1_plus_lower: float = 0.0,
    mode: str = TWO_SIDED,
) -> BoundReport:
    """Theorem bounds with unknown conditional moments replaced by their brackets.

    The lower bound takes the m2- upper bracket, the given lower value of
    m_hat1+, and its minimum over the m1- bracket; the upper bound takes the
    m2- upper bracket, the m1+ ceiling, and its maximum over the m1- bracket.
    """
    _check_x(x, mode, "theorem11_envelope_bounds")
    _check_q(q, "theorem11_envelope_bounds")
    env = split_moment_envelopes(moments, q)
    lo1, hi1 = env.m1_minus
    m2_hi = env.m2_minus[1]
    mg, g = moments.m_gamma, moments.gamma

    def low(m: float) -> float:
        return _theorem_lower(x, q, m, m2_hi, m_hat1_plus_lower, mg, g)

    def high(m: float) -> float:
        return _theorem_upper(x, q, m, m2_hi, env.m1_plus_max, mg, g)

    res = minimize_scalar(low, bounds=(lo1, hi1), method="bounded")
    lower = min(low(lo1), low(hi1), float(res.fun))
    upper = None
    if mode == TWO_SIDED:
        res = minimize_scalar(lambda m: -high(m), bounds=(lo1, hi1), method="bounded")
        upper = max(high(lo1), high(hi1), -float(res.fun))
    logger.debug("theorem11_envelope_bounds: m1- in [%.4g, %.4g] lower=%.4g upper=%s", lo1, hi1, lower, upper)
    return BoundReport.build(
        x,
        lower,
        upper,
        q,
        q_star(q),
        label="theorem-envelope",
        source="envelope",
        notes=("conditional moments replaced by moment-split brackets",),
    )


def _envelope_m_gamma_error(
    report: BoundReport, moments: CycleMoments, stderr: float, m_hat1_plus_lower: float
) -> BoundReport:
    h = 1e-3 * moments.m_gamma
    shifted = [
        theorem11_envelope_bounds(
            report.x, replace(moments, m_gamma=moments.m_gamma + step), report.q, m_hat1_plus_lower=m_hat1_plus_lower
        )
        for step in (h, -h)
    ]
    lower_se = abs(shifted[0].lower - shifted[1].lower) / (2 * h) * stderr
    upper_se = None
    if report.upper is not None:
        upper_se = abs(shifted[0].upper - shifted[1].upper) / (2 * h) * stderr
    return report.with_updates(lower_stderr=lower_se, upper_stderr=upper_se)


def corollary11_bounds(x: float, q: float, m1: float, m2: float, ratio: float) -> BoundReport:
    """Large-u bracket with the o(1) remainders set to 0; ratio = m_hat1+ / m1-."""
    if not 0 < x < 1:
        raise DomainError(f"corollary11_bounds: x must lie in (0, 1), got {x}")
    _check_q(q, "corollary11_bounds")
    if not m1 > 0:
        raise DomainError(f"corollary11_bounds: m1 must be positive, got {m1}")
    qs = q_star(q)
    r = m2 / m1**2
    lower = math.exp(-x) * qs * (ratio - r)
    upper = math.exp(-x) * qs * (ratio * (1 + 2 * x * E_MINUS_2) + E_MINUS_2 * (4 * r * x - x))
    return BoundReport.build(
        x,
        lower,
        upper,
        q,
        qs,
        label="corollary",
        asymptotic=True,
        notes=("asymptotic: o(1) set to 0",),
    )


def pessimistic_tail_lower(x: float, q: float, m1: float, m2: float, ratio: float) -> float:
    """Lower bound on 1 - G_X(x m1- / q*) as u grows."""
    if x < 0:
        raise DomainError(f"pessimistic_tail_lower: x must be nonnegative, got {x}")
    _check_q(q, "pessimistic_tail_lower")
    return math.exp(-x) * (1 + q_star(q) * (ratio - m2 / m1**2))


def pessimistic_report(x: float, q: float, m1: float, m2: float, ratio: float) -> BoundReport:
    tail = pessimistic_tail_lower(x, q, m1, m2, ratio)
    return BoundReport.build(
        x,
        tail - math.exp(-x),
        None,
        q,
        q_star(q),
        label="pessimistic",
        asymptotic=True,
        notes=("asymptotic: o(1) set to 0",),
    )


SOURCING_MODES = ("exact", "envelope", "monte-carlo")


def queue_bound_report(
    model: dict[str, Any],
    u: int,
    x: float,
    q: float,
    m1: float,
    m2: float,
    m1_minus: float,
    m_hat1_plus: float,
    mode: str = "exact",
    m_gamma: float | None = None,
    gamma: float = 3.0,
    m_gamma_source: str = "user",
    m_gamma_stderr: float | None = None,
    estimates: CycleEstimates | None = None,
    m_hat1_plus_lower: float = 0.0,
    extras: dict[str, float] | None = None,
    notes: tuple[str, ...] = (),
) -> QueueBoundReport:
    """Corollary and Theorem bounds for one queue instance.

    In exact mode m2- is taken at its upper bracket m2/(1-q), which keeps
    both Theorem bounds valid. A simulated m_gamma passes its standard error
    in m_gamma_stderr, which is propagated into the Theorem bounds. The
    Theorem report is omitted when no m_gamma is available.
    """
    if mode not in SOURCING_MODES:
        raise DomainError(f"queue_bound_report: unknown mode {mode!r}, expected one of {SOURCING_MODES}")
    _check_q(q, "queue_bound_report")
    corollary = corollary11_bounds(x, q, m1, m2, m_hat1_plus / m1_minus)
    provenance = {"q": "exact", "m1": "exact", "m2": "exact", "m1_minus": "exact", "m_hat1_plus": "exact"}
    notes = tuple(notes)

    mc_split: SplitCycleStats | None = None
    stderrs: dict[str, float] = {}
    if mode == "monte-carlo":
        if estimates is None or estimates.m1_minus is None or estimates.m2_minus is None or estimates.m_hat1_plus is None:
            raise DomainError("queue_bound_report: monte-carlo mode needs cycle estimates with both cycle types")
        mc_split = SplitCycleStats(
            q=estimates.q.value,
            m1_minus=estimates.m1_minus.value,
            m2_minus=estimates.m2_minus.value,
            m1_plus_hat=estimates.m_hat1_plus.value,
            source="monte-carlo",
        )
        stderrs = {
            "q": estimates.q.stderr,
            "m1_minus": estimates.m1_minus.stderr,
            "m2_minus": estimates.m2_minus.stderr,
            "m1_plus_hat": estimates.m_hat1_plus.stderr,
        }
        if m_gamma is None:
            m_gamma, m_gamma_source = estimates.m3.value, "monte-carlo"
            stderrs["m_gamma"] = estimates.m3.stderr

    theorem = None
    if m_gamma is None:
        notes += ("theorem omitted: no m_gamma available",)
    else:
        moments = CycleMoments(m1=m1, m2=m2, m_gamma=m_gamma, gamma=gamma)
        provenance["m_gamma"] = m_gamma_source
        if mc_split is not None:
            theorem = theorem11_bounds_with_errors(x, mc_split, moments, stderrs)
            provenance.update(q="monte-carlo", m1_minus="monte-carlo", m2_minus="monte-carlo", m_hat1_plus="monte-carlo")
        elif mode == "envelope":
            theorem = theorem11_envelope_bounds(x, moments, q, m_hat1_plus_lower=m_hat1_plus_lower)
            if m_gamma_stderr:
                theorem = _envelope_m_gamma_error(theorem, moments, m_gamma_stderr, m_hat1_plus_lower)
            provenance.update(m1_minus="envelope", m2_minus="envelope", m_hat1_plus="envelope")
        else:
            split = SplitCycleStats(q=q, m1_minus=m1_minus, m2_minus=m2 / (1 - q), m1_plus_hat=m_hat1_plus)
            provenance["m2_minus"] = "envelope"
            if m_gamma_stderr:
                theorem = theorem11_bounds_with_errors(x, split, moments, {"m_gamma": m_gamma_stderr})
            else:
                theorem = theorem11_bounds(x, split, moments)

    return QueueBoundReport(
        model=model,
        u=u,
        x=x,
        q=q,
        q_star=q_star(q),
        m1=m1,
        m2=m2,
        m1_minus=m1_minus,
        m_hat1_plus=m_hat1_plus,
        corollary=corollary,
        theorem=theorem,
        provenance=provenance,
        extras=dict(extras or {}),
        notes=notes,
    )
