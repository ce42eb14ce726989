"""Seeded Monte Carlo oracle for the M/G/1 queue-length process.

Cycles are simulated in batches with one array slot per cycle: each step
serves one customer of every active cycle, draws the Poisson number of
arrivals during that service, and records the first time the level reaches
u. Arrivals inside a service are uniform order statistics, so the arrival
that reaches u falls at a Beta-distributed fraction of the service.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special, stats

from regen_bounds.distributions import RngStream, ServiceDistribution
from regen_bounds.errors import DomainError, ResourceError
from regen_bounds.mg1 import MG1Model
from regen_bounds.models import CycleEstimates, CycleRecord, SimEstimate
from regen_bounds.parallel import merge_arrays, run_chunked

logger = logging.getLogger(__name__)

DEFAULT_EVENT_CAP = 10**9
DEFAULT_CHUNK = 65536
MIN_CYCLES = 1000


@dataclass(frozen=True)
class CycleArrays:
    length: np.ndarray
    idle: np.ndarray
    max_level: np.ndarray
    hit: np.ndarray
    t_cont: np.ndarray
    t_emb: np.ndarray

    @property
    def n(self) -> int:
        return int(self.length.size)

    @classmethod
    def merge(cls, parts: Sequence["CycleArrays"]) -> "CycleArrays":
        return cls(*(merge_arrays([getattr(p, name) for p in parts]) for name in _ARRAY_FIELDS))

    def records(self) -> list[CycleRecord]:
        out = []
        for i in range(self.n):
            hit = bool(self.hit[i])
            out.append(
                CycleRecord(
                    total_length=float(self.length[i]),
                    idle_time=float(self.idle[i]),
                    max_level=int(self.max_level[i]),
                    hit_level=hit,
                    hit_time_continuous=float(self.t_cont[i]) if hit else None,
                    hit_time_embedded=float(self.t_emb[i]) if hit else None,
                )
            )
        return out


_ARRAY_FIELDS = ("length", "idle", "max_level", "hit", "t_cont", "t_emb")


def _cycle_chunk(model: MG1Model, u: int, event_cap: int, rng: RngStream, size: int) -> CycleArrays:
    gen = rng.generator
    lam, service = model.lam, model.service
    idle = gen.exponential(1.0 / lam, size)
    t = idle.copy()
    level = np.ones(size, dtype=np.int64)
    max_level = np.ones(size, dtype=np.int64)
    events = np.zeros(size, dtype=np.int64)
    hit = np.zeros(size, dtype=bool)
    t_cont = np.full(size, np.nan)
    t_emb = np.full(size, np.nan)
    if u == 1:
        hit[:] = True
        t_cont[:] = idle
        t_emb[:] = idle

    active = np.arange(size)
    while active.size:
        eta = np.asarray(service.sample(rng, active.size), dtype=float)
        nu = gen.poisson(lam * eta)
        start = level[active]
        reached = start + nu

        first = ~hit[active] & (reached >= u)
        if first.any():
            idx = active[first]
            k = u - start[first]
            frac = gen.beta(k, nu[first] - k + 1)
            t_cont[idx] = t[idx] + eta[first] * frac
            t_emb[idx] = t[idx] + eta[first]
            hit[idx] = True

        max_level[active] = np.maximum(max_level[active], reached)
        t[active] += eta
        level[active] = reached - 1
        events[active] += 1 + nu
        if events[active].max() > event_cap:
            raise ResourceError(
                f"simulate_cycles: a busy period exceeded {event_cap} events at rho={model.rho:.4g}; "
                "the load is too close to 1"
            )
        active = active[level[active] > 0]

    return CycleArrays(length=t, idle=idle, max_level=max_level, hit=hit, t_cont=t_cont, t_emb=t_emb)


def _check_level(u: int, op: str) -> None:
    if isinstance(u, bool) or int(u) != u or u < 1:
        raise DomainError(f"{op}: level u must be an integer >= 1, got {u!r}")


def simulate_cycle_arrays(
    model: MG1Model,
    u: int,
    n: int,
    rng: RngStream,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> CycleArrays:
    _check_level(u, "simulate_cycles")
    task = partial(_cycle_chunk, model, u, event_cap)
    parts = run_chunked(task, n, rng.seed, rng.stream_id, chunk_size, workers)
    return CycleArrays.merge(parts)


def _maybe(samples: np.ndarray) -> SimEstimate | None:
    return SimEstimate.from_samples(samples) if samples.size >= 2 else None


def cycle_estimates(cycles: CycleArrays, u: int) -> CycleEstimates:
    length, hit = cycles.length, cycles.hit
    return CycleEstimates(
        n=cycles.n,
        u=u,
        q=SimEstimate.from_samples(hit),
        m1=SimEstimate.from_samples(length),
        m2=SimEstimate.from_samples(length**2),
        m3=SimEstimate.from_samples(length**3),
        m1_minus=_maybe(length[~hit]),
        m2_minus=_maybe(length[~hit] ** 2),
        m1_plus=_maybe(length[hit]),
        m_hat1_plus=_maybe(cycles.t_cont[hit]),
        m_hat1_plus_embedded=_maybe(cycles.t_emb[hit]),
    )


def simulate_cycles(
    model: MG1Model,
    u: int,
    n: int,
    rng: RngStream,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> tuple[CycleEstimates, CycleArrays]:
    """Aggregate cycle statistics from n independent regeneration cycles."""
    if n < MIN_CYCLES:
        raise DomainError(f"simulate_cycles: need n >= {MIN_CYCLES} cycles, got {n}")
    cycles = simulate_cycle_arrays(model, u, n, rng, workers, chunk_size, event_cap)
    est = cycle_estimates(cycles, u)
    logger.info("simulate_cycles: u=%d n=%d q=%.6g m1=%.6g", u, n, est.q.value, est.m1.value)
    return est, cycles


def first_passage_times(
    model: MG1Model,
    u: int,
    n: int,
    rng: RngStream,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    event_cap: int = DEFAULT_EVENT_CAP,
    max_cycles: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """First times the queue reaches u, on both clocks, for up to n independent histories.

    A history is the run of cycles up to and including the first one that
    reaches u, read off consecutive cycles in stream order. Once max_cycles
    cycles have been drawn (checked per round of chunks) the histories found
    so far are returned with a warning; fewer than two raise ResourceError.
    """
    _check_level(u, "first_passage_times")
    if n < 1:
        raise DomainError(f"first_passage_times: need n >= 1 histories, got {n}")
    if max_cycles is not None and max_cycles < 1:
        raise DomainError(f"first_passage_times: max_cycles must be positive, got {max_cycles}")
    task = partial(_cycle_chunk, model, u, event_cap)
    cont: list[np.ndarray] = []
    emb: list[np.ndarray] = []
    found = 0
    carry = 0.0
    next_chunk = 0
    batch = max(1, workers)
    drawn = 0
    while found < n:
        if max_cycles is not None and drawn >= max_cycles:
            if found < 2:
                raise ResourceError(
                    f"first_passage_times: cycle budget {max_cycles} spent with {found} of {n} histories at u={u}"
                )
            logger.warning(
                "first_passage_times: cycle budget %d spent with %d of %d histories; Delta_hat half-width <= %.3g",
                max_cycles,
                found,
                n,
                3 * 0.5 / math.sqrt(found),
            )
            break
        parts = run_chunked(task, batch * chunk_size, rng.seed, rng.stream_id, chunk_size, workers, first_chunk=next_chunk)
        next_chunk += batch
        for part in parts:
            drawn += part.n
            csum = np.concatenate(([0.0], np.cumsum(part.length)))
            hits = np.flatnonzero(part.hit)
            if hits.size == 0:
                carry += csum[-1]
                continue
            starts = np.concatenate(([0], hits[:-1] + 1))
            before = csum[hits] - csum[starts]
            before[0] += carry
            cont.append(before + part.t_cont[hits])
            emb.append(before + part.t_emb[hits])
            found += hits.size
            carry = csum[-1] - csum[hits[-1] + 1]
        logger.debug("first_passage_times: %d of %d histories after %d chunks", found, n, next_chunk)
    return merge_arrays(cont)[:n], merge_arrays(emb)[:n]


@dataclass(frozen=True)
class HittingCdf:
    xs: tuple[float, ...]
    scale: float
    cdf: tuple[SimEstimate, ...]
    deltas: tuple[SimEstimate, ...]
    survival: tuple[SimEstimate, ...]

    def max_deviation(self) -> float:
        return max(abs(d.value) for d in self.deltas)


def hitting_cdf_from_times(times: np.ndarray, xs: Sequence[float], scale: float) -> HittingCdf:
    if not scale > 0:
        raise DomainError(f"hitting_cdf: scale must be positive, got {scale}")
    cdf, deltas, survival = [], [], []
    for x in xs:
        est = SimEstimate.from_samples(times <= x * scale)
        cdf.append(est)
        deltas.append(SimEstimate(value=1.0 - math.exp(-x) - est.value, stderr=est.stderr, n=est.n))
        survival.append(SimEstimate(value=1.0 - est.value, stderr=est.stderr, n=est.n))
    return HittingCdf(xs=tuple(xs), scale=scale, cdf=tuple(cdf), deltas=tuple(deltas), survival=tuple(survival))


def hitting_cdf(
    model: MG1Model,
    u: int,
    n: int,
    xs: Sequence[float],
    scale: float,
    rng: RngStream,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    event_cap: int = DEFAULT_EVENT_CAP,
    max_cycles: int | None = None,
) -> HittingCdf:
    """Empirical G_X(x * scale) and Delta_X(x) on the continuous clock; scale = m1- / q*."""
    times, _ = first_passage_times(model, u, n, rng, workers, chunk_size, event_cap, max_cycles)
    return hitting_cdf_from_times(times, xs, scale)


def renewal_counts(
    summand: ServiceDistribution,
    t_grid: Sequence[float],
    n: int,
    rng: RngStream,
    delay: ServiceDistribution | None = None,
) -> np.ndarray:
    """N(t) = number of partial sums S_1 <= S_2 <= ... not above t, per path and grid point."""
    tg = np.asarray(t_grid, dtype=float)
    if tg.ndim != 1 or tg.size == 0 or np.any(tg < 0):
        raise DomainError("empirical_renewal: t_grid must be a non-empty list of nonnegative times")
    horizon = float(tg.max())
    first = delay if delay is not None else summand
    sums = np.asarray(first.sample(rng, n), dtype=float)
    counts = np.zeros((n, tg.size), dtype=np.int64)
    idx = np.arange(n)
    while idx.size:
        counts[idx] += sums[idx, None] <= tg[None, :]
        sums[idx] += summand.sample(rng, idx.size)
        idx = idx[sums[idx] <= horizon]
    return counts


def empirical_renewal(
    summand: ServiceDistribution,
    t_grid: Sequence[float],
    n: int,
    rng: RngStream,
    delay: ServiceDistribution | None = None,
) -> list[SimEstimate]:
    counts = renewal_counts(summand, t_grid, n, rng, delay)
    return [SimEstimate.from_samples(counts[:, j]) for j in range(counts.shape[1])]


@dataclass(frozen=True)
class WalkStats:
    p: float
    u: int
    n: int
    absorbed_high: SimEstimate
    steps: SimEstimate
    steps_high: SimEstimate
    steps_low: SimEstimate


def simulate_walk(p: float, u: int, n: int, rng: RngStream, start: int = 1) -> WalkStats:
    """+-1 walk with up-probability p, absorbed at 0 and u."""
    if not 0 < p < 1:
        raise DomainError(f"simulate_walk: p must lie in (0, 1), got {p}")
    if not 0 < start < u:
        raise DomainError(f"simulate_walk: start must lie strictly between 0 and u={u}, got {start}")
    gen = rng.generator
    pos = np.full(n, start, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    idx = np.arange(n)
    while idx.size:
        pos[idx] += np.where(gen.random(idx.size) < p, 1, -1)
        steps[idx] += 1
        idx = idx[(pos[idx] > 0) & (pos[idx] < u)]
    high = pos >= u
    return WalkStats(
        p=p,
        u=u,
        n=n,
        absorbed_high=SimEstimate.from_samples(high),
        steps=SimEstimate.from_samples(steps),
        steps_high=SimEstimate.from_samples(steps * high),
        steps_low=SimEstimate.from_samples(steps * ~high),
    )


def busy_period_lengths(
    model: MG1Model,
    n: int,
    rng: RngStream,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> np.ndarray:
    # a level no busy period reaches in practice, so no hit bookkeeping fires
    cycles = simulate_cycle_arrays(model, np.iinfo(np.int32).max, n, rng, workers, chunk_size, event_cap)
    return cycles.length - cycles.idle


def _log_tail_shape(alpha: float, t: np.ndarray) -> np.ndarray:
    """log of the integral from t to infinity of s^(-3/2) exp(-alpha s), up to a constant."""
    x = alpha * t
    return math.log(2.0) - x + np.log(x**-0.5 - math.sqrt(math.pi) * special.erfcx(np.sqrt(x)))


def busy_period_tail_slope(lengths: np.ndarray, t_grid: Sequence[float]) -> float:
    """Decay rate alpha fitted to the empirical busy-period survival function.

    The survival function is matched on t_grid to C * int_t^inf s^(-3/2) e^(-alpha s) ds,
    with C profiled out of the log-scale least squares.
    """
    lengths = np.asarray(lengths, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    surv = np.array([np.mean(lengths >= v) for v in t])
    if np.any(surv <= 0):
        raise DomainError("busy_period_tail_slope: the empirical survival is zero on part of t_grid; shorten it")
    log_s = np.log(surv)

    def sse(alpha: float) -> float:
        resid = log_s - _log_tail_shape(alpha, t)
        return float(np.sum((resid - resid.mean()) ** 2))

    upper = 10.0 / float(np.mean(lengths))
    res = optimize.minimize_scalar(sse, bounds=(1e-6, upper), method="bounded", options={"xatol": 1e-8})
    logger.debug("busy_period_tail_slope: alpha=%.6g sse=%.3e", res.x, res.fun)
    return float(res.x)


def ks_check(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray] | str, *args: float) -> tuple[float, float]:
    """(statistic, p-value) of the one-sample Kolmogorov-Smirnov test."""
    result = stats.kstest(np.asarray(samples, dtype=float), cdf, args=args)
    return float(result.statistic), float(result.pvalue)
