import math

import numpy as np
import pytest

from regen_bounds.bounds import partial_mean_tail_bound
from regen_bounds.distributions import Erlang, Exponential, RngStream
from regen_bounds.errors import DomainError, ResourceError
from regen_bounds.geomsum import q_star
from regen_bounds.mg1 import MG1Model, busy_decay, cycle_moments, solve_taboo
from regen_bounds.mm1 import MM1Model, exceedance, m1_minus
from regen_bounds.models import CycleMoments
from regen_bounds.simulator import (
    busy_period_lengths,
    busy_period_tail_slope,
    empirical_renewal,
    first_passage_times,
    hitting_cdf_from_times,
    ks_check,
    simulate_cycle_arrays,
    simulate_cycles,
    simulate_walk,
)


def _mm1() -> MG1Model:
    return MG1Model(lam=1.0, service=Exponential(rate=2.0))


def test_cycle_estimates_match_closed_forms():
    est, cycles = simulate_cycles(_mm1(), 3, 20_000, RngStream(1, 1))
    assert cycles.n == 20_000
    assert est.q.within(1 / 7, sigmas=4.0)
    assert est.m1.within(2.0, sigmas=4.0)
    assert est.m2.within(8.0, sigmas=4.0)
    assert est.m1_minus.within(1 + 22 / 42, sigmas=4.0)
    assert est.m_hat1_plus.within(13 / 7, sigmas=4.0)
    assert est.m_hat1_plus_embedded.within(13 / 7 + 0.5, sigmas=4.0)


def test_hit_times_are_ordered_within_cycles():
    cycles = simulate_cycle_arrays(_mm1(), 3, 5_000, RngStream(2, 1))
    hit = cycles.hit
    assert np.all(cycles.idle[hit] <= cycles.t_cont[hit])
    assert np.all(cycles.t_cont[hit] <= cycles.t_emb[hit])
    assert np.all(cycles.t_emb[hit] <= cycles.length[hit] + 1e-12)
    assert np.all((cycles.max_level >= 3) == hit)


def test_level_one_is_hit_at_the_first_arrival():
    cycles = simulate_cycle_arrays(_mm1(), 1, 2_000, RngStream(3, 1))
    assert cycles.hit.all()
    assert np.array_equal(cycles.t_cont, cycles.idle)


def test_results_do_not_depend_on_worker_count():
    one = simulate_cycle_arrays(_mm1(), 4, 6_000, RngStream(4, 1), workers=1, chunk_size=2_000)
    two = simulate_cycle_arrays(_mm1(), 4, 6_000, RngStream(4, 1), workers=2, chunk_size=2_000)
    assert np.array_equal(one.length, two.length)
    assert np.array_equal(one.hit, two.hit)


def test_too_few_cycles_and_event_cap():
    with pytest.raises(DomainError):
        simulate_cycles(_mm1(), 3, 999, RngStream(0))
    with pytest.raises(ResourceError):
        simulate_cycles(_mm1(), 3, 1_000, RngStream(0), event_cap=1)


def test_first_passage_mean_and_reproducibility():
    cont, emb = first_passage_times(_mm1(), 3, 20_000, RngStream(5, 2), chunk_size=4_096)
    assert cont.size == 20_000
    assert np.all(cont <= emb)
    # birth-death passage times 1 + 3 + 7
    assert abs(cont.mean() - 11.0) < 4 * cont.std(ddof=1) / math.sqrt(cont.size)

    again, _ = first_passage_times(_mm1(), 3, 20_000, RngStream(5, 2), workers=2, chunk_size=4_096)
    assert np.array_equal(cont, again)


def test_hitting_cdf_from_times():
    hc = hitting_cdf_from_times(np.array([0.5, 1.5, 2.5, 3.5]), [1.0], 2.0)
    assert hc.cdf[0].value == pytest.approx(0.5)
    assert hc.deltas[0].value == pytest.approx(1 - math.exp(-1) - 0.5)
    assert hc.survival[0].value == pytest.approx(0.5)
    with pytest.raises(DomainError):
        hitting_cdf_from_times(np.array([1.0, 2.0]), [1.0], 0.0)


def test_walk_absorption():
    stats = simulate_walk(1 / 3, 3, 50_000, RngStream(6))
    assert stats.absorbed_high.within(1 / 7, sigmas=4.0)
    assert stats.steps.within(12 / 7, sigmas=4.0)
    assert stats.steps_high.within(18 / 49, sigmas=4.0)
    with pytest.raises(DomainError):
        simulate_walk(1 / 3, 3, 10, RngStream(6), start=3)


def test_busy_period_decay_rate():
    model = _mm1()
    lengths = busy_period_lengths(model, 200_000, RngStream(7, 3))
    _, alpha = busy_decay(model)
    fitted = busy_period_tail_slope(lengths, np.linspace(4.0, 16.0, 13))
    assert fitted == pytest.approx(alpha, rel=0.25)


def test_renewal_function_of_poisson_process():
    counts = empirical_renewal(Exponential(rate=1.0), [1.0, 2.0], 20_000, RngStream(8))
    assert counts[0].within(1.0, sigmas=4.0)
    assert counts[1].within(2.0, sigmas=4.0)


def test_ks_check_accepts_matching_law():
    samples = Exponential(rate=1.0).sample(RngStream(9), 5_000)
    _, pvalue = ks_check(samples, "expon")
    assert pvalue > 1e-3


def test_cycle_budget_truncates_histories():
    cont, emb = first_passage_times(_mm1(), 8, 10**6, RngStream(18, 2), chunk_size=2_000, max_cycles=4_000)
    assert 2 <= cont.size < 10**6
    assert emb.size == cont.size
    with pytest.raises(ResourceError):
        first_passage_times(_mm1(), 16, 100, RngStream(18, 2), chunk_size=1_000, max_cycles=1)
    with pytest.raises(DomainError):
        first_passage_times(_mm1(), 3, 100, RngStream(18, 2), max_cycles=0)


def test_erlang_cycles_match_taboo_solution():
    model = MG1Model(lam=1.0, service=Erlang(shape=2, rate=4.0))
    taboo = solve_taboo(model, 6)
    est, _ = simulate_cycles(model, 6, 100_000, RngStream(19, 1))
    assert est.q.within(taboo.q_u, sigmas=4.0)
    assert est.m_hat1_plus_embedded.within(taboo.m_hat1_plus, sigmas=4.0)
    assert est.m1_minus.within(taboo.m1_minus, sigmas=4.0)
    assert est.m1.within(cycle_moments(model)[0], sigmas=4.0)


def test_hit_time_partial_mean_stays_under_its_bound():
    queue = MM1Model(lam=1.0, mu=2.0)
    u = 6
    q, m1m = exceedance(queue, u), m1_minus(queue, u)
    cycles = simulate_cycle_arrays(_mm1(), u, 50_000, RngStream(20, 1))
    hit_times = cycles.t_cont[cycles.hit]
    for x in (0.01, 0.05, 0.2):
        t = x * m1m / q_star(q)
        observed = float(np.mean(np.where(hit_times > t, hit_times, 0.0))) / m1m
        assert observed <= partial_mean_tail_bound(x, q, m1m, CycleMoments(m1=2.0, m2=8.0, m_gamma=60.0))
