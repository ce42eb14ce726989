import math

import numpy as np
import pytest

from regen_bounds.distributions import Deterministic, Erlang, Exponential, HyperExponential, Uniform
from regen_bounds.errors import DomainError, QuadratureError
from regen_bounds.mg1 import (
    MG1Model,
    arrivals_per_service,
    busy_decay,
    cramer_root,
    cycle_moments,
    exceedance_slope,
    light_tail_params,
    mhat_light_tail_bound,
    solve_exceedance,
    solve_reach_means,
    solve_taboo,
    statement41_report,
    truncation_level,
)


def _md1() -> MG1Model:
    return MG1Model(lam=0.5, service=Deterministic(value=1.0))


def test_arrival_law_sums_to_one():
    for service in (Deterministic(value=1.0), Erlang(shape=2, rate=4.0), Uniform(lo=0.0, hi=1.0)):
        model = MG1Model(lam=0.5, service=service)
        d, D = arrivals_per_service(model, truncation_level(model, 6))
        assert d.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(D >= 0)
        assert np.all(np.diff(D) <= 1e-15)


def test_uniform_arrival_law_by_quadrature():
    d, _ = arrivals_per_service(MG1Model(lam=0.5, service=Uniform(lo=0.0, hi=1.0)), 4)
    assert d[0] == pytest.approx((1 - math.exp(-0.5)) / 0.5, abs=1e-9)


def test_degenerate_mixtures_match_exponential():
    base = solve_taboo(MG1Model(lam=1.0, service=Exponential(rate=2.0)), 7)
    for service in (Erlang(shape=1, rate=2.0), HyperExponential(weights=(1.0,), rates=(2.0,))):
        other = solve_taboo(MG1Model(lam=1.0, service=service), 7)
        assert other.q_u == pytest.approx(base.q_u, rel=1e-10)
        assert other.m_hat1_plus == pytest.approx(base.m_hat1_plus, rel=1e-10)


def test_small_levels():
    model = _md1()
    q_ku, q = solve_exceedance(model, 1)
    assert q == 1.0 and q_ku.size == 0
    _, q2 = solve_exceedance(model, 2)
    assert q2 == pytest.approx(1 - math.exp(-0.5))
    _, m_hat = solve_reach_means(model, 1)
    assert m_hat == pytest.approx(2.0)
    assert solve_taboo(model, 1).m1_minus is None


def test_exceedance_grows_with_starting_level():
    q_ku, q = solve_exceedance(_md1(), 8)
    assert q == q_ku[0]
    assert np.all(np.diff(q_ku) > 0)


def test_mean_cycle_is_split_into_both_types():
    model = _md1()
    taboo = solve_taboo(model, 6)
    m1, _ = cycle_moments(model)
    m1_plus = (m1 - (1 - taboo.q_u) * taboo.m1_minus) / taboo.q_u
    assert taboo.m1_minus < m1 < m1_plus
    assert taboo.m_hat1_plus < m1_plus
    assert taboo.to_dict()["K"] >= truncation_level(model, 6)


def test_busy_decay_and_cramer_root_for_exponential_service():
    model = MG1Model(lam=1.0, service=Exponential(rate=2.0))
    v, alpha = busy_decay(model)
    assert v == pytest.approx(2.0 - math.sqrt(2.0), rel=1e-10)
    assert alpha == pytest.approx((math.sqrt(2.0) - 1.0) ** 2, rel=1e-10)
    beta, gamma = cramer_root(model)
    assert beta == pytest.approx(1.0, rel=1e-10)
    assert gamma == pytest.approx(math.log(2.0), rel=1e-10)


def test_exceedance_decays_at_the_cramer_rate():
    model = _md1()
    _, gamma = cramer_root(model)
    slope = exceedance_slope(model, range(8, 18))
    assert slope == pytest.approx(-gamma, rel=0.05)


def test_exceedance_slope_is_minus_the_cramer_root():
    for service in (Exponential(rate=2.0), Erlang(shape=2, rate=4.0)):
        model = MG1Model(lam=1.0, service=service)
        _, gamma = cramer_root(model)
        assert exceedance_slope(model, range(10, 26)) == pytest.approx(-gamma, rel=0.02)


def test_light_tail_bound_formula():
    model = _md1()
    params = light_tail_params(model)
    via_q, via_gamma = mhat_light_tail_bound(model, 6, 0.01, params)
    assert via_gamma == pytest.approx(2.0 + 6 * math.exp(params.gamma_rate - 1) / params.alpha)
    assert via_q == pytest.approx(2.0 + 6 / (params.alpha * math.e * 0.01 ** (1 / 6)))


def test_statement_report_with_light_tail():
    report = statement41_report(_md1(), 6, 0.5, light_tail=True)
    assert report.theorem is None
    assert report.light_tail.label == "light-tail"
    assert "gamma_rate" in report.extras
    assert report.provenance["q"] == "exact"


def test_statement_report_with_m_gamma():
    report = statement41_report(_md1(), 6, 0.5, m_gamma=500.0)
    assert report.theorem is not None
    assert report.theorem.lower < report.theorem.upper


def test_statement_report_rejects_large_exceedance():
    heavy = MG1Model(lam=0.9, service=Deterministic(value=1.0))
    with pytest.raises(DomainError):
        statement41_report(heavy, 2, 0.5)
    with pytest.raises(DomainError):
        statement41_report(heavy, 1, 0.5)


def test_cached_arrival_law_is_read_only():
    taboo = solve_taboo(_md1(), 6)
    assert not taboo.d.flags.writeable
    assert not taboo.D.flags.writeable
    with pytest.raises(ValueError):
        taboo.d[0] = 0.0
    assert solve_taboo(_md1(), 6).q_u == taboo.q_u


def test_truncation_stops_at_the_cap():
    # a rare slow phase puts mass on tens of thousands of arrivals per service
    model = MG1Model(lam=0.5, service=HyperExponential(weights=(0.99998, 0.00002), rates=(10.0, 2.5e-5)))
    assert model.rho == pytest.approx(0.45, rel=1e-4)
    with pytest.raises(QuadratureError):
        solve_exceedance(model, 4)


def test_short_cycles_are_longer_than_idle_and_shorter_than_average():
    for lam, service in ((0.3, Deterministic(value=1.0)), (1.0, Erlang(shape=2, rate=4.0)), (0.8, Uniform(lo=0.0, hi=2.0))):
        model = MG1Model(lam=lam, service=service)
        m1, _ = cycle_moments(model)
        for u in (2, 3, 6, 10):
            m1_minus = solve_taboo(model, u).m1_minus
            assert 1.0 / lam < m1_minus < m1


def test_statement_report_propagates_m_gamma_stderr():
    exact = statement41_report(_md1(), 6, 0.5, m_gamma=500.0, m_gamma_source="monte-carlo", m_gamma_stderr=25.0)
    assert exact.theorem.lower_stderr > 0
    assert exact.theorem.upper_stderr > 0
    envelope = statement41_report(
        _md1(), 6, 0.5, mode="envelope", m_gamma=500.0, m_gamma_source="monte-carlo", m_gamma_stderr=25.0
    )
    assert envelope.theorem.source == "envelope"
    assert envelope.theorem.lower_stderr > 0
    assert envelope.theorem.upper_stderr > 0
