import math

import pytest

from regen_bounds.bounds import (
    LOWER_ONLY,
    corollary11_bounds,
    hit_time_tail_bound,
    partial_mean_tail_bound,
    pessimistic_report,
    pessimistic_tail_lower,
    queue_bound_report,
    split_moment_envelopes,
    split_moment_identity,
    theorem11_bounds,
    theorem11_bounds_with_errors,
    theorem11_envelope_bounds,
)
from regen_bounds.errors import DegenerateError, DomainError
from regen_bounds.geomsum import q_star
from regen_bounds.mm1 import MM1Model, exceedance, m1_minus, mhat1_plus
from regen_bounds.models import CycleMoments, SplitCycleStats

# M/M/1 with lambda = 1, mu = 2: cycle moments 2, 8, 60
MOMENTS = CycleMoments(m1=2.0, m2=8.0, m_gamma=60.0)


def _split(u: int = 8) -> SplitCycleStats:
    model = MM1Model(lam=1.0, mu=2.0)
    q = exceedance(model, u)
    return SplitCycleStats(q=q, m1_minus=m1_minus(model, u), m2_minus=8.0 / (1 - q), m1_plus_hat=mhat1_plus(model, u))


def test_split_moment_identity():
    assert split_moment_identity(1.0, 3.0, 0.25) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        split_moment_identity(1.0, 3.0, 1.0)


def test_theorem_bounds_bracket_and_flags():
    report = theorem11_bounds(0.5, _split(), MOMENTS)
    assert report.label == "theorem"
    assert report.lower < report.upper
    assert report.informative
    assert not report.inverted
    assert report.tail_lower == pytest.approx(math.exp(-0.5) + report.lower)


def test_theorem_lower_only_accepts_large_x():
    report = theorem11_bounds(1.5, _split(), MOMENTS, mode=LOWER_ONLY)
    assert report.upper is None
    assert report.lower_only
    with pytest.raises(DomainError):
        theorem11_bounds(1.5, _split(), MOMENTS)


def test_theorem_errors_propagate_only_given_stderrs():
    split = _split()
    none = theorem11_bounds_with_errors(0.5, split, MOMENTS, {"q": 0.0})
    assert none.lower_stderr == 0.0
    some = theorem11_bounds_with_errors(0.5, split, MOMENTS, {"m1_plus_hat": 0.05, "m_gamma": 2.0})
    assert some.lower_stderr > 0
    assert some.upper_stderr > 0
    assert some.lower == pytest.approx(none.lower)
    with pytest.raises(DomainError):
        theorem11_bounds_with_errors(0.5, split, MOMENTS, {"m9": 1.0})


def test_envelope_bounds_contain_exact_theorem_bounds():
    split = _split()
    exact = theorem11_bounds(0.5, split, MOMENTS)
    env = theorem11_envelope_bounds(0.5, MOMENTS, split.q, m_hat1_plus_lower=1.0)
    assert env.source == "envelope"
    assert env.lower <= exact.lower
    assert env.upper >= exact.upper


def test_envelopes_hold_the_true_conditional_mean():
    split = _split()
    env = split_moment_envelopes(MOMENTS, split.q)
    assert env.contains("m1_minus", split.m1_minus)
    assert env.m1_plus_max >= split.m1_plus_hat
    assert hit_time_tail_bound(10.0, MOMENTS, split.q) == pytest.approx(60.0 / (split.q * 1000.0))


def test_envelopes_degenerate_for_large_q():
    with pytest.raises(DegenerateError):
        split_moment_envelopes(CycleMoments(m1=1.0, m2=2.0, m_gamma=1000.0), 0.3)


def test_corollary_is_asymptotic_and_needs_x_below_one():
    report = corollary11_bounds(0.4, 0.01, 2.0, 8.0, 2.0)
    assert report.asymptotic
    assert report.lower < report.upper
    assert report.lower == pytest.approx(math.exp(-0.4) * q_star(0.01) * (2.0 - 2.0))
    with pytest.raises(DomainError):
        corollary11_bounds(1.0, 0.01, 2.0, 8.0, 2.0)


def test_pessimistic_tail_lower():
    tail = pessimistic_tail_lower(0.5, 0.01, 2.0, 8.0, 1.5)
    assert tail == pytest.approx(math.exp(-0.5) * (1 + q_star(0.01) * (1.5 - 2.0)))
    report = pessimistic_report(0.5, 0.01, 2.0, 8.0, 1.5)
    assert report.lower_only
    assert report.tail_lower == pytest.approx(tail)


def test_queue_report_omits_theorem_without_m_gamma():
    split = _split()
    report = queue_bound_report({}, 8, 0.5, split.q, 2.0, 8.0, split.m1_minus, split.m1_plus_hat)
    assert report.theorem is None
    assert any("theorem omitted" in n for n in report.notes)
    assert report.corollary.label == "corollary"


def test_queue_report_exact_mode_uses_upper_m2_bracket():
    split = _split()
    report = queue_bound_report(
        {}, 8, 0.5, split.q, 2.0, 8.0, split.m1_minus, split.m1_plus_hat, m_gamma=60.0
    )
    assert report.provenance["m2_minus"] == "envelope"
    assert report.provenance["m_gamma"] == "user"
    assert report.theorem.lower == pytest.approx(theorem11_bounds(0.5, split, MOMENTS).lower)


def test_queue_report_mode_errors():
    split = _split()
    args = ({}, 8, 0.5, split.q, 2.0, 8.0, split.m1_minus, split.m1_plus_hat)
    with pytest.raises(DomainError):
        queue_bound_report(*args, mode="bogus")
    with pytest.raises(DomainError):
        queue_bound_report(*args, mode="monte-carlo")


def test_theorem_lower_carries_the_hit_time_term():
    split = _split()
    x = 0.5
    g = partial_mean_tail_bound(x, split.q, split.m1_minus, MOMENTS)
    ratio = split.m1_plus_hat / split.m1_minus
    expected = math.exp(-x) * q_star(split.q) * (ratio - split.m2_minus / split.m1_minus**2 - g)
    assert theorem11_bounds(x, split, MOMENTS).lower == pytest.approx(expected)
    assert partial_mean_tail_bound(0.25, split.q, split.m1_minus, MOMENTS) == pytest.approx(4 * g)
    with pytest.raises(DomainError):
        partial_mean_tail_bound(0.0, split.q, split.m1_minus, MOMENTS)


def test_queue_report_propagates_m_gamma_stderr_in_both_modes():
    split = _split()
    args = ({}, 8, 0.5, split.q, 2.0, 8.0, split.m1_minus, split.m1_plus_hat)
    for mode in ("exact", "envelope"):
        plain = queue_bound_report(*args, mode=mode, m_gamma=60.0)
        assert plain.theorem.lower_stderr is None
        noisy = queue_bound_report(*args, mode=mode, m_gamma=60.0, m_gamma_stderr=2.0, m_gamma_source="monte-carlo")
        assert noisy.theorem.lower_stderr > 0
        assert noisy.theorem.upper_stderr > 0
        assert noisy.theorem.lower == pytest.approx(plain.theorem.lower)
        assert noisy.provenance["m_gamma"] == "monte-carlo"
