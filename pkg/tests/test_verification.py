import pytest

from regen_bounds.errors import DomainError
from regen_bounds.models import BoundReport, SimEstimate
from regen_bounds.verification import FAIL, PASS, UNINFORMATIVE, verify_report


def _bound(lower: float = -0.02, upper: float = 0.03, x: float = 0.5) -> BoundReport:
    return BoundReport.build(x, lower, upper, 0.01, 0.01005, label="theorem")


def _emp(value: float, stderr: float = 0.001) -> SimEstimate:
    return SimEstimate(value=value, stderr=stderr, n=10_000)


def test_inside_band_passes():
    verdict = verify_report(_bound(), _emp(0.01))
    assert verdict.status == PASS
    assert verdict.passed
    assert verdict.checks[0]["ok"]


def test_sigma_band_widens_the_interval():
    assert verify_report(_bound(), _emp(0.032)).status == PASS
    assert verify_report(_bound(), _emp(0.04)).status == FAIL


def test_negative_control_fails():
    halved = _bound(upper=0.012)
    verdict = verify_report(halved, _emp(0.025))
    assert verdict.status == FAIL
    assert not verdict.passed
    assert "outside" in verdict.reasons[0]


def test_uninformative_bound_is_flagged_without_failing():
    wide = _bound(lower=-1.5, upper=2.0)
    verdict = verify_report([_bound(), wide], [_emp(0.0), _emp(0.0)])
    assert verdict.status == UNINFORMATIVE
    assert verdict.passed


def test_violation_wins_over_uninformative():
    wide = _bound(lower=-1.5, upper=2.0)
    verdict = verify_report([_bound(), wide], [_emp(0.5), _emp(0.0)])
    assert verdict.status == FAIL


def test_bound_stderr_counts_in_the_band():
    loose = _bound(upper=0.03).with_updates(upper_stderr=0.01)
    assert verify_report(loose, _emp(0.05)).status == PASS


def test_lower_only_bound_has_no_upper_check():
    lower_only = BoundReport.build(1.5, -0.01, None, 0.01, 0.01005, label="theorem")
    assert verify_report(lower_only, _emp(0.9)).status == PASS


def test_argument_errors():
    with pytest.raises(DomainError):
        verify_report([_bound(), _bound()], [_emp(0.0)])
    with pytest.raises(DomainError):
        verify_report(_bound(), _emp(0.0), sigmas=0.0)
