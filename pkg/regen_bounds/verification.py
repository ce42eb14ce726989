from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

from regen_bounds.errors import DomainError
from regen_bounds.models import BoundReport, SimEstimate

PASS = "pass"
FAIL = "fail"
UNINFORMATIVE = "uninformative"


@dataclass(frozen=True)
class Verdict:
    status: str
    sigmas: float
    reasons: list[str] = field(default_factory=list)
    checks: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def verify_report(
    reports: BoundReport | Sequence[BoundReport],
    empirical: SimEstimate | Sequence[SimEstimate],
    sigmas: float = 3.0,
) -> Verdict:
    """Check lower - k sigma <= Delta_hat(x) <= upper + k sigma at every grid point.

    Any violation fails the run; otherwise any uninformative report makes the
    verdict uninformative.
    """
    if isinstance(reports, BoundReport):
        reports = [reports]
    if isinstance(empirical, SimEstimate):
        empirical = [empirical]
    if len(reports) != len(empirical):
        raise DomainError(f"verify_report: {len(reports)} reports but {len(empirical)} empirical points")
    if not sigmas > 0:
        raise DomainError(f"verify_report: sigmas must be positive, got {sigmas}")

    reasons: list[str] = []
    checks: list[dict[str, Any]] = []
    uninformative = False
    for report, est in zip(reports, empirical):
        band = sigmas * est.stderr
        lower = report.lower - band - sigmas * (report.lower_stderr or 0.0)
        upper = None if report.upper is None else report.upper + band + sigmas * (report.upper_stderr or 0.0)
        ok = lower <= est.value and (upper is None or est.value <= upper)
        checks.append(
            {
                "x": report.x,
                "label": report.label,
                "lower": report.lower,
                "upper": report.upper,
                "empirical": est.value,
                "stderr": est.stderr,
                "ok": ok,
                "informative": report.informative,
            }
        )
        if not ok:
            reasons.append(
                f"{report.label} x={report.x:g}: empirical {est.value:.6g} outside "
                f"[{lower:.6g}, {'inf' if upper is None else f'{upper:.6g}'}] ({sigmas:g} sigma)"
            )
        if not report.informative:
            uninformative = True

    if reasons:
        status = FAIL
    elif uninformative:
        status = UNINFORMATIVE
        reasons.append("at least one bound is uninformative (lower <= -1 or upper >= 1)")
    else:
        status = PASS
    return Verdict(status=status, sigmas=sigmas, reasons=reasons, checks=checks)
