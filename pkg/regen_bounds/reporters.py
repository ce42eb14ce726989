from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from regen_bounds import __version__
from regen_bounds.models import CycleRecord, QueueBoundReport
from regen_bounds.verification import Verdict

CSV_HEADER = ["length", "idle", "max_level", "hit", "t_cont", "t_emb"]


def build_payload(
    command: str,
    config: dict[str, Any],
    seed: int | None,
    reports: list[QueueBoundReport] | None = None,
    verdict: Verdict | None = None,
    **sections: Any,
) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
    }
    if reports is not None:
        payload["reports"] = [r.to_dict() for r in reports]
    if verdict is not None:
        payload["verdict"] = verdict.to_dict()
    payload.update(sections)
    return payload


def write_json_report(payload: dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6g}"


def build_markdown_report(payload: dict[str, Any]) -> str:
    verdict = payload.get("verdict")
    lines = [
        "# regen-bounds report",
        "",
        f"- **Command:** `{payload['command']}`",
        f"- **Version:** {payload['version']}",
        f"- **Seed:** {payload['seed'] if payload['seed'] is not None else 'n/a'}",
        f"- **Generated:** {payload['generated_at']}",
    ]
    if verdict:
        lines.append(f"- **Verification:** {verdict['status'].upper()} ({verdict['sigmas']:g} sigma)")
    lines.append("")

    for report in payload.get("reports", []):
        lines.extend(
            [
                f"## u = {report['u']}, x = {report['x']:g}",
                "",
                f"- q = {_fmt(report['q'])}, q* = {_fmt(report['q_star'])}",
                f"- m1 = {_fmt(report['m1'])}, m2 = {_fmt(report['m2'])}",
                f"- m1- = {_fmt(report['m1_minus'])}, m_hat1+ = {_fmt(report['m_hat1_plus'])}",
                "",
                "| bound | lower | upper | source | flags |",
                "|---|---|---|---|---|",
            ]
        )
        for name in ("corollary", "theorem", "light_tail", "display"):
            bound = report.get(name)
            if not bound:
                continue
            flags = [f for f in ("asymptotic", "lower_only", "inverted") if bound[f]]
            if not bound["informative"]:
                flags.append("uninformative")
            lines.append(
                f"| {bound['label']} | {_fmt(bound['lower'])} | {_fmt(bound['upper'])} | {bound['source']} | {', '.join(flags) or '-'} |"
            )
        if report.get("notes"):
            lines.append("")
            lines.extend(f"- {note}" for note in report["notes"])
        lines.append("")

    if payload.get("geomsum"):
        lines.extend(["## Geometric sums", "", "| q | x | lower | exact | upper |", "|---|---|---|---|---|"])
        for row in payload["geomsum"]:
            lines.append(
                f"| {row['q']:g} | {row['x']:g} | {_fmt(row['lower'])} | {_fmt(row.get('exact'))} | {_fmt(row['upper'])} |"
            )
        lines.append("")

    if payload.get("estimates"):
        lines.extend(["## Simulation estimates", ""])
        for name, est in payload["estimates"].items():
            if isinstance(est, dict):
                lines.append(f"- **{name}**: {_fmt(est['value'])} ± {_fmt(est['stderr'])} (n={est['n']})")
        lines.append("")

    if verdict and verdict["reasons"]:
        lines.extend(["## Verification reasons", ""])
        lines.extend(f"- {r}" for r in verdict["reasons"])
        lines.append("")

    return "\n".join(lines)


def write_markdown_report(payload: dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(build_markdown_report(payload))


def write_cycles_csv(records: Iterable[CycleRecord], path: Path) -> int:
    count = 0
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.to_row())
            count += 1
    return count
