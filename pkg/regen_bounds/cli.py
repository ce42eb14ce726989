from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import typer
import yaml

from regen_bounds.config import (
    RunConfig,
    SimSettings,
    load_env_file,
    load_run_data,
    load_sim_settings,
    parse_run_config,
)
from regen_bounds.distributions import Exponential, RngStream
from regen_bounds.errors import ConfigError, RegenBoundsError
from regen_bounds.geomsum import SummandStats, delta_exact_exponential, geomsum_error, simulate_geom_sum
from regen_bounds.mg1 import MG1Model, statement41_report
from regen_bounds.mm1 import MM1Model, statement42_report
from regen_bounds.models import CycleRecord, QueueBoundReport
from regen_bounds.reporters import build_payload, write_cycles_csv, write_json_report, write_markdown_report
from regen_bounds.simulator import cycle_estimates, first_passage_times, hitting_cdf_from_times, simulate_cycle_arrays
from regen_bounds.verification import FAIL, Verdict, verify_report

app = typer.Typer(help="regen-bounds: two-sided bounds on first-passage times of regenerative processes")

CYCLE_STREAM = 1
HISTORY_STREAM = 2
GEOMSUM_STREAM = 3


@dataclass
class RunOutcome:
    payload: dict[str, Any]
    verdict: Verdict | None = None
    records: list[CycleRecord] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", help="Log library debug records to stderr")) -> None:
    """regen-bounds command group."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _mg1_model(cfg: RunConfig) -> MG1Model:
    if cfg.queue == "mm1":
        return MG1Model(lam=cfg.lam, service=Exponential(rate=cfg.mu))
    return MG1Model(lam=cfg.lam, service=cfg.service)


def _analyze(cfg: RunConfig, settings: SimSettings) -> tuple[list[QueueBoundReport], dict[str, Any] | None]:
    estimates = None
    m_gamma, source, m_gamma_se = cfg.m_gamma, "user", None
    if m_gamma is None and cfg.gamma != 3.0:
        raise ConfigError("gamma", "a simulated m_gamma is the third cycle moment; set m_gamma when gamma != 3")
    if m_gamma is None or cfg.mode == "monte-carlo":
        cycles = simulate_cycle_arrays(
            _mg1_model(cfg),
            cfg.level,
            cfg.cycles,
            RngStream(cfg.seed, CYCLE_STREAM),
            settings.workers,
            settings.chunk_size,
            settings.event_cap,
        )
        estimates = cycle_estimates(cycles, cfg.level)
        if m_gamma is None and cfg.mode != "monte-carlo":
            m_gamma, source, m_gamma_se = estimates.m3.value, "monte-carlo", estimates.m3.stderr

    reports = []
    for x in cfg.x:
        if cfg.queue == "mm1":
            report = statement42_report(
                MM1Model(lam=cfg.lam, mu=cfg.mu),
                cfg.level,
                x,
                clock=cfg.clock,
                mode=cfg.mode,
                m_gamma=m_gamma,
                gamma=cfg.gamma,
                m_gamma_source=source,
                m_gamma_stderr=m_gamma_se,
                estimates=estimates,
            )
        else:
            report = statement41_report(
                _mg1_model(cfg),
                cfg.level,
                x,
                mode=cfg.mode,
                m_gamma=m_gamma,
                gamma=cfg.gamma,
                m_gamma_source=source,
                m_gamma_stderr=m_gamma_se,
                estimates=estimates,
                light_tail=cfg.light_tail,
            )
        reports.append(report)
    return reports, estimates.to_dict() if estimates else None


def _run_geomsum(cfg: RunConfig) -> RunOutcome:
    stats = SummandStats.from_laws(cfg.summand, cfg.delay)
    exact_known = isinstance(cfg.summand, Exponential) and cfg.delay is None
    rows = []
    sandwich_ok = True
    for k, q in enumerate(cfg.q_grid):
        sim = simulate_geom_sum(
            cfg.summand, cfg.delay, q, cfg.histories, RngStream(cfg.seed, (GEOMSUM_STREAM << 16) | k), cfg.geomsum_x
        )
        for x, est in zip(cfg.geomsum_x, sim.cdf):
            err = geomsum_error(x, q, stats)
            row = err.to_dict()
            row["empirical"] = 1.0 - math.exp(-x) - est.value
            row["empirical_stderr"] = est.stderr
            if exact_known:
                row["exact"] = delta_exact_exponential(x, q)
                sandwich_ok &= err.lower <= row["exact"] and (err.upper is None or row["exact"] <= err.upper)
            rows.append(row)
    payload = build_payload(cfg.command, cfg.raw, cfg.seed, geomsum=rows)
    summary = [f"geomsum rows={len(rows)} q={list(cfg.q_grid)}"]
    if exact_known:
        summary.append(f"exact sandwich {'holds' if sandwich_ok else 'VIOLATED'} on the grid")
    verdict = None if sandwich_ok else Verdict(status=FAIL, sigmas=0.0, reasons=["exact value outside lemma bounds"])
    return RunOutcome(payload=payload, verdict=verdict, summary=summary)


def run(cfg: RunConfig, settings: SimSettings) -> RunOutcome:
    """Execute one validated run; errors propagate as RegenBoundsError."""
    if cfg.command == "geomsum":
        return _run_geomsum(cfg)

    if cfg.command == "simulate":
        cycles = simulate_cycle_arrays(
            _mg1_model(cfg),
            cfg.level,
            cfg.cycles,
            RngStream(cfg.seed, CYCLE_STREAM),
            settings.workers,
            settings.chunk_size,
            settings.event_cap,
        )
        est = cycle_estimates(cycles, cfg.level)
        payload = build_payload(cfg.command, cfg.raw, cfg.seed, estimates=est.to_dict())
        summary = [
            f"cycles={est.n} q={est.q.value:.6g}±{est.q.stderr:.2g} "
            f"m1={est.m1.value:.6g}±{est.m1.stderr:.2g} m2={est.m2.value:.6g}±{est.m2.stderr:.2g}"
        ]
        records = cycles.records() if cfg.output.csv else []
        return RunOutcome(payload=payload, records=records, summary=summary)

    reports, estimates = _analyze(cfg, settings)
    summary = [
        f"u={r.u} x={r.x:g} q={r.q:.6g} q*={r.q_star:.6g} m_hat1+={r.m_hat1_plus:.6g} m1-={r.m1_minus:.6g} "
        f"lower={r.corollary.lower:.6g} upper={r.corollary.upper:.6g}"
        for r in reports
    ]
    if cfg.command != "verify":
        return RunOutcome(payload=build_payload(cfg.command, cfg.raw, cfg.seed, reports, estimates=estimates), summary=summary)

    sigmas = cfg.sigmas if "sigmas" in cfg.raw else settings.sigmas
    cont, _ = first_passage_times(
        _mg1_model(cfg),
        cfg.level,
        cfg.histories,
        RngStream(cfg.seed, HISTORY_STREAM),
        settings.workers,
        settings.chunk_size,
        settings.event_cap,
        settings.max_cycles,
    )
    if cont.size < cfg.histories:
        summary.append(f"cycle budget spent: {cont.size} of {cfg.histories} histories")
    scale = reports[0].m1_minus / reports[0].q_star
    empirical = hitting_cdf_from_times(cont, cfg.x, scale)
    checked = []
    for r in reports:
        bound = r.theorem or r.corollary
        if bound.upper is not None and cfg.upper_scale != 1.0:
            bound = bound.with_updates(
                upper=bound.upper * cfg.upper_scale,
                notes=bound.notes + (f"upper scaled by {cfg.upper_scale:g}",),
            )
        checked.append(bound)
    verdict = verify_report(checked, list(empirical.deltas), sigmas)
    payload = build_payload(
        cfg.command,
        cfg.raw,
        cfg.seed,
        reports,
        verdict,
        estimates=estimates,
        empirical={
            "histories": int(cont.size),
            "requested": cfg.histories,
            "scale": scale,
            "x": list(empirical.xs),
            "delta": [d.to_dict() for d in empirical.deltas],
        },
    )
    return RunOutcome(payload=payload, verdict=verdict, summary=summary)


class LawText(str):
    """Distribution given on the command line as JSON or YAML flow text."""


def _law(text: str | None) -> LawText | None:
    return None if text is None else LawText(text)


def _resolve(value: Any, path: str) -> Any:
    if not isinstance(value, LawText):
        return value
    try:
        return yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"malformed distribution: {exc}") from exc


def _merge(raw: dict[str, Any], key: str, values: dict[str, Any]) -> None:
    given = {k: _resolve(v, f"{key}.{k}") for k, v in values.items() if v is not None}
    if given:
        raw[key] = {**(raw.get(key) or {}), **given}


def _execute(command: str, config: str | None, overrides: dict[str, Any], model: dict[str, Any] | None = None) -> None:
    load_env_file(Path.cwd() / ".env")
    try:
        raw = load_run_data(config) if config else {}
        raw["command"] = command
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, dict):
                _merge(raw, key, value)
            else:
                raw[key] = value
        _merge(raw, "model", model or {})
        cfg = parse_run_config(raw)
        settings = load_sim_settings()
        outcome = run(cfg, settings)
    except ConfigError as exc:
        typer.secho(f"Invalid configuration: {exc}", fg=typer.colors.RED)
        raise typer.Exit(code=1)
    except RegenBoundsError as exc:
        typer.secho(f"Computation failed: {exc}", fg=typer.colors.RED)
        raise typer.Exit(code=1)

    written = []
    try:
        if cfg.output.json:
            write_json_report(outcome.payload, Path(cfg.output.json))
            written.append(cfg.output.json)
        if cfg.output.markdown:
            write_markdown_report(outcome.payload, Path(cfg.output.markdown))
            written.append(cfg.output.markdown)
        if cfg.output.csv and outcome.records:
            write_cycles_csv(outcome.records, Path(cfg.output.csv))
            written.append(cfg.output.csv)
    except OSError as exc:
        typer.secho(f"Could not write report: {exc}", fg=typer.colors.RED)
        raise typer.Exit(code=1)

    for line in outcome.summary:
        typer.echo(line)
    if written:
        typer.echo(f"Wrote: {', '.join(written)}")

    verdict = outcome.verdict
    if verdict is None:
        return
    if verdict.status == FAIL:
        typer.secho("Verification failed", fg=typer.colors.RED)
        for reason in verdict.reasons:
            typer.echo(f"- {reason}")
        raise typer.Exit(code=2)
    typer.secho(f"Verification {verdict.status}", fg=typer.colors.GREEN)


@app.command()
def mm1(
    lam: float | None = typer.Option(None, "--lambda", help="Arrival rate"),
    mu: float | None = typer.Option(None, "--mu", help="Service rate"),
    level: int | None = typer.Option(None, "--level", help="Level u [default: 6]"),
    x: list[float] | None = typer.Option(None, "--x", help="Scaled time, repeatable [default: 0.2 0.4 0.6 0.8]"),
    clock: str | None = typer.Option(None, help="continuous|embedded [default: continuous]"),
    mode: str | None = typer.Option(None, help="exact|envelope|monte-carlo [default: exact]"),
    m_gamma: float | None = typer.Option(None, "--m-gamma", help="Third cycle moment; simulated when omitted"),
    cycles: float | None = typer.Option(None, help="Cycles simulated for m_gamma [default: 100000]"),
    seed: int | None = typer.Option(None, help="Random seed [default: 0]"),
    config: str | None = typer.Option(None, help="Run configuration (JSON or YAML)"),
    json_out: str | None = typer.Option(None, help="JSON report output path"),
    md_out: str | None = typer.Option(None, help="Markdown report output path"),
) -> None:
    """Bounds for the M/M/1 queue from its closed forms."""
    _execute(
        "mm1",
        config,
        {
            "level": level,
            "x": x or None,
            "clock": clock,
            "mode": mode,
            "m_gamma": m_gamma,
            "cycles": cycles,
            "seed": seed,
            "output": {"json": json_out, "markdown": md_out},
        },
        {"lambda": lam, "mu": mu},
    )


@app.command()
def mg1(
    lam: float | None = typer.Option(None, "--lambda", help="Arrival rate"),
    service: str | None = typer.Option(None, help='Service law as JSON, e.g. {"type": "erlang", "shape": 2, "rate": 4}'),
    level: int | None = typer.Option(None, "--level", help="Level u [default: 6]"),
    x: list[float] | None = typer.Option(None, "--x", help="Scaled time, repeatable [default: 0.2 0.4 0.6 0.8]"),
    mode: str | None = typer.Option(None, help="exact|envelope|monte-carlo [default: exact]"),
    m_gamma: float | None = typer.Option(None, "--m-gamma", help="Third cycle moment; simulated when omitted"),
    light_tail: bool = typer.Option(False, "--light-tail", help="Add the decay-rate substitute for m_hat1+"),
    cycles: float | None = typer.Option(None, help="Cycles simulated for m_gamma [default: 100000]"),
    seed: int | None = typer.Option(None, help="Random seed [default: 0]"),
    config: str | None = typer.Option(None, help="Run configuration (JSON or YAML)"),
    json_out: str | None = typer.Option(None, help="JSON report output path"),
    md_out: str | None = typer.Option(None, help="Markdown report output path"),
) -> None:
    """Bounds for the M/G/1 queue from the embedded-chain systems."""
    _execute(
        "mg1",
        config,
        {
            "level": level,
            "x": x or None,
            "mode": mode,
            "m_gamma": m_gamma,
            "light_tail": light_tail or None,
            "cycles": cycles,
            "seed": seed,
            "output": {"json": json_out, "markdown": md_out},
        },
        {"lambda": lam, "service": _law(service)},
    )


@app.command()
def geomsum(
    summand: str | None = typer.Option(None, help="Summand law as JSON"),
    delay: str | None = typer.Option(None, help="Law of the first summand as JSON [default: same as summand]"),
    q: list[float] | None = typer.Option(None, "--q", help="Geometric parameter, repeatable [default: 0.005 0.01 0.05 0.1]"),
    x: list[float] | None = typer.Option(None, "--x", help="Scaled time, repeatable [default: 0.1 .. 0.9]"),
    histories: float | None = typer.Option(None, help="Simulated sums per q [default: 10000]"),
    seed: int | None = typer.Option(None, help="Random seed [default: 0]"),
    config: str | None = typer.Option(None, help="Run configuration (JSON or YAML)"),
    json_out: str | None = typer.Option(None, help="JSON report output path"),
    md_out: str | None = typer.Option(None, help="Markdown report output path"),
) -> None:
    """Exponential-approximation error bounds for geometric sums."""
    _execute(
        "geomsum",
        config,
        {
            "histories": histories,
            "seed": seed,
            "geomsum": {
                "summand": _law(summand),
                "delay": _law(delay),
                "q": q or None,
                "x": x or None,
            },
            "output": {"json": json_out, "markdown": md_out},
        },
    )


@app.command()
def simulate(
    lam: float | None = typer.Option(None, "--lambda", help="Arrival rate"),
    mu: float | None = typer.Option(None, "--mu", help="Service rate (M/M/1)"),
    service: str | None = typer.Option(None, help="Service law as JSON (M/G/1)"),
    level: int | None = typer.Option(None, "--level", help="Level u [default: 6]"),
    cycles: float | None = typer.Option(None, help="Regeneration cycles [default: 100000]"),
    seed: int | None = typer.Option(None, help="Random seed [default: 0]"),
    config: str | None = typer.Option(None, help="Run configuration (JSON or YAML)"),
    json_out: str | None = typer.Option(None, help="JSON report output path"),
    md_out: str | None = typer.Option(None, help="Markdown report output path"),
    csv_out: str | None = typer.Option(None, help="Per-cycle CSV output path"),
) -> None:
    """Simulate regeneration cycles and report the cycle statistics."""
    _execute(
        "simulate",
        config,
        {
            "level": level,
            "cycles": cycles,
            "seed": seed,
            "output": {"json": json_out, "markdown": md_out, "csv": csv_out},
        },
        {"lambda": lam, "mu": mu, "service": _law(service)},
    )


@app.command()
def verify(
    config: str | None = typer.Option(None, help="Run configuration (JSON or YAML)"),
    lam: float | None = typer.Option(None, "--lambda", help="Arrival rate"),
    mu: float | None = typer.Option(None, "--mu", help="Service rate (M/M/1)"),
    service: str | None = typer.Option(None, help="Service law as JSON (M/G/1)"),
    level: int | None = typer.Option(None, "--level", help="Level u [default: 6]"),
    x: list[float] | None = typer.Option(None, "--x", help="Scaled time, repeatable [default: 0.2 0.4 0.6 0.8]"),
    cycles: float | None = typer.Option(None, help="Cycles simulated for m_gamma [default: 100000]"),
    histories: float | None = typer.Option(None, help="First-passage histories [default: 10000]"),
    seed: int | None = typer.Option(None, help="Random seed [default: 0]"),
    sigmas: float | None = typer.Option(None, help="Acceptance band in standard errors [default: 3]"),
    upper_scale: float | None = typer.Option(
        None, "--upper-scale", help="Multiply the upper bounds; -1 mirrors them for a negative control [default: 1]"
    ),
    json_out: str | None = typer.Option(None, help="JSON report output path"),
    md_out: str | None = typer.Option(None, help="Markdown report output path"),
) -> None:
    """Check the Theorem bounds against simulated first-passage histories."""
    _execute(
        "verify",
        config,
        {
            "level": level,
            "x": x or None,
            "cycles": cycles,
            "histories": histories,
            "seed": seed,
            "sigmas": sigmas,
            "upper_scale": upper_scale,
            "output": {"json": json_out, "markdown": md_out},
        },
        {"lambda": lam, "mu": mu, "service": _law(service)},
    )


if __name__ == "__main__":
    app()
