from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from regen_bounds.distributions import ServiceDistribution, parse_distribution
from regen_bounds.errors import ConfigError, DomainError
from regen_bounds.geomsum import DEFAULT_X_GRID

COMMANDS = ("mm1", "mg1", "geomsum", "simulate", "verify")
MODES = ("exact", "envelope", "monte-carlo")
CLOCKS = ("continuous", "embedded")
QUEUES = ("mm1", "mg1")

DEFAULT_RUN = {
    "command": "verify",
    "queue": None,
    "model": {},
    "level": 6,
    "x": [0.2, 0.4, 0.6, 0.8],
    "cycles": 100_000,
    "histories": 10_000,
    "seed": 0,
    "mode": "exact",
    "m_gamma": None,
    "gamma": 3.0,
    "clock": "continuous",
    "sigmas": 3.0,
    "light_tail": False,
    "upper_scale": 1.0,
    "geomsum": {"summand": None, "delay": None, "q": [0.005, 0.01, 0.05, 0.1], "x": list(DEFAULT_X_GRID)},
    "output": {"json": None, "markdown": None, "csv": None},
}
MODEL_KEYS = ("lambda", "mu", "service")
GEOMSUM_KEYS = tuple(DEFAULT_RUN["geomsum"])
OUTPUT_KEYS = tuple(DEFAULT_RUN["output"])
SCHEMA_PATH = Path(__file__).parent / "schema" / "run_config.schema.json"


@dataclass(frozen=True)
class OutputPaths:
    json: str | None = None
    markdown: str | None = None
    csv: str | None = None


@dataclass(frozen=True)
class RunConfig:
    command: str
    queue: str
    lam: float | None
    mu: float | None
    service: ServiceDistribution | None
    level: int
    x: tuple[float, ...]
    cycles: int
    histories: int
    seed: int
    mode: str
    m_gamma: float | None
    gamma: float
    clock: str
    sigmas: float
    light_tail: bool
    upper_scale: float
    summand: ServiceDistribution | None
    delay: ServiceDistribution | None
    q_grid: tuple[float, ...]
    geomsum_x: tuple[float, ...]
    output: OutputPaths = field(default_factory=OutputPaths)
    raw: dict[str, Any] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class SimSettings:
    workers: int
    sigmas: float
    event_cap: int
    chunk_size: int
    max_cycles: int = 10**9


def load_env_file(path: Path) -> None:
    """Load simple KEY=VALUE pairs from a .env file without overriding existing env."""
    if not path.exists() or not path.is_file():
        return

    for raw in path.read_text(errors="ignore").splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        if key and key not in os.environ:
            os.environ[key] = value


def _env_number(name: str, default: str, kind: type) -> Any:
    raw = (os.getenv(name, default) or default).strip()
    try:
        value = kind(float(raw)) if kind is int else kind(raw)
    except ValueError:
        raise ConfigError(name, f"must be a number, got {raw!r}") from None
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {raw!r}")
    return value


def load_sim_settings() -> SimSettings:
    return SimSettings(
        workers=_env_number("REGEN_BOUNDS_WORKERS", "1", int),
        sigmas=_env_number("REGEN_BOUNDS_SIGMA", "3", float),
        event_cap=_env_number("REGEN_BOUNDS_EVENT_CAP", "1e9", int),
        chunk_size=_env_number("REGEN_BOUNDS_CHUNK", "65536", int),
        max_cycles=_env_number("REGEN_BOUNDS_MAX_CYCLES", "1e9", int),
    )


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_count(value: Any) -> bool:
    return _is_number(value) and float(value).is_integer()


def _check_keys(data: dict[str, Any], allowed: tuple[str, ...], prefix: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _number_list(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
        raise ConfigError(path, "must be a non-empty list of numbers")
    return tuple(float(v) for v in value)


def _count(value: Any, path: str, minimum: int) -> int:
    # YAML 1.1 reads 1e7 as a string, JSON as a float
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(path, f"must be an integer >= {minimum}, got {value!r}") from None
    if not _is_count(value) or int(value) < minimum:
        raise ConfigError(path, f"must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _choice(value: Any, path: str, options: tuple[str, ...]) -> str:
    if value not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {value!r}")
    return value


def parse_run_config(data: Any) -> RunConfig:
    """Validate a run configuration and fill defaults; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("", "run configuration must be an object")
    _check_keys(data, tuple(DEFAULT_RUN), "")
    merged = copy.deepcopy(DEFAULT_RUN)
    for key, value in data.items():
        if key in {"geomsum", "output", "model"}:
            if not isinstance(value, dict):
                raise ConfigError(key, "must be an object")
            allowed = {"geomsum": GEOMSUM_KEYS, "output": OUTPUT_KEYS, "model": MODEL_KEYS}[key]
            _check_keys(value, allowed, f"{key}.")
            merged[key].update(value)
        else:
            merged[key] = value

    command = _choice(merged["command"], "command", COMMANDS)
    model = merged["model"]
    queue = merged["queue"] or ("mg1" if "service" in model else "mm1")
    _choice(queue, "queue", QUEUES)
    if command in QUEUES and queue != command:
        raise ConfigError("queue", f"command {command} runs the {command} queue, got {queue!r}")

    lam = model.get("lambda")
    mu = model.get("mu")
    service = None
    if command != "geomsum":
        if not _is_number(lam) or lam <= 0:
            raise ConfigError("model.lambda", f"must be a positive number, got {lam!r}")
        if queue == "mm1":
            if not _is_number(mu) or mu <= 0:
                raise ConfigError("model.mu", f"must be a positive number, got {mu!r}")
            if lam >= mu:
                raise ConfigError("model", f"load rho = lambda/mu = {lam / mu:.6g} must be below 1")
        else:
            service = parse_distribution(model.get("service"), "model.service")
            if lam * service.mean >= 1:
                raise ConfigError("model", f"load rho = lambda * b1 = {lam * service.mean:.6g} must be below 1")

    x = _number_list(merged["x"], "x")
    for idx, value in enumerate(x):
        if not 0 < value < 1:
            raise ConfigError(f"x[{idx}]", f"must lie in (0, 1), got {value}")

    m_gamma = merged["m_gamma"]
    if m_gamma is not None and (not _is_number(m_gamma) or m_gamma <= 0):
        raise ConfigError("m_gamma", f"must be a positive number or null, got {m_gamma!r}")
    for key in ("gamma", "sigmas"):
        if not _is_number(merged[key]) or merged[key] <= 0:
            raise ConfigError(key, f"must be a positive number, got {merged[key]!r}")
    if not _is_number(merged["upper_scale"]) or not math.isfinite(merged["upper_scale"]):
        raise ConfigError("upper_scale", f"must be a finite number, got {merged['upper_scale']!r}")
    if merged["gamma"] <= 2:
        raise ConfigError("gamma", f"must exceed 2, got {merged['gamma']!r}")
    if not isinstance(merged["light_tail"], bool):
        raise ConfigError("light_tail", "must be true or false")

    gs = merged["geomsum"]
    summand = delay = None
    if command == "geomsum":
        summand = parse_distribution(gs["summand"], "geomsum.summand")
        if gs["delay"] is not None:
            delay = parse_distribution(gs["delay"], "geomsum.delay")
    q_grid = _number_list(gs["q"], "geomsum.q")
    for idx, q in enumerate(q_grid):
        if not 0 < q < 0.5:
            raise ConfigError(f"geomsum.q[{idx}]", f"must lie in (0, 1/2), got {q}")

    out = merged["output"]
    for key in OUTPUT_KEYS:
        if out[key] is not None and not isinstance(out[key], str):
            raise ConfigError(f"output.{key}", "must be a path string or null")

    try:
        seed = _count(merged["seed"], "seed", 0)
        if seed > 2**64 - 1:
            raise ConfigError("seed", "must fit in 64 bits")
        return RunConfig(
            command=command,
            queue=queue,
            lam=float(lam) if lam is not None else None,
            mu=float(mu) if mu is not None else None,
            service=service,
            level=_count(merged["level"], "level", 1),
            x=x,
            cycles=_count(merged["cycles"], "cycles", 1000),
            histories=_count(merged["histories"], "histories", 2),
            seed=seed,
            mode=_choice(merged["mode"], "mode", MODES),
            m_gamma=float(m_gamma) if m_gamma is not None else None,
            gamma=float(merged["gamma"]),
            clock=_choice(merged["clock"], "clock", CLOCKS),
            sigmas=float(merged["sigmas"]),
            light_tail=merged["light_tail"],
            upper_scale=float(merged["upper_scale"]),
            summand=summand,
            delay=delay,
            q_grid=q_grid,
            geomsum_x=_number_list(gs["x"], "geomsum.x"),
            output=OutputPaths(**out),
            raw=copy.deepcopy(data),
        )
    except DomainError as exc:
        raise ConfigError("", str(exc)) from exc


def load_run_data(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML run file into a plain mapping, unvalidated."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        data = yaml.safe_load(config_path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(str(path), "run configuration must be an object")
    return data
