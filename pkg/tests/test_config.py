import json
import os
from pathlib import Path
from unittest.mock import patch

import pytest

from regen_bounds.config import (
    DEFAULT_RUN,
    SCHEMA_PATH,
    load_env_file,
    load_run_data,
    load_sim_settings,
    parse_run_config,
)
from regen_bounds.distributions import Deterministic
from regen_bounds.errors import ConfigError


def _mm1(**extra):
    return {"command": "mm1", "model": {"lambda": 1.0, "mu": 2.0}, **extra}


def test_defaults_are_filled():
    cfg = parse_run_config(_mm1())
    assert cfg.queue == "mm1"
    assert cfg.level == 6
    assert cfg.x == (0.2, 0.4, 0.6, 0.8)
    assert cfg.mode == "exact"
    assert cfg.m_gamma is None
    assert cfg.output.json is None
    assert cfg.raw == _mm1()


def test_counts_accept_scientific_notation():
    cfg = parse_run_config(_mm1(cycles=1e7, histories=2e4))
    assert cfg.cycles == 10_000_000
    assert cfg.histories == 20_000
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(cycles=1.5e3 + 0.5))
    assert exc.value.path == "cycles"


def test_unknown_keys_name_their_path():
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(levels=6))
    assert exc.value.path == "levels"
    with pytest.raises(ConfigError) as exc:
        parse_run_config({"command": "mm1", "model": {"lambda": 1.0, "mu": 2.0, "nu": 3}})
    assert exc.value.path == "model.nu"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(output={"html": "a.html"}))
    assert exc.value.path == "output.html"


def test_service_queue_is_inferred_and_parsed():
    cfg = parse_run_config({"command": "verify", "model": {"lambda": 0.5, "service": {"type": "deterministic", "value": 1}}})
    assert cfg.queue == "mg1"
    assert cfg.service == Deterministic(value=1.0)


def test_overload_and_bad_values():
    with pytest.raises(ConfigError) as exc:
        parse_run_config({"command": "mm1", "model": {"lambda": 2.0, "mu": 1.0}})
    assert exc.value.path == "model"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(mode="fast"))
    assert exc.value.path == "mode"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(x=[0.2, -0.1]))
    assert exc.value.path == "x[1]"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(gamma=2))
    assert exc.value.path == "gamma"
    with pytest.raises(ConfigError) as exc:
        parse_run_config({"command": "mg1", "queue": "mm1", "model": {"lambda": 1.0, "mu": 2.0}})
    assert exc.value.path == "queue"


def test_geomsum_needs_a_summand_and_valid_q():
    cfg = parse_run_config({"command": "geomsum", "geomsum": {"summand": {"type": "exponential", "rate": 1}}})
    assert cfg.delay is None
    assert cfg.q_grid == (0.005, 0.01, 0.05, 0.1)
    with pytest.raises(ConfigError) as exc:
        parse_run_config({"command": "geomsum"})
    assert exc.value.path == "geomsum.summand"
    with pytest.raises(ConfigError) as exc:
        parse_run_config({"command": "geomsum", "geomsum": {"summand": {"type": "exponential", "rate": 1}, "q": [0.5]}})
    assert exc.value.path == "geomsum.q[0]"


def test_load_run_data_from_yaml(tmp_path: Path):
    path = tmp_path / "run.yml"
    path.write_text("command: mm1\nmodel:\n  lambda: 1\n  mu: 2\nlevel: 8\ncycles: 1e5\n")
    cfg = parse_run_config(load_run_data(path))
    assert cfg.level == 8
    assert cfg.cycles == 100_000


def test_load_run_data_errors(tmp_path: Path):
    with pytest.raises(ConfigError):
        load_run_data(tmp_path / "missing.yml")
    bad = tmp_path / "bad.yml"
    bad.write_text("command: [mm1\n")
    with pytest.raises(ConfigError):
        load_run_data(bad)
    listed = tmp_path / "list.yml"
    listed.write_text("- command: mm1\n")
    with pytest.raises(ConfigError) as exc:
        load_run_data(listed)
    assert "must be an object" in str(exc.value)


def test_schema_keys_match_defaults():
    schema = json.loads(SCHEMA_PATH.read_text())
    assert set(schema["properties"]) == set(DEFAULT_RUN)
    for section in ("geomsum", "output"):
        assert set(schema["properties"][section]["properties"]) == set(DEFAULT_RUN[section])
    assert set(schema["properties"]["model"]["properties"]) == {"lambda", "mu", "service"}


def test_sim_settings_from_env():
    env = {"REGEN_BOUNDS_WORKERS": "4", "REGEN_BOUNDS_SIGMA": "2.5", "REGEN_BOUNDS_EVENT_CAP": "1e6"}
    with patch.dict(os.environ, env, clear=False):
        settings = load_sim_settings()
    assert settings.workers == 4
    assert settings.sigmas == 2.5
    assert settings.event_cap == 1_000_000
    with patch.dict(os.environ, {"REGEN_BOUNDS_WORKERS": "many"}):
        with pytest.raises(ConfigError) as exc:
            load_sim_settings()
    assert exc.value.path == "REGEN_BOUNDS_WORKERS"


def test_env_file_does_not_override(tmp_path: Path):
    env_file = tmp_path / ".env"
    env_file.write_text("# comment\nREGEN_BOUNDS_SIGMA=4\nREGEN_BOUNDS_CHUNK='1024'\n")
    with patch.dict(os.environ, {"REGEN_BOUNDS_SIGMA": "2"}, clear=False):
        os.environ.pop("REGEN_BOUNDS_CHUNK", None)
        load_env_file(env_file)
        assert os.environ["REGEN_BOUNDS_SIGMA"] == "2"
        assert os.environ["REGEN_BOUNDS_CHUNK"] == "1024"


def test_x_must_lie_below_one():
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(x=[1.5]))
    assert exc.value.path == "x[0]"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(x=[0.5, 1.0]))
    assert exc.value.path == "x[1]"


def test_upper_scale_may_be_negative_but_finite():
    assert parse_run_config(_mm1(upper_scale=-1)).upper_scale == -1.0
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(upper_scale=float("inf")))
    assert exc.value.path == "upper_scale"
    with pytest.raises(ConfigError) as exc:
        parse_run_config(_mm1(upper_scale="half"))
    assert exc.value.path == "upper_scale"


def test_cycle_budget_from_env():
    with patch.dict(os.environ, {"REGEN_BOUNDS_MAX_CYCLES": "5e6"}):
        assert load_sim_settings().max_cycles == 5_000_000
    with patch.dict(os.environ, {"REGEN_BOUNDS_MAX_CYCLES": "0"}):
        with pytest.raises(ConfigError) as exc:
            load_sim_settings()
    assert exc.value.path == "REGEN_BOUNDS_MAX_CYCLES"
