from __future__ import annotations

import numpy as np
import pytest

from gaussunravel.config import ConfigError, ScenarioConfig, load_config

BASE = {
    "time_unit": "1/omega_d",
    "system": {"n_qubits": 3, "coupled": [0, 2], "initial_state": "plus"},
    "bath": {"kind": "modes", "g": [0.2], "omega": [1.0]},
    "grid": {"dt": 0.1, "n_steps": 5},
}


def test_single_bath_is_shared_by_all_channels():
    cfg = ScenarioConfig.model_validate(BASE)
    assert len(cfg.baths()) == 2


def test_bath_count_must_match_channels():
    raw = dict(BASE, bath=[BASE["bath"]] * 3)
    with pytest.raises(ValueError):
        ScenarioConfig.model_validate(raw)


def test_system_spec_checks():
    with pytest.raises(ValueError):
        ScenarioConfig.model_validate(dict(BASE, system={"n_qubits": 3, "initial_state": "bell"}))
    with pytest.raises(ValueError):
        ScenarioConfig.model_validate(dict(BASE, system={"n_qubits": 2, "coupled": [2]}))
    cfg = ScenarioConfig.model_validate(dict(BASE, system={"n_qubits": 1, "initial_state": [[1, 0], [0, 1]]}))
    assert np.allclose(cfg.system.state(), np.array([1, 1j]) / np.sqrt(2))


def test_resolved_dump_validates_back():
    cfg = load_config("ohmic")
    assert ScenarioConfig.model_validate(cfg.resolved()) == cfg


def test_seed_override_and_range():
    assert load_config("ohmic", seed=2**64 - 1).seed == 2**64 - 1
    with pytest.raises(ConfigError):
        load_config("ohmic", seed=-1)


def test_squeezing_rules_from_config():
    cfg = load_config("ohmic")
    rule = cfg.rule()
    assert rule.T == pytest.approx(cfg.grid.dt * cfg.grid.n_steps)
    assert abs(rule(np.array([1.0]))[0]) == pytest.approx(1 - cfg.squeezing.epsilon)
