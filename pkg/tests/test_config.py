"""
Configuration loading and unit conversions
"""
import json

import pytest
from pydantic import ValidationError

from src.core.exceptions import ConfigurationError
from src.utils.config import (
    ConfigManager, EstimatorConfig, ScenarioConfig, SensingConfig, SimulationConfig, load_config_file,
)
from src.utils.constants import DESK_DEFAULTS, OUTPUT_DIR_ENV, REFERENCE_DEFAULTS, Waveform
from src.utils.units import db_to_linear, dbm_to_watt, dbsm_to_m2, kmh_to_ms, linear_to_db

def test_reference_defaults():
    config = SimulationConfig()
    assert config.scenario.grid.subcarriers == REFERENCE_DEFAULTS['subcarriers']
    assert config.scenario.num_aps == 32
    assert config.scenario.grid.waveform == Waveform.OTFS
    assert config.sensing.crlb_budget == pytest.approx(0.01)

def test_desk_preset_and_overrides():
    desk = ScenarioConfig.desk(num_users=2)
    assert desk.grid.subcarriers == DESK_DEFAULTS['subcarriers']
    assert desk.num_aps == DESK_DEFAULTS['num_aps']
    assert desk.num_users == 2
    assert desk.grid.subcarrier_spacing == pytest.approx(DESK_DEFAULTS['bandwidth_hz'] / DESK_DEFAULTS['subcarriers'])

def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        SimulationConfig.model_validate({'scenario': {'num_apps': 4}})

def test_search_steps_must_shrink():
    assert EstimatorConfig(search_steps=[5.0, 5.0, 1.0]).search_steps == [5.0, 5.0, 1.0]
    with pytest.raises(ValidationError):
        EstimatorConfig(search_steps=[1.0, 10.0])
    with pytest.raises(ValidationError):
        EstimatorConfig(search_steps=[1.0, 0.0])
    with pytest.raises(ValidationError):
        SensingConfig(peb_threshold_m=0.0)

def test_output_dir_resolution(monkeypatch, tmp_path):
    config = SimulationConfig.model_validate({'harness': {'output_dir': 'from_file'}})
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert config.resolve_output_dir() == 'from_file'
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert config.resolve_output_dir() == str(tmp_path)
    assert config.resolve_output_dir('cli') == 'cli'

def test_explicit_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({'sensing': {'peb_threshold_m': 0.5}, 'scenario': {'num_aps': 6}}))
    config = load_config_file(str(path))
    assert config.sensing.peb_threshold_m == 0.5
    assert config.scenario.num_aps == 6

def test_explicit_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        ConfigManager(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ConfigManager(str(broken))
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({'scenario': {'num_aps': 0}}))
    with pytest.raises(ConfigurationError):
        ConfigManager(str(invalid))

def test_save_and_reload(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{}")
    manager = ConfigManager(str(path))
    manager.config = SimulationConfig(scenario=ScenarioConfig.desk())
    manager.save_config()
    assert ConfigManager(str(path)).config == manager.config

def test_unit_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-89.0) == pytest.approx(10 ** (-11.9))
    assert db_to_linear(20.0) == pytest.approx(100.0)
    assert linear_to_db(1000.0) == pytest.approx(30.0)
    assert dbsm_to_m2(0.0) == pytest.approx(1.0)
    assert kmh_to_ms(36.0) == pytest.approx(10.0)
