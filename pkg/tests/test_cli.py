"""
Command-line entry point
"""
import json

import pandas as pd
import pytest
from loguru import logger

from src import main as cli
from src.utils.config import SimulationConfig

@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    """No user config file, and loguru sinks dropped after each command"""
    monkeypatch.setattr('src.utils.config.user_config_dir', lambda *args: str(tmp_path / "user_config"))
    yield
    logger.remove()

def test_peb_aoa_sweep(tmp_path):
    out = tmp_path / "out"
    assert cli.main(['peb', '--sweep', 'aoa', '--out', str(out)]) == 0
    frame = pd.read_csv(out / "peb_aoa.csv")
    assert len(frame) == 13
    assert list(frame.columns) == ['aoa_deg', 'exact_peb', 'approx_peb']
    payload = json.loads((out / "peb_aoa.json").read_text())
    assert set(payload['d_coefficients']) >= {'d11', 'd22', 'd33', 'd44'}
    assert (out / "simulation_log.txt").exists()

def test_validate_single_check(tmp_path):
    assert cli.main(['validate', '--check', 'prelog_factors', '--out', str(tmp_path)]) == 0
    assert (tmp_path / "validation.csv").exists()

def test_validate_unknown_check(tmp_path):
    assert cli.main(['validate', '--check', 'nope', '--out', str(tmp_path)]) == 1

def test_unknown_experiment_kind(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(['experiment', 'not_a_kind', '--out', str(tmp_path)])
    assert info.value.code == 2

def test_missing_config_file(tmp_path):
    assert cli.main(['validate', '--config', str(tmp_path / "absent.json"), '--out', str(tmp_path)]) == 1

def test_grid_step_override():
    parser = cli.build_parser()
    args = parser.parse_args(['export-map', '--grid-step', '0.5'])
    config = cli._apply_overrides(SimulationConfig(), args, desk=True)
    assert config.estimator.search_steps == [10.0, 1.0, 0.5]
    assert config.scenario.num_aps == 8
