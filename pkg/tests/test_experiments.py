"""
Campaign harness: trials, seeding, outputs and worker pool
"""
import json
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from src.core import experiments
from src.core.exceptions import ConfigurationError, InfeasibleProblemError, SingularInformationError
from src.core.experiments import (
    SWEEPS, ExperimentSpec, TrialResult, cellular_scenario, json_safe, results_frame, run_experiment, run_trial,
    summarize, trial_seed,
)
from src.core.campaign_worker import CampaignWorker
from src.core.scenario import derive_seed, generate_scenario
from src.database.manager import DatabaseManager
from src.utils.config import HarnessConfig, ScenarioConfig, SimulationConfig
from src.utils.constants import CELLULAR_BASELINE, ExperimentKind

@pytest.fixture
def desk_campaign_config(tmp_path):
    harness = HarnessConfig(record_to_database=False, database_path=str(tmp_path / "campaigns.db"))
    return SimulationConfig(scenario=ScenarioConfig.desk(), harness=harness)

def test_trial_seed_matches_scene_seed():
    assert trial_seed(3, 1, 4) == derive_seed(3, 1, 4)
    assert trial_seed(3, 1, 4) != trial_seed(3, 4, 1)

def test_aoa_trial(desk_campaign_config):
    """The AoA gradient vanishes with the target on the receive array axis"""
    broadside = run_trial(ExperimentKind.PEB_VS_AOA, desk_campaign_config, 0, 90.0, 0, 0)
    assert broadside.status == "ok"
    assert broadside.metrics['aoa_gradient'] > 0
    assert math.isfinite(broadside.metrics['exact_peb'])
    on_axis = run_trial(ExperimentKind.PEB_VS_AOA, desk_campaign_config, 1, 0.0, 0, 0)
    assert on_axis.metrics['aoa_gradient'] == 0.0

def test_waveform_gap_trial(desk_campaign_config):
    result = run_trial(ExperimentKind.WAVEFORM_GAP, desk_campaign_config, 0, 16, 0, 0)
    assert result.status == "ok"
    assert result.metrics['prelog_otfs'] == pytest.approx(256 / 272)
    assert result.metrics['prelog_ofdm'] == pytest.approx(0.5)
    assert result.metrics['prelog_ratio'] > 1

def test_mobility_trial_reports_each_frame(desk_campaign_config):
    result = run_trial(ExperimentKind.MOBILITY_SWEEP, desk_campaign_config, 0, 300.0, 0, 0)
    assert result.status in ("ok", "infeasible")
    assert set(SWEEPS[ExperimentKind.MOBILITY_SWEEP].columns) <= set(result.metrics)
    for frame in ("full", "half_m", "half_n"):
        assert 0 < result.metrics[f"peb_{frame}"] < math.inf
        se = result.metrics[f"se_{frame}"]
        assert math.isnan(se) or se >= 0

def test_cellular_site_holds_every_antenna():
    config = ScenarioConfig.desk()
    scenario = generate_scenario(config, 4)
    cellular = cellular_scenario(scenario, config, 4)
    assert cellular.num_aps == 2
    assert np.allclose(cellular.aps[0].position, [config.size_m / 2, config.size_m / 2])
    assert np.allclose(cellular.aps[0].position, cellular.aps[1].position)
    assert np.allclose(cellular.aps[0].array_direction, cellular.aps[1].array_direction)
    assert cellular.antennas == config.num_aps * config.antennas
    assert cellular.max_power == CELLULAR_BASELINE["max_power_w"]
    assert cellular.targets == scenario.targets
    assert cellular.users == scenario.users
    assert cellular.grid is scenario.grid

def test_cellular_baseline_trial(desk_campaign_config):
    result = run_trial(ExperimentKind.CELLULAR_BASELINE, desk_campaign_config, 0, 0.5, 0, 0)
    assert result.status in ("ok", "infeasible")
    assert set(result.metrics) == {"se_jap", "se_cap", "se_cellular"}
    assert all(math.isnan(v) or v >= 0 for v in result.metrics.values())

def test_se_vs_rcs_trial(desk_campaign_config):
    result = run_trial(ExperimentKind.SE_VS_RCS, desk_campaign_config, 0, 0.0, 0, 0)
    assert result.status in ("ok", "infeasible")
    assert set(result.metrics) == {"se_otfs", "se_ofdm", "se_ratio"}
    if result.metrics["se_ofdm"] > 0:
        assert result.metrics["se_ratio"] == pytest.approx(result.metrics["se_otfs"] / result.metrics["se_ofdm"])

def test_trial_errors_are_flagged(monkeypatch, desk_campaign_config):
    def infeasible(config, value, seed, result):
        raise InfeasibleProblemError("budget", certificate=1.0)

    def singular(config, value, seed, result):
        raise SingularInformationError("rank deficient")

    monkeypatch.setitem(experiments.TRIALS, ExperimentKind.CONVERGENCE, infeasible)
    monkeypatch.setitem(experiments.TRIALS, ExperimentKind.MOBILITY_SWEEP, singular)
    assert run_trial(ExperimentKind.CONVERGENCE, desk_campaign_config, 0, 1.0, 0, 0).status == "infeasible"
    result = run_trial(ExperimentKind.MOBILITY_SWEEP, desk_campaign_config, 0, 1.0, 0, 0)
    assert result.status == "singular"
    assert "rank deficient" in result.error

def test_configuration_errors_propagate(monkeypatch, desk_campaign_config):
    def broken(config, value, seed, result):
        raise ConfigurationError("bad setup")

    monkeypatch.setitem(experiments.TRIALS, ExperimentKind.CONVERGENCE, broken)
    with pytest.raises(ConfigurationError):
        run_trial(ExperimentKind.CONVERGENCE, desk_campaign_config, 0, 1.0, 0, 0)

def test_spec_validation():
    with pytest.raises(ValidationError):
        ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[])
    with pytest.raises(ValidationError):
        ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, unknown=1)
    spec = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA)
    assert spec.sweep_values == list(experiments.SWEEPS[ExperimentKind.PEB_VS_AOA].values)

def test_digest_ignores_where_and_how():
    a = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[30.0], output_dir="a", workers=1)
    b = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[30.0], output_dir="b", workers=4)
    c = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[45.0])
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()

def test_results_frame_and_summary():
    spec = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[30.0, 60.0])
    results = [
        TrialResult(0, 30.0, 0, 11, metrics={'exact_peb': 1.0, 'aoa_gradient': 0.1, 'divergent': 0.0}),
        TrialResult(0, 30.0, 1, 12, metrics={'exact_peb': 3.0, 'aoa_gradient': 0.1, 'divergent': 0.0}),
        TrialResult(1, 60.0, 0, 13, status="singular", metrics={'exact_peb': float('inf')}),
    ]
    frame = results_frame(spec, results)
    assert 'aoa_deg' in frame.columns
    assert math.isnan(frame.loc[2, 'aoa_gradient'])
    summary = summarize(spec, frame)
    first, second = summary['points']
    assert first['metrics']['exact_peb'] == {'mean': 2.0, 'std': 1.0, 'count': 2}
    assert second['flagged'] == 1
    assert second['metrics']['exact_peb']['count'] == 0

def test_json_safe():
    value = {'a': float('nan'), 'b': [float('inf'), -float('inf')], 'c': np.int64(3), 'd': np.array([1.0, 2.0])}
    assert json_safe(value) == {'a': None, 'b': ['inf', '-inf'], 'c': 3, 'd': [1.0, 2.0]}
    json.dumps(json_safe(value), allow_nan=False)

def test_run_experiment_writes_outputs(tmp_path, desk_campaign_config):
    spec = ExperimentSpec(
        kind=ExperimentKind.PEB_VS_AOA, values=[30.0, 90.0], trials=2, workers=1, config=desk_campaign_config,
    )
    frame = run_experiment(spec, str(tmp_path), record=False)
    assert len(frame) == 4
    assert list(frame['trial']) == [0, 1, 0, 1]
    for name in ("peb_vs_aoa.csv", "peb_vs_aoa_summary.json", "report.md"):
        assert (tmp_path / name).exists()
    stored = pd.read_csv(tmp_path / "peb_vs_aoa.csv")
    assert list(stored['aoa_deg']) == [30.0, 30.0, 90.0, 90.0]
    summary = json.loads((tmp_path / "peb_vs_aoa_summary.json").read_text())
    assert summary['digest'] == spec.digest()

def test_run_experiment_records_campaign(tmp_path, desk_campaign_config):
    spec = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA, values=[45.0], trials=1, workers=1,
                          config=desk_campaign_config)
    run_experiment(spec, str(tmp_path / "out"), record=True)
    db = DatabaseManager(desk_campaign_config.harness.database_path)
    try:
        trials = db.get_campaign_trials(1)
        assert len(trials) == 1
        assert trials[0].seed == str(trial_seed(0, 0, 0))
        assert db.get_campaign(1).status == 'completed'
    finally:
        db.close()

def test_pool_size_does_not_change_results(desk_campaign_config):
    values = [30.0, 90.0]
    serial = CampaignWorker(1).run(ExperimentKind.PEB_VS_AOA, desk_campaign_config, values, 2, 5)
    pooled = CampaignWorker(2).run(ExperimentKind.PEB_VS_AOA, desk_campaign_config, values, 2, 5)
    assert [(r.sweep_index, r.trial_index, r.seed) for r in serial] == \
        [(r.sweep_index, r.trial_index, r.seed) for r in pooled]
    for a, b in zip(serial, pooled):
        assert a.metrics == b.metrics
