"""
Campaign persistence
"""
import pytest

from src.core.experiments import TrialResult
from src.database.manager import DatabaseManager

@pytest.fixture
def db(tmp_path):
    manager = DatabaseManager(str(tmp_path / "campaigns.db"))
    yield manager
    manager.close()

def test_campaign_lifecycle(db):
    campaign_id = db.start_campaign("peb_vs_aoa", "abc123", trial_count=2)
    assert db.get_campaign(campaign_id).status == 'running'
    db.end_campaign(campaign_id, status='error', error_msg="boom")
    campaign = db.get_campaign(campaign_id)
    assert campaign.status == 'error'
    assert campaign.error_message == "boom"
    assert campaign.duration_seconds is not None

def test_full_width_seed_round_trips(db):
    """Seeds are unsigned 64-bit and stored as text"""
    campaign_id = db.start_campaign("peb_vs_aoa", "abc123")
    seed = 2 ** 64 - 1
    db.save_trials(campaign_id, 'aoa_deg', [TrialResult(0, 30.0, 0, seed, metrics={'exact_peb': 0.5})])
    stored = db.get_campaign_trials(campaign_id)[0]
    assert int(stored.seed) == seed
    assert stored.exact_peb == 0.5

def test_non_finite_metrics_stored_as_null(db):
    campaign_id = db.start_campaign("rmse_vs_rcs", "abc123")
    results = [
        TrialResult(0, -10.0, 0, 1, metrics={'rmse': float('nan'), 'exact_peb': float('inf')}),
        TrialResult(0, -10.0, 1, 2, status="failed", error="EstimationFailure: none", metrics={'rmse': 0.2}),
    ]
    assert db.save_trials(campaign_id, 'rcs_variance_dbsm', results) == 2
    first, second = db.get_campaign_trials(campaign_id)
    assert first.rmse is None and first.exact_peb is None
    assert second.error_message.startswith("EstimationFailure")

def test_campaign_stats(db):
    campaign_id = db.start_campaign("se_vs_peb_budget", "abc123")
    results = [
        TrialResult(0, 0.1, 0, 1, metrics={'se_jap': 2.0}),
        TrialResult(0, 0.1, 1, 2, status="infeasible", metrics={'se_jap': 4.0}),
    ]
    db.save_trials(campaign_id, 'peb_threshold_m', results)
    stats = db.get_campaign_stats(campaign_id)
    assert stats['total_trials'] == 2
    assert stats['flagged_trials'] == 1
    assert stats['avg_min_se'] == pytest.approx(3.0)
    assert stats['avg_rmse'] is None

def test_empty_campaign_has_no_stats(db):
    campaign_id = db.start_campaign("peb_vs_aoa", "abc123")
    assert db.get_campaign_stats(campaign_id) == {}
