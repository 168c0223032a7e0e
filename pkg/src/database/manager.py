"""
Database operations manager - Thread-safe version
"""

import math
from datetime import datetime
from typing import Dict, List, Optional, Sequence

from sqlalchemy import func

from src.database.models import Campaign, TrialRecord, get_session, init_database

def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None

class DatabaseManager:
    """Manages all database operations - Thread-safe"""

    def __init__(self, path: Optional[str] = None):
        self.engine = init_database(path)

    def close(self):
        """Close database connection"""
        self.engine.dispose()

    def _get_session(self):
        """Get a new session for current thread"""
        return get_session()

    def start_campaign(self, kind: str, spec_digest: str, trial_count: int = 0) -> int:
        """Start a new campaign, returns its ID"""
        session = self._get_session()
        try:
            campaign = Campaign(kind=kind, spec_digest=spec_digest, trial_count=trial_count, status='running')
            session.add(campaign)
            session.commit()
            return campaign.id
        finally:
            session.close()

    def end_campaign(self, campaign_id: int, status: str = 'completed', error_msg: str = None):
        session = self._get_session()
        try:
            campaign = session.get(Campaign, campaign_id)
            if campaign:
                campaign.end_time = datetime.utcnow()
                campaign.status = status
                if error_msg:
                    campaign.error_message = error_msg
                session.commit()
        finally:
            session.close()

    def save_trials(self, campaign_id: int, sweep_variable: str, results: Sequence) -> int:
        """Store TrialResult rows; non-finite metrics are stored as NULL"""
        session = self._get_session()
        try:
            for result in results:
                metrics = result.metrics
                min_se = metrics.get('min_se', metrics.get('se_jap', metrics.get('se_full', metrics.get('se_otfs'))))
                exact = metrics.get('exact_peb', metrics.get('peb_full'))
                session.add(TrialRecord(
                    campaign_id=campaign_id,
                    sweep_variable=sweep_variable,
                    sweep_index=result.sweep_index,
                    sweep_value=float(result.sweep_value),
                    trial_index=result.trial_index,
                    seed=str(result.seed),
                    rmse=_finite_or_none(metrics.get('rmse')),
                    exact_peb=_finite_or_none(exact),
                    approx_peb=_finite_or_none(metrics.get('approx_peb')),
                    min_se=_finite_or_none(min_se),
                    status=result.status,
                    error_message=result.error or None,
                ))
            session.commit()
            return len(results)
        finally:
            session.close()

    def get_campaign(self, campaign_id: int) -> Optional[Campaign]:
        session = self._get_session()
        try:
            return session.get(Campaign, campaign_id)
        finally:
            session.close()

    def get_campaign_trials(self, campaign_id: int) -> List[TrialRecord]:
        session = self._get_session()
        try:
            return session.query(TrialRecord)\
                .filter(TrialRecord.campaign_id == campaign_id)\
                .order_by(TrialRecord.sweep_index, TrialRecord.trial_index)\
                .all()
        finally:
            session.close()

    def get_campaign_stats(self, campaign_id: int) -> Dict:
        session = self._get_session()
        try:
            base = session.query(TrialRecord).filter(TrialRecord.campaign_id == campaign_id)
            total = base.count()
            if total == 0:
                return {}
            flagged = base.filter(TrialRecord.status != 'ok').count()
            averages = session.query(
                func.avg(TrialRecord.rmse),
                func.avg(TrialRecord.exact_peb),
                func.avg(TrialRecord.approx_peb),
                func.avg(TrialRecord.min_se),
            ).filter(TrialRecord.campaign_id == campaign_id).one()
            return {
                'total_trials': total,
                'flagged_trials': flagged,
                'avg_rmse': averages[0],
                'avg_exact_peb': averages[1],
                'avg_approx_peb': averages[2],
                'avg_min_se': averages[3],
            }
        finally:
            session.close()
