"""
Database models for campaign results
"""

import os
from datetime import datetime
from typing import Optional

from appdirs import user_data_dir
from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, relationship, scoped_session, sessionmaker

from src.utils.constants import APP_NAME, DB_NAME

Base = declarative_base()

# Global scoped session factory - thread-safe
SessionFactory = None

class Campaign(Base):
    """One run of an experiment kind"""
    __tablename__ = 'campaigns'

    id = Column(Integer, primary_key=True)
    kind = Column(String, nullable=False)
    spec_digest = Column(String, nullable=False)
    start_time = Column(DateTime, default=datetime.utcnow)
    end_time = Column(DateTime, nullable=True)
    trial_count = Column(Integer, default=0)
    status = Column(String, default='running')  # 'running', 'completed', 'error'
    error_message = Column(String, nullable=True)

    trials = relationship("TrialRecord", back_populates="campaign", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<Campaign(id={self.id}, kind='{self.kind}', status='{self.status}')>"

    @property
    def duration_seconds(self) -> Optional[float]:
        if self.end_time:
            return (self.end_time - self.start_time).total_seconds()
        return None

class TrialRecord(Base):
    """A single Monte Carlo trial"""
    __tablename__ = 'trials'

    id = Column(Integer, primary_key=True)
    campaign_id = Column(Integer, ForeignKey('campaigns.id'), nullable=False)
    campaign = relationship("Campaign", back_populates="trials")

    sweep_variable = Column(String, nullable=False)
    sweep_index = Column(Integer, nullable=False)
    sweep_value = Column(Float, nullable=False)
    trial_index = Column(Integer, nullable=False)
    seed = Column(String, nullable=False)  # 64-bit unsigned, beyond SQLite INTEGER

    rmse = Column(Float, nullable=True)
    exact_peb = Column(Float, nullable=True)
    approx_peb = Column(Float, nullable=True)
    min_se = Column(Float, nullable=True)

    status = Column(String, default='ok')
    error_message = Column(String, nullable=True)

    def __repr__(self):
        return f"<TrialRecord(campaign={self.campaign_id}, point={self.sweep_index}, trial={self.trial_index})>"

# Database initialization
def get_db_path(path: Optional[str] = None) -> str:
    """Configured path, else the per-user data directory"""
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        return path
    app_dir = user_data_dir(APP_NAME, APP_NAME)
    os.makedirs(app_dir, exist_ok=True)
    return os.path.join(app_dir, DB_NAME)

def init_database(path: Optional[str] = None):
    """Initialize the database and create tables"""
    global SessionFactory
    engine = create_engine(f'sqlite:///{get_db_path(path)}')
    Base.metadata.create_all(engine)

    # Initialize thread-safe scoped session
    SessionFactory = scoped_session(sessionmaker(bind=engine, expire_on_commit=False))

    return engine

def get_session():
    """Get a thread-safe database session"""
    if SessionFactory is None:
        raise RuntimeError("Database not initialized. Call init_database() first.")
    return SessionFactory()
