"""
Configuration management for the cell-free ISAC simulator
"""

import json
import os
from typing import List, Optional

from appdirs import user_config_dir
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.exceptions import ConfigurationError
from src.utils.constants import (
    APP_NAME, CHANNEL_SETTINGS, DESK_DEFAULTS, NUMERICS, OUTPUT_DIR_ENV,
    SEARCH_STEPS, SOLVER_SETTINGS, REFERENCE_DEFAULTS, BoundMode, CrlbForm,
    ObjectiveMode, Placement, Waveform,
)
from src.utils.units import db_to_linear, dbm_to_watt, dbsm_to_m2, kmh_to_ms

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

class GridConfig(_Section):
    """Delay-Doppler resource grid"""
    subcarriers: int = Field(REFERENCE_DEFAULTS['subcarriers'], ge=1)  # M
    symbols: int = Field(REFERENCE_DEFAULTS['symbols'], ge=1)          # N
    bandwidth_hz: float = Field(REFERENCE_DEFAULTS['bandwidth_hz'], gt=0)
    carrier_freq_hz: float = Field(REFERENCE_DEFAULTS['carrier_freq_hz'], gt=0)
    waveform: Waveform = Waveform.OTFS
    cp_samples: Optional[int] = Field(None, ge=0)  # OFDM cyclic prefix; derived from the box if unset

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth_hz / self.subcarriers

class ScenarioConfig(_Section):
    """Scene geometry, channel statistics and power limits"""
    grid: GridConfig = Field(default_factory=GridConfig)

    size_m: float = Field(REFERENCE_DEFAULTS['size_m'], gt=0)
    num_aps: int = Field(REFERENCE_DEFAULTS['num_aps'], ge=1)
    antennas: int = Field(REFERENCE_DEFAULTS['antennas'], ge=1)
    max_power_w: float = Field(REFERENCE_DEFAULTS['max_power_w'], gt=0)
    placement: Placement = Placement.UNIFORM

    num_users: int = Field(REFERENCE_DEFAULTS['num_users'], ge=0)
    num_targets: int = Field(REFERENCE_DEFAULTS['num_targets'], ge=0)
    max_speed_kmh: float = Field(REFERENCE_DEFAULTS['max_speed_kmh'], ge=0)
    static_targets: bool = False
    hotspot_size_m: float = Field(CHANNEL_SETTINGS['hotspot_size_m'], gt=0)
    multistatic: bool = True

    # Communication channel
    user_paths: int = Field(REFERENCE_DEFAULTS['user_paths'], ge=1)
    angular_std_deg: float = Field(REFERENCE_DEFAULTS['angular_std_deg'], ge=0)
    comm_delay_spread_s: float = Field(CHANNEL_SETTINGS['comm_delay_spread_s'], ge=0)
    pathloss_intercept_db: float = CHANNEL_SETTINGS['pathloss_intercept_db']
    pathloss_slope_db: float = CHANNEL_SETTINGS['pathloss_slope_db']
    shadowing_std_db: float = Field(0.0, ge=0)
    pilot_snr_db: float = CHANNEL_SETTINGS['pilot_snr_db']
    exact_local_scattering: bool = False

    # Sensing channel
    noise_power_dbm: float = REFERENCE_DEFAULTS['noise_power_dbm']
    rcs_variance_dbsm: float = REFERENCE_DEFAULTS['rcs_variance_dbsm']
    aod_error_deg: float = Field(0.0, ge=0)

    @field_validator('placement', mode='before')
    @classmethod
    def _lower_placement(cls, value):
        return value.lower() if isinstance(value, str) else value

    @property
    def noise_power_w(self) -> float:
        return float(dbm_to_watt(self.noise_power_dbm))

    @property
    def rcs_variance_m2(self) -> float:
        return float(dbsm_to_m2(self.rcs_variance_dbsm))

    @property
    def max_speed_ms(self) -> float:
        return float(kmh_to_ms(self.max_speed_kmh))

    @property
    def pilot_snr(self) -> float:
        return float(db_to_linear(self.pilot_snr_db))

    @classmethod
    def reference(cls, **overrides) -> "ScenarioConfig":
        """Full-size reference scene"""
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "ScenarioConfig":
        """Scene small enough for dense matrices and the echo path"""
        grid = GridConfig(
            subcarriers=DESK_DEFAULTS['subcarriers'],
            symbols=DESK_DEFAULTS['symbols'],
            bandwidth_hz=DESK_DEFAULTS['bandwidth_hz'],
        )
        values = {
            'grid': grid,
            'size_m': DESK_DEFAULTS['size_m'],
            'num_aps': DESK_DEFAULTS['num_aps'],
            'antennas': DESK_DEFAULTS['antennas'],
            'num_users': DESK_DEFAULTS['num_users'],
            'num_targets': DESK_DEFAULTS['num_targets'],
        }
        values.update(overrides)
        return cls(**values)

class SensingConfig(_Section):
    peb_threshold_m: float = Field(REFERENCE_DEFAULTS['peb_threshold_m'], gt=0)
    bound_mode: BoundMode = BoundMode.APPROX

    @property
    def crlb_budget(self) -> float:
        """gamma_s in m^2"""
        return self.peb_threshold_m ** 2

class SolverConfig(_Section):
    penalty: float = Field(SOLVER_SETTINGS['penalty'], gt=0)
    initial_mode: float = Field(SOLVER_SETTINGS['initial_mode'], gt=0, lt=1)
    sca_tolerance: float = Field(SOLVER_SETTINGS['sca_tolerance'], gt=0)
    sca_max_iterations: int = Field(SOLVER_SETTINGS['sca_max_iterations'], ge=1)
    qt_tolerance: float = Field(SOLVER_SETTINGS['qt_tolerance'], gt=0)
    qt_max_iterations: int = Field(SOLVER_SETTINGS['qt_max_iterations'], ge=1)
    cap_tolerance: float = Field(SOLVER_SETTINGS['cap_tolerance'], gt=0)
    crlb_form: CrlbForm = CrlbForm.SMOOTH
    feasibility_margin: float = Field(SOLVER_SETTINGS['feasibility_margin'], ge=0)
    feasibility_tolerance: float = Field(SOLVER_SETTINGS['feasibility_tolerance'], gt=0)
    kkt_tolerance: float = Field(SOLVER_SETTINGS['kkt_tolerance'], gt=0)
    rounding_threshold: float = Field(SOLVER_SETTINGS['rounding_threshold'], gt=0, lt=1)
    keep_incumbent: bool = True  # joint solver falls back to the closest-AP split when that is better

class EstimatorConfig(_Section):
    search_steps: List[float] = Field(default_factory=lambda: list(SEARCH_STEPS))
    objective: ObjectiveMode = ObjectiveMode.SIMPLIFIED
    exclusion_factor: float = Field(2.0, ge=0)
    regularization: float = Field(NUMERICS['regularization'], gt=0)

    @field_validator('search_steps')
    @classmethod
    def _check_steps(cls, steps):
        if not steps or any(s <= 0 for s in steps):
            raise ValueError("search steps must be positive")
        if any(b > a for a, b in zip(steps, steps[1:])):
            raise ValueError("search steps must be non-increasing")
        return steps

class HarnessConfig(_Section):
    output_dir: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)
    trials: int = Field(20, ge=1)
    base_seed: int = 0
    record_to_database: bool = True
    database_path: Optional[str] = None

class SimulationConfig(_Section):
    """Root of the JSON configuration document"""
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    sensing: SensingConfig = Field(default_factory=SensingConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    harness: HarnessConfig = Field(default_factory=HarnessConfig)

    def resolve_output_dir(self, override: Optional[str] = None) -> str:
        """--out beats the environment, which beats the config file"""
        if override:
            return override
        env_dir = os.environ.get(OUTPUT_DIR_ENV)
        if env_dir:
            return env_dir
        if self.harness.output_dir:
            return self.harness.output_dir
        return os.path.join(os.getcwd(), "results")

class ConfigManager:
    """Loads and saves the simulator configuration"""

    def __init__(self, config_file: Optional[str] = None):
        self.explicit = config_file is not None
        self.config_dir = user_config_dir(APP_NAME, APP_NAME)
        self.config_file = config_file or os.path.join(self.config_dir, "config.json")
        self.config = self.load_config()

    def load_config(self) -> SimulationConfig:
        """Load configuration from file or create default"""
        if not os.path.exists(self.config_file):
            if self.explicit:
                raise ConfigurationError(f"Config file not found: {self.config_file}")
            return SimulationConfig()

        try:
            with open(self.config_file, 'r') as f:
                data = json.load(f)
            return SimulationConfig.model_validate(data)
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            if self.explicit:
                raise ConfigurationError(f"Invalid config {self.config_file}: {e}") from e
            logger.warning(f"Error loading config: {e}. Using defaults.")
            return SimulationConfig()

    def save_config(self):
        """Save configuration to file"""
        os.makedirs(os.path.dirname(os.path.abspath(self.config_file)), exist_ok=True)
        try:
            with open(self.config_file, 'w') as f:
                f.write(self.config.model_dump_json(indent=2))
        except OSError as e:
            logger.error(f"Error saving config: {e}")

def load_config_file(path: Optional[str]) -> SimulationConfig:
    """Configuration for this process, from an explicit file if given"""
    return ConfigManager(path).config
