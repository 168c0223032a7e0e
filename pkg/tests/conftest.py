"""
Shared fixtures: desk-sized configurations and scenes
"""
import pytest

from src.core.scenario import OtfsGrid, generate_scenario
from src.utils.config import ScenarioConfig, SimulationConfig

@pytest.fixture
def desk_config():
    return SimulationConfig(scenario=ScenarioConfig.desk())

@pytest.fixture
def desk_scenario(desk_config):
    return generate_scenario(desk_config.scenario, 7)

@pytest.fixture
def generous_config(desk_config):
    """Desk setup with a PEB budget every closest-AP split can meet"""
    sensing = desk_config.sensing.model_copy(update={'peb_threshold_m': 10.0})
    return desk_config.model_copy(update={'sensing': sensing})

@pytest.fixture
def unit_grid():
    """Grid factory with delta_f = T = 1"""
    def make(M, N, n_cp=0):
        return OtfsGrid(M=M, N=N, delta_f=1.0, T=1.0, N_cp=n_cp, carrier_freq=1.0)
    return make
