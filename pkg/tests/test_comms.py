"""
Downlink SINR, spectral efficiency and per-AP power
"""
import math

import numpy as np
import pytest

from src.core.allocation import ResourceAllocation, empty_allocation, modes_from_receivers
from src.core.comms import (
    ap_power, comm_coefficients, equal_power_allocation, min_spectral_efficiency, prelog_factor,
    sinr_all, sinr_comm, sinr_with_modes, spectral_efficiency, stream_split_allocation,
)
from src.core.scenario import generate_scenario
from src.core.validation import check_prelog
from src.utils.config import ScenarioConfig
from src.utils.constants import Waveform

def test_prelog_factors(unit_grid):
    """One CP per OTFS frame against one CP per OFDM symbol"""
    grid = unit_grid(128, 128, n_cp=128)
    assert prelog_factor(grid, Waveform.OTFS) == pytest.approx(16384 / 16512)
    assert prelog_factor(grid, Waveform.OFDM) == 0.5
    assert check_prelog().passed

def test_spectral_efficiency(unit_grid):
    grid = unit_grid(4, 4, n_cp=0)
    assert spectral_efficiency(3.0, grid) == pytest.approx(2.0)
    values = spectral_efficiency(np.array([0.0, 1.0]), grid)
    np.testing.assert_allclose(values, [0.0, 1.0])
    with pytest.raises(ValueError):
        spectral_efficiency(-0.1, grid)

def test_coefficient_shapes(desk_scenario):
    coeffs = comm_coefficients(desk_scenario)
    n_ap, n_u, n_t = desk_scenario.num_aps, desk_scenario.num_users, desk_scenario.num_targets
    assert coeffs.b_comm.shape == (n_ap, n_u)
    assert coeffs.c_comm.shape == (n_ap, n_u, n_u)
    assert coeffs.c_sense.shape == (n_ap, n_u, n_t)
    # unit-norm sensing beams
    np.testing.assert_allclose(coeffs.b_sense, 1.0)
    assert np.all(coeffs.b_comm > 0)

def test_equal_power_spends_full_budget(desk_scenario):
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [0])
    allocation = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    assert ap_power(coeffs, allocation, 0) == 0.0
    for p in allocation.transmitters:
        assert ap_power(coeffs, allocation, p) == pytest.approx(desk_scenario.max_power)

def test_stream_split_spends_full_budget(desk_scenario):
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [2, 5])
    allocation = stream_split_allocation(coeffs, modes, desk_scenario.max_power)
    for p in allocation.transmitters:
        assert ap_power(coeffs, allocation, p) == pytest.approx(desk_scenario.max_power)
    assert ap_power(coeffs, allocation, 2) == 0.0

def test_receivers_do_not_serve_users(desk_scenario):
    """Power left on a receiving AP is ignored by the SINR"""
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [0])
    base = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    comm = base.comm_powers.copy()
    comm[0] = 1.0
    polluted = ResourceAllocation.from_blocks(modes, comm, base.sensing_powers)
    np.testing.assert_allclose(sinr_all(coeffs, polluted), sinr_all(coeffs, base))

def test_binary_modes_match_fractional_formula(desk_scenario):
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [1, 3])
    allocation = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    fractional = sinr_with_modes(coeffs, modes, allocation.comm_powers, allocation.sensing_powers)
    np.testing.assert_allclose(fractional, sinr_all(coeffs, allocation), rtol=1e-10)

def test_sinr_zero_without_power(desk_scenario):
    coeffs = comm_coefficients(desk_scenario)
    allocation = empty_allocation(np.ones(desk_scenario.num_aps), desk_scenario.num_users,
                                  desk_scenario.num_targets)
    assert sinr_comm(coeffs, allocation, 0) == 0.0

def test_sensing_power_interferes(desk_scenario):
    """More sensing power never raises a user's SINR"""
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [0])
    base = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    louder = ResourceAllocation.from_blocks(modes, base.comm_powers, 10.0 * base.sensing_powers)
    assert np.all(sinr_all(coeffs, louder) <= sinr_all(coeffs, base) + 1e-15)

def test_min_se_without_users():
    scenario = generate_scenario(ScenarioConfig.desk(num_users=0), 0)
    coeffs = comm_coefficients(scenario)
    allocation = empty_allocation(modes_from_receivers(scenario.num_aps, [0]), 0, scenario.num_targets)
    assert math.isnan(min_spectral_efficiency(coeffs, allocation, scenario.grid))
