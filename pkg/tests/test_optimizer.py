"""
Power allocation and AP mode selection
"""
import numpy as np
import pytest

from src.core.allocation import ResourceAllocation, modes_from_receivers
from src.core.comms import ap_power, comm_coefficients, equal_power_allocation, sinr_all
from src.core.exceptions import ConfigurationError, InfeasibleProblemError
from src.core.fisher import position_fim
from src.core.optimizer import (
    build_problem_data, closest_ap_selection, crlb_floor, feasibility_audit, fisher_with_modes,
    power_allocation_fixed_modes, random_ap_selection, run_scheme,
)
from src.utils.constants import BoundMode, CrlbForm, Scheme

@pytest.fixture
def problem_data(desk_scenario, generous_config):
    return build_problem_data(desk_scenario, generous_config)

def _with_budget(config, peb_threshold_m, form=CrlbForm.SMOOTH):
    sensing = config.sensing.model_copy(update={'peb_threshold_m': peb_threshold_m})
    solver = config.solver.model_copy(update={'crlb_form': form})
    return config.model_copy(update={'sensing': sensing, 'solver': solver})

def test_fisher_with_binary_modes_is_approx_fim(desk_scenario, problem_data):
    """The relaxed FIM with 0/1 modes is the approximate position FIM"""
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [0, 3])
    allocation = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    relaxed = fisher_with_modes(problem_data.blocks, modes, allocation.sensing_powers, 0)
    report = position_fim(desk_scenario, allocation, BoundMode.APPROX)[0]
    np.testing.assert_allclose(0.5 * (relaxed + relaxed.T), report.fim, rtol=1e-9)

def test_scaled_powers_round_trip(desk_scenario, problem_data):
    rng = np.random.default_rng(0)
    comm = rng.uniform(0, 1e-2, (desk_scenario.num_aps, desk_scenario.num_users))
    sensing = rng.uniform(0, 1e-2, (desk_scenario.num_aps, desk_scenario.num_targets))
    back_comm, back_sensing = problem_data.to_powers(*problem_data.from_powers(comm, sensing))
    np.testing.assert_allclose(back_comm, comm, rtol=1e-12)
    np.testing.assert_allclose(back_sensing, sensing, rtol=1e-12)

def test_scaled_sinr_matches_physical(desk_scenario, problem_data):
    coeffs = comm_coefficients(desk_scenario)
    modes = modes_from_receivers(desk_scenario.num_aps, [2])
    allocation = equal_power_allocation(coeffs, modes, desk_scenario.max_power)
    x_comm, x_sense = problem_data.from_powers(allocation.comm_powers, allocation.sensing_powers)
    np.testing.assert_allclose(problem_data.sinr(modes, x_comm, x_sense), sinr_all(coeffs, allocation), rtol=1e-9)

def test_random_ap_selection():
    transmitters, receivers = random_ap_selection(8, 3, np.random.default_rng(5))
    assert len(receivers) == 3
    assert sorted(transmitters + receivers) == list(range(8))
    again = random_ap_selection(8, 3, np.random.default_rng(5))
    assert again == (transmitters, receivers)
    for bad in (0, 8):
        with pytest.raises(ConfigurationError):
            random_ap_selection(8, bad, np.random.default_rng(5))

def test_fixed_mode_allocation_meets_budget(desk_scenario, generous_config, problem_data):
    modes = modes_from_receivers(desk_scenario.num_aps, [0])
    allocation = power_allocation_fixed_modes(desk_scenario, modes, generous_config, problem_data)
    assert allocation.feasible
    assert 1 <= allocation.iterations <= generous_config.solver.qt_max_iterations
    z = [step['z'] for step in allocation.trace]
    assert all(b >= a - 1e-6 * max(1.0, abs(a)) for a, b in zip(z, z[1:]))
    audit = feasibility_audit(desk_scenario, allocation, generous_config)
    assert audit['feasible'], audit
    # receivers carry no power
    coeffs = comm_coefficients(desk_scenario)
    assert ap_power(coeffs, allocation, 0) == 0.0
    assert allocation.min_sinr > 0

@pytest.mark.parametrize("form", [CrlbForm.SMOOTH, CrlbForm.SCHUR])
@pytest.mark.parametrize("peb_threshold_m", [1e-9, 1e-6, 1e-4])
def test_unreachable_budget_is_infeasible(desk_scenario, desk_config, peb_threshold_m, form):
    config = _with_budget(desk_config, peb_threshold_m, form)
    modes = modes_from_receivers(desk_scenario.num_aps, [0])
    with pytest.raises(InfeasibleProblemError) as info:
        power_allocation_fixed_modes(desk_scenario, modes, config)
    assert info.value.certificate > peb_threshold_m ** 2

def test_crlb_floor_is_budget_and_form_independent(desk_scenario, desk_config):
    """The smallest reachable CRLB in m^2 is one number per mode split"""
    transmitters, receivers = list(range(1, desk_scenario.num_aps)), [0]
    floors = []
    for peb_threshold_m in (1e-3, 10.0):
        for form in (CrlbForm.SMOOTH, CrlbForm.SCHUR):
            config = _with_budget(desk_config, peb_threshold_m, form)
            data = build_problem_data(desk_scenario, config)
            floor, x_sense = crlb_floor(data, transmitters, receivers, config)
            floors.append(floor * data.crlb_budget)
            assert np.all(x_sense.sum(axis=1) <= 1.0 + 1e-9)
            assert np.all(x_sense[receivers] == 0.0)
    assert np.isfinite(floors[0]) and floors[0] > 0
    np.testing.assert_allclose(floors, floors[0], rtol=1e-3)

def test_fixed_modes_need_both_roles(desk_scenario, generous_config, problem_data):
    with pytest.raises(ConfigurationError):
        power_allocation_fixed_modes(desk_scenario, np.ones(desk_scenario.num_aps), generous_config, problem_data)

def test_closest_ap_selection(desk_scenario, generous_config, problem_data):
    split = closest_ap_selection(desk_scenario, generous_config, problem_data)
    assert split.allocation is not None
    assert sorted(split.transmitters + split.receivers) == list(range(desk_scenario.num_aps))
    nearest = min(range(desk_scenario.num_aps), key=lambda r: desk_scenario.hotspot_distance(r, 0))
    assert nearest in split.receivers
    assert split.allocation.scheme == Scheme.CAP.value
    accepted = [step['min_se'] for step in split.trace if step['accepted']]
    assert accepted == sorted(accepted)

def test_joint_never_below_closest(desk_scenario, generous_config, problem_data):
    """With the incumbent kept, the joint scheme is at least as good as closest-AP"""
    cap = run_scheme(desk_scenario, generous_config, Scheme.CAP, data=problem_data)
    jap = run_scheme(desk_scenario, generous_config, Scheme.JAP, data=problem_data)
    assert jap.scheme == Scheme.JAP.value
    assert jap.is_binary
    assert jap.min_sinr >= cap.min_sinr - 1e-9
    assert feasibility_audit(desk_scenario, jap, generous_config)['feasible']

def test_random_scheme_is_reproducible(desk_scenario, generous_config, problem_data):
    a = run_scheme(desk_scenario, generous_config, Scheme.RAP, rng=np.random.default_rng(1), data=problem_data)
    b = run_scheme(desk_scenario, generous_config, Scheme.RAP, rng=np.random.default_rng(1), data=problem_data)
    assert isinstance(a, ResourceAllocation)
    assert a.receivers == b.receivers
    assert a.min_sinr == pytest.approx(b.min_sinr)
