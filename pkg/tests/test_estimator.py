"""
Grid-search position estimator
"""
import math

import numpy as np
import pandas as pd
import pytest

from src.core.dd_channel import synthesize_echo
from src.core.estimator import (
    LikelihoodEvaluator, SearchGrid, estimate_positions, grid_search, radar_map, reduced_loglik, rmse,
    simplified_loglik,
)
from src.core.experiments import sensing_only_allocation
from src.core.scenario import spawn_rng
from src.core.validation import check_noiseless_recovery
from src.utils.config import SimulationConfig

@pytest.fixture
def desk_echo(desk_scenario):
    allocation = sensing_only_allocation(desk_scenario, [0], [1, 2])
    return synthesize_echo(desk_scenario, allocation, spawn_rng(7, 1))

def test_search_grid_nodes():
    grid = SearchGrid((0.0, 20.0), (0.0, 10.0), (10.0, 1.0))
    assert grid.nodes().shape == (3 * 2, 2)
    assert grid.nodes(1.0).shape == (21 * 11, 2)
    assert grid.step == 1.0
    # x-major ordering
    np.testing.assert_array_equal(grid.nodes()[:2], [[0.0, 0.0], [0.0, 10.0]])

def test_search_grid_around():
    grid = SearchGrid.around((50.0, 60.0), 10.0, (5.0,))
    assert grid.x_range == (40.0, 60.0)
    assert grid.y_range == (50.0, 70.0)
    assert len(grid.nodes()) == 25

def test_refine_keeps_center_and_bounds():
    grid = SearchGrid((0.0, 20.0), (0.0, 20.0), (10.0, 1.0))
    nodes = grid.refine((0.0, 10.0), 10.0, 1.0)
    assert any(np.allclose(node, [0.0, 10.0]) for node in nodes)
    assert nodes[:, 0].min() >= 0.0
    # x clipped to [0, 10], y spans [0, 20]
    assert len(nodes) == 11 * 21

def test_search_grid_validation():
    with pytest.raises(ValueError):
        SearchGrid((0.0, 1.0), (0.0, 1.0), (0.0,))
    with pytest.raises(ValueError):
        SearchGrid((1.0, 0.0), (0.0, 1.0))

def test_resolution_floor():
    assert SearchGrid((0.0, 1.0), (0.0, 1.0), (1.0, 0.1)).resolution_floor == pytest.approx(0.1 / math.sqrt(6))

def test_rmse():
    truth = np.array([1.0, 2.0])
    estimates = np.array([[1.0, 2.0], [4.0, 6.0]])
    assert rmse(estimates, truth) == pytest.approx(math.sqrt(25.0 / 2))
    with pytest.raises(ValueError):
        rmse(np.zeros((0, 2)), truth)

def test_noiseless_echo_is_located():
    result = check_noiseless_recovery(SimulationConfig(), instances=2)
    assert result.passed, f"worst error {result.value:.3e} m"

def test_silent_transmitters_are_skipped(desk_scenario, desk_echo):
    """Transmitters with zero allocated power leave the objectives finite"""
    evaluator = LikelihoodEvaluator(desk_echo, desk_scenario)
    assert evaluator.transmitters == (0,)
    truth = np.array([target.position for target in desk_scenario.targets])
    simplified = simplified_loglik(desk_echo, desk_scenario, truth)
    assert np.isfinite(simplified) and simplified > 0
    assert np.isfinite(reduced_loglik(desk_echo, desk_scenario, truth))

def test_zero_norm_beam_adds_nothing():
    h = np.ones(4, dtype=complex)
    beams = [(h, np.zeros(8, dtype=complex)), (h, np.ones(8, dtype=complex))]
    b = np.array([0.0, 4.0], dtype=complex)
    assert LikelihoodEvaluator._simplified_term(beams, b) == pytest.approx(16.0 / 32.0)

def test_estimate_stays_in_hotspot(desk_scenario, desk_config, desk_echo):
    config = desk_config.model_copy(update={
        'estimator': desk_config.estimator.model_copy(update={'search_steps': [10.0, 2.0]}),
    })
    result = estimate_positions(desk_echo, desk_scenario, config)
    target = desk_scenario.targets[0]
    assert result.positions.shape == (1, 2)
    assert np.all(np.abs(result.positions[0] - target.hotspot_center) <= target.hotspot_half_width + 1e-9)
    # each level starts from the previous estimate
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(result.level_values, result.level_values[1:]))
    assert len(result.maps) == 1

def test_radar_map_csv(desk_scenario, desk_echo, tmp_path):
    target = desk_scenario.targets[0]
    grid = SearchGrid.around(target.hotspot_center, target.hotspot_half_width, (5.0,))
    result = radar_map(desk_echo, desk_scenario, grid)
    assert len(result.values) == 25
    assert np.all(np.isfinite(result.values))
    path = tmp_path / "map.csv"
    result.to_csv(str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['x', 'y', 'value']
    assert len(frame) == 25
    assert result.to_frame().shape[1] == 3 + len(result.receivers)

def test_one_grid_per_target(desk_scenario, desk_echo):
    grid = SearchGrid((0.0, 10.0), (0.0, 10.0), (5.0,))
    with pytest.raises(ValueError):
        grid_search(desk_echo, desk_scenario, [grid, grid])
