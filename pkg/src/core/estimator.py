"""
Multistatic maximum-likelihood position search over the target hotspots.

For receiving AP r the echo is compared with the noiseless response
H_prv x_p of every transmitter p and target v placed at a candidate
position. With u = v * N_tx + p the correlation terms are

    b_r[u]     = (H_prv x_p)^H y_r
    A_r[u, u'] = (H_prv x_p)^H H_p'rv' x_p'

The full objective is sum_r b_r^H A_r^-1 b_r. Dropping the cross terms of
A_r gives the simplified objective sum_r sum_u |b_r[u]|^2 / A_r[u, u],
which separates over targets.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy import linalg

from src.core.dd_channel import Echo, PrecodedFrame, build_psi
from src.core.exceptions import (
    ConditioningError, DegenerateGeometryError, DelayOutOfRangeError, EstimationFailure,
)
from src.core.scenario import Scenario, Target, array_response, path_parameters
from src.utils.config import SimulationConfig
from src.utils.constants import NUMERICS, SEARCH_STEPS, ObjectiveMode

@dataclass(frozen=True)
class SearchGrid:
    """Rectangular search area with a multi-resolution step list (coarse first)"""
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    levels: Tuple[float, ...] = SEARCH_STEPS

    def __post_init__(self):
        if not self.levels or any(step <= 0 for step in self.levels):
            raise ValueError("Search steps must be positive")
        if self.x_range[1] < self.x_range[0] or self.y_range[1] < self.y_range[0]:
            raise ValueError("Search ranges must be ordered (min, max)")

    @classmethod
    def around(cls, center, half_width: float, levels: Sequence[float] = SEARCH_STEPS) -> "SearchGrid":
        cx, cy = (float(c) for c in center)
        return cls((cx - half_width, cx + half_width), (cy - half_width, cy + half_width), tuple(levels))

    @property
    def step(self) -> float:
        """Finest step, delta_grid"""
        return self.levels[-1]

    @property
    def resolution_floor(self) -> float:
        """RMSE of a uniform position inside one square cell"""
        return self.step / math.sqrt(6.0)

    @staticmethod
    def _axis(low: float, high: float, step: float) -> np.ndarray:
        count = int(math.floor((high - low) / step + 1e-9)) + 1
        return low + step * np.arange(count)

    def nodes(self, step: Optional[float] = None) -> np.ndarray:
        """Grid nodes at ``step`` (coarsest level by default), x-major order, shape (K, 2)"""
        step = self.levels[0] if step is None else step
        xs = self._axis(*self.x_range, step)
        ys = self._axis(*self.y_range, step)
        gx, gy = np.meshgrid(xs, ys, indexing='ij')
        return np.column_stack([gx.ravel(), gy.ravel()])

    def refine(self, center, span: float, step: float) -> np.ndarray:
        """Nodes center + k * step, |k * step| <= span, kept inside the search area.

        The center itself is always a node.
        """
        reach = int(round(span / step))
        offsets = step * np.arange(-reach, reach + 1)
        center = np.asarray(center, dtype=float)
        tol = 1e-9 * max(1.0, span)
        xs = [center[0] + o for o in offsets if self.x_range[0] - tol <= center[0] + o <= self.x_range[1] + tol]
        ys = [center[1] + o for o in offsets if self.y_range[0] - tol <= center[1] + o <= self.y_range[1] + tol]
        gx, gy = np.meshgrid(xs, ys, indexing='ij')
        return np.column_stack([gx.ravel(), gy.ravel()])

@dataclass(eq=False)
class RadarMap:
    """Objective values of one target over a set of candidate nodes"""
    target: int
    positions: np.ndarray       # (K, 2)
    values: np.ndarray          # (K,), -inf marks a skipped cell
    per_receiver: np.ndarray    # (N_rx, K)
    receivers: Tuple[int, ...] = ()

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def best_position(self) -> np.ndarray:
        return self.positions[self.best_index]

    @property
    def best_value(self) -> float:
        return float(self.values[self.best_index])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'x': self.positions[:, 0], 'y': self.positions[:, 1], 'value': self.values})
        for i, r in enumerate(self.receivers):
            frame[f'rx_{r}'] = self.per_receiver[i]
        return frame

    def to_csv(self, path: str):
        self.to_frame()[['x', 'y', 'value']].to_csv(path, index=False, float_format='%.12g', lineterminator='\n')

@dataclass
class SearchResult:
    positions: np.ndarray                     # (T_g, 2)
    value: float
    maps: List[RadarMap] = field(default_factory=list)   # finest level, one per target
    level_values: List[float] = field(default_factory=list)

    @property
    def flat(self) -> np.ndarray:
        """The 2 T_g estimate vector"""
        return self.positions.ravel()

# Beam responses and objectives

def _virtual_target(target: Target, position) -> Target:
    """``target`` moved to a candidate position, velocity kept (assumed known)"""
    position = np.asarray(position, dtype=float)
    return Target(
        index=target.index,
        position=position,
        velocity=target.velocity,
        rcs_variance=target.rcs_variance,
        hotspot_center=position,
        hotspot_half_width=target.hotspot_half_width,
    )

BeamResponse = Tuple[np.ndarray, np.ndarray]   # (h_rx, Psi h_tx^T X_p)

class LikelihoodEvaluator:
    """Evaluates the search objectives for one echo.

    Beam responses are cached per (target, candidate position), so sweeping
    one target while the others stay put rebuilds nothing for the others.
    """

    def __init__(self, echo: Echo, scenario: Scenario,
                 objective: ObjectiveMode = ObjectiveMode.SIMPLIFIED,
                 regularization: float = NUMERICS['regularization']):
        self.echo = echo
        self.scenario = scenario
        self.objective = objective
        self.regularization = regularization
        self.frames: Dict[int, PrecodedFrame] = echo.frames
        # silent transmitters carry no echo and would zero a beam norm
        self.transmitters = tuple(p for p in echo.transmitters if p in echo.frames and np.any(echo.frames[p].block))
        self.receivers = tuple(echo.receivers)
        self._cache: Dict[Tuple[int, float, float], Optional[List[List[BeamResponse]]]] = {}

    def responses(self, v: int, position) -> Optional[List[List[BeamResponse]]]:
        """[receiver][transmitter] responses of target v at ``position``; None if the cell is unusable"""
        key = (v, round(float(position[0]), 9), round(float(position[1]), 9))
        if key in self._cache:
            return self._cache[key]
        scenario = self.scenario
        target = _virtual_target(scenario.targets[v], position)
        m_t = scenario.antennas
        result: Optional[List[List[BeamResponse]]] = []
        try:
            for r in self.receivers:
                row = []
                for p in self.transmitters:
                    path = path_parameters(scenario.aps[p], scenario.aps[r], target, scenario.grid)
                    dd = build_psi(path.delay, path.doppler, scenario.grid, scenario.waveform)
                    beam = array_response(path.aod, m_t) @ self.frames[p].block
                    row.append((array_response(path.aoa, m_t), dd.apply(beam)))
                result.append(row)
        except (DegenerateGeometryError, DelayOutOfRangeError) as e:
            logger.debug(f"Cell ({position[0]:.3f}, {position[1]:.3f}) skipped for target {v}: {e}")
            result = None
        self._cache[key] = result
        return result

    def _beams(self, positions: Mapping[int, np.ndarray]) -> Optional[List[List[BeamResponse]]]:
        """Per receiver, the responses of every (v, p) in u = v * N_tx + p order"""
        per_target = []
        for v in sorted(positions):
            responses = self.responses(v, positions[v])
            if responses is None:
                return None
            per_target.append(responses)
        return [[beam for responses in per_target for beam in responses[i]] for i in range(len(self.receivers))]

    def correlation(self, i: int, beams: List[BeamResponse]) -> Tuple[np.ndarray, np.ndarray]:
        y = self.echo.signals[i]
        b = np.array([np.vdot(s, h.conj() @ y) for h, s in beams], dtype=complex)
        A = np.array([[np.vdot(h, h2) * np.vdot(s, s2) for h2, s2 in beams] for h, s in beams], dtype=complex)
        return b, A.reshape(len(beams), len(beams))

    def _full_term(self, b: np.ndarray, A: np.ndarray) -> Tuple[float, np.ndarray]:
        if not np.any(b):
            return 0.0, np.zeros_like(b)
        scale = float(np.mean(np.real(np.diag(A))))
        if scale <= 0:
            return float('-inf'), np.zeros_like(b)
        regularized = A + self.regularization * scale * np.eye(A.shape[0])
        condition = np.linalg.cond(regularized)
        if condition > NUMERICS['conditioning_limit']:
            raise ConditioningError(f"Correlation matrix condition number {condition:.2e}")
        gains = linalg.solve(regularized, b, assume_a='her')
        return float(np.real(np.vdot(b, gains))), gains

    @staticmethod
    def _simplified_term(beams: List[BeamResponse], b: np.ndarray) -> float:
        total = 0.0
        for (h, s), bu in zip(beams, b):
            norm = np.vdot(h, h).real * np.vdot(s, s).real
            if norm <= 0:
                continue
            total += abs(bu) ** 2 / norm
        return total

    def per_receiver(self, positions: Mapping[int, np.ndarray],
                     objective: Optional[ObjectiveMode] = None) -> np.ndarray:
        """Objective contribution of every receiving AP; -inf everywhere for a skipped cell"""
        objective = objective or self.objective
        beams_all = self._beams(positions)
        if beams_all is None:
            return np.full(len(self.receivers), float('-inf'))
        values = np.zeros(len(self.receivers))
        for i, beams in enumerate(beams_all):
            if objective == ObjectiveMode.FULL:
                b, A = self.correlation(i, beams)
                values[i] = self._full_term(b, A)[0]
            else:
                y = self.echo.signals[i]
                b = np.array([np.vdot(s, h.conj() @ y) for h, s in beams], dtype=complex)
                values[i] = self._simplified_term(beams, b)
        return values

    def value(self, positions: Mapping[int, np.ndarray], objective: Optional[ObjectiveMode] = None) -> float:
        return float(np.sum(self.per_receiver(positions, objective)))

    def gains(self, positions: Mapping[int, np.ndarray]) -> List[np.ndarray]:
        """beta_r = A_r^-1 b_r for every receiving AP"""
        beams_all = self._beams(positions)
        if beams_all is None:
            raise EstimationFailure("Candidate positions are not usable")
        return [self._full_term(*self.correlation(i, beams))[1] for i, beams in enumerate(beams_all)]

def _as_mapping(positions) -> Dict[int, np.ndarray]:
    if isinstance(positions, Mapping):
        return {int(v): np.asarray(p, dtype=float) for v, p in positions.items()}
    array = np.asarray(positions, dtype=float).reshape(-1, 2)
    return {v: array[v] for v in range(array.shape[0])}

def correlation_terms(echo: Echo, scenario: Scenario, r: int, positions) -> Tuple[np.ndarray, np.ndarray]:
    """(b_r, A_r) of receiving AP r for targets at ``positions`` (T_g x 2, or {v: position})"""
    evaluator = LikelihoodEvaluator(echo, scenario)
    beams_all = evaluator._beams(_as_mapping(positions))
    if beams_all is None:
        raise EstimationFailure("Candidate positions are not usable")
    return evaluator.correlation(evaluator.receivers.index(r), beams_all[evaluator.receivers.index(r)])

def reduced_loglik(echo: Echo, scenario: Scenario, positions,
                   regularization: float = NUMERICS['regularization']) -> float:
    """sum_r b_r^H A_r^-1 b_r"""
    evaluator = LikelihoodEvaluator(echo, scenario, ObjectiveMode.FULL, regularization)
    return evaluator.value(_as_mapping(positions))

def simplified_loglik(echo: Echo, scenario: Scenario, positions) -> float:
    """sum_r sum_p sum_v |y_r^H H_prv x_p|^2 / ||H_prv x_p||^2 over the beams with non-zero norm"""
    evaluator = LikelihoodEvaluator(echo, scenario, ObjectiveMode.SIMPLIFIED)
    return evaluator.value(_as_mapping(positions))

# Grid search

def _scan(evaluator: LikelihoodEvaluator, v: int, nodes: np.ndarray, fixed: Dict[int, np.ndarray],
          excluded: Sequence[np.ndarray] = (), radius: float = 0.0) -> RadarMap:
    """Objective over ``nodes`` for target v with the other targets at ``fixed``"""
    per_receiver = np.full((len(evaluator.receivers), len(nodes)), float('-inf'))
    for k, node in enumerate(nodes):
        if any(np.linalg.norm(node - other) < radius for other in excluded):
            continue
        positions = dict(fixed)
        positions[v] = node
        per_receiver[:, k] = evaluator.per_receiver(positions)
    values = per_receiver.sum(axis=0)
    return RadarMap(v, nodes, values, per_receiver, evaluator.receivers)

def _check_map(radar_map: RadarMap):
    if not np.isfinite(radar_map.best_value):
        raise EstimationFailure(f"Every cell of target {radar_map.target} was skipped")

def _joint_coarse(evaluator: LikelihoodEvaluator, grids: Sequence[SearchGrid]) -> Tuple[Dict[int, np.ndarray], float]:
    """Exhaustive search over the product of the coarse grids; first maximum wins"""
    node_sets = [grid.nodes() for grid in grids]
    best_value, best_positions = float('-inf'), None
    for combination in itertools.product(*(range(len(nodes)) for nodes in node_sets)):
        positions = {v: node_sets[v][k] for v, k in enumerate(combination)}
        value = evaluator.value(positions)
        if value > best_value:
            best_value, best_positions = value, positions
    if best_positions is None:
        raise EstimationFailure("Every cell of the joint coarse search was skipped")
    return best_positions, best_value

def _greedy_coarse(evaluator: LikelihoodEvaluator, grids: Sequence[SearchGrid],
                   exclusion: float) -> Tuple[Dict[int, np.ndarray], float]:
    """Targets placed one at a time, each away from the peaks already taken"""
    found: Dict[int, np.ndarray] = {}
    for v, grid in enumerate(grids):
        radar_map = _scan(evaluator, v, grid.nodes(), found, list(found.values()), exclusion * grid.levels[0])
        _check_map(radar_map)
        found[v] = radar_map.best_position
    return found, evaluator.value(found)

def grid_search(echo: Echo, scenario: Scenario, grids, objective: ObjectiveMode = ObjectiveMode.SIMPLIFIED,
                regularization: float = NUMERICS['regularization'],
                exclusion_factor: float = 2.0) -> SearchResult:
    """Coarse-to-fine ML search, one SearchGrid per target.

    Up to two targets are searched jointly at the coarse level, more are
    placed greedily. Each finer level searches +/- the previous step around
    the current estimate of one target at a time, with the others fixed.
    """
    if isinstance(grids, SearchGrid):
        grids = [grids] * scenario.num_targets
    grids = list(grids)
    if len(grids) != scenario.num_targets or not grids:
        raise ValueError(f"Need one search grid per target ({scenario.num_targets}), got {len(grids)}")
    levels = grids[0].levels
    if any(grid.levels != levels for grid in grids):
        raise ValueError("All search grids must share one step list")

    evaluator = LikelihoodEvaluator(echo, scenario, objective, regularization)
    greedy = len(grids) > 2
    if greedy:
        positions, value = _greedy_coarse(evaluator, grids, exclusion_factor)
    else:
        positions, value = _joint_coarse(evaluator, grids)
    level_values = [value]
    logger.debug(f"Coarse search ({levels[0]} m): objective {value:.6g}")

    maps: List[Optional[RadarMap]] = [None] * len(grids)
    if len(levels) == 1:
        for v, grid in enumerate(grids):
            fixed = {u: p for u, p in positions.items() if u != v}
            maps[v] = _scan(evaluator, v, grid.nodes(), fixed)

    for previous, step in zip(levels, levels[1:]):
        for v, grid in enumerate(grids):
            fixed = {u: p for u, p in positions.items() if u != v}
            nodes = grid.refine(positions[v], previous, step)
            excluded = list(fixed.values()) if greedy else []
            # the current estimate is itself a node, so the objective cannot drop
            radar_map = _scan(evaluator, v, nodes, fixed, excluded, exclusion_factor * step)
            _check_map(radar_map)
            positions[v] = radar_map.best_position
            maps[v] = radar_map
            value = evaluator.value(positions)
        level_values.append(value)
        logger.debug(f"Refinement at {step} m: objective {value:.6g}")

    estimate = np.array([positions[v] for v in range(len(grids))])
    return SearchResult(estimate, value, [m for m in maps if m is not None], level_values)

def radar_map(echo: Echo, scenario: Scenario, grid: SearchGrid, v: int = 0,
              objective: ObjectiveMode = ObjectiveMode.SIMPLIFIED,
              fixed: Optional[Mapping[int, np.ndarray]] = None) -> RadarMap:
    """Map of target v over every node of ``grid`` at its finest step"""
    evaluator = LikelihoodEvaluator(echo, scenario, objective)
    fixed = {u: np.asarray(p, dtype=float) for u, p in (fixed or {}).items() if u != v}
    return _scan(evaluator, v, grid.nodes(grid.step), fixed)

def estimate_positions(echo: Echo, scenario: Scenario, config: SimulationConfig) -> SearchResult:
    """Grid search over each target's hotspot with the configured steps and objective"""
    estimator = config.estimator
    grids = [
        SearchGrid.around(target.hotspot_center, target.hotspot_half_width, estimator.search_steps)
        for target in scenario.targets
    ]
    result = grid_search(
        echo, scenario, grids, estimator.objective,
        regularization=estimator.regularization, exclusion_factor=estimator.exclusion_factor,
    )
    logger.info(f"Estimated positions {np.round(result.positions, 3).tolist()} (objective {result.value:.4g})")
    return result

def rmse(estimates, truth) -> float:
    """sqrt(mean_n ||p_hat_n - p||^2) over the stacked estimate vectors"""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise ValueError("rmse needs at least one estimate")
    truth = np.asarray(truth, dtype=float)
    count = estimates.shape[0]
    errors = (estimates - truth).reshape(count, -1)
    return float(np.sqrt(np.mean(np.sum(errors ** 2, axis=1))))
