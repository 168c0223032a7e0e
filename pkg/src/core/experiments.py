"""
Monte Carlo campaigns: sweep definitions, per-trial computations and outputs.

A campaign runs ``trials`` independent trials at every sweep value. Trial
(i, j) draws all of its randomness from SeedSequence([base_seed, i, j]), so
results do not depend on the order or the process trials run in.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.allocation import ResourceAllocation, modes_from_receivers
from src.core.comms import (
    comm_coefficients, equal_power_allocation, min_spectral_efficiency, prelog_factor,
)
from src.core.dd_channel import synthesize_echo
from src.core.estimator import estimate_positions
from src.core.exceptions import (
    ConfigurationError, InfeasibleProblemError, SimulationError, SingularInformationError,
)
from src.core.fisher import (
    approx_coefficients, position_fim, position_jacobian, signal_factors_ofdm, signal_factors_otfs,
)
from src.core.optimizer import (
    build_problem_data, closest_ap_selection, power_allocation_fixed_modes, run_scheme, solve_joint,
)
from src.core.scenario import (
    AccessPoint, Scenario, Target, assemble_scenario, derive_seed, generate_scenario, spawn_rng,
    unit_from_degrees,
)
from src.utils.config import ScenarioConfig, SimulationConfig
from src.utils.constants import (
    CELLULAR_BASELINE, MOBILITY_FRAMES, BoundMode, ExperimentKind, Scheme, Waveform,
)

@dataclass(frozen=True)
class SweepDefinition:
    variable: str
    values: Tuple[float, ...]
    columns: Tuple[str, ...]

SWEEPS: Dict[ExperimentKind, SweepDefinition] = {
    ExperimentKind.PEB_VS_TARGETS: SweepDefinition(
        'num_targets', (1, 2, 3, 4, 5), ('exact_peb', 'approx_peb', 'num_rx'),
    ),
    ExperimentKind.RMSE_VS_RCS: SweepDefinition(
        'rcs_variance_dbsm', (-30.0, -20.0, -10.0, 0.0, 10.0),
        ('rmse', 'squared_error', 'exact_peb', 'approx_peb'),
    ),
    ExperimentKind.PEB_VS_AOA: SweepDefinition(
        'aoa_deg', tuple(float(a) for a in range(0, 181, 15)),
        ('exact_peb', 'aoa_gradient', 'divergent'),
    ),
    ExperimentKind.CONVERGENCE: SweepDefinition(
        'penalty', (1.0, 10.0), ('iterations', 'binary_gap', 'min_se', 'kkt_residual'),
    ),
    ExperimentKind.SE_VS_PEB_BUDGET: SweepDefinition(
        'peb_threshold_m', (0.05, 0.1, 0.2, 0.5), ('se_jap', 'se_cap', 'se_rap', 'num_rx'),
    ),
    ExperimentKind.MOBILITY_SWEEP: SweepDefinition(
        'max_speed_kmh', (0.0, 100.0, 200.0, 300.0, 400.0, 500.0),
        ('peb_full', 'se_full', 'peb_half_m', 'se_half_m', 'peb_half_n', 'se_half_n'),
    ),
    ExperimentKind.WAVEFORM_GAP: SweepDefinition(
        'subcarriers', (16, 32, 64, 128),
        ('prelog_otfs', 'prelog_ofdm', 'prelog_ratio', 'd33_ratio', 'd44_ratio', 'se_otfs', 'se_ofdm'),
    ),
    ExperimentKind.CELLULAR_BASELINE: SweepDefinition(
        'peb_threshold_m', (0.05, 0.1, 0.2, 0.5), ('se_jap', 'se_cap', 'se_cellular'),
    ),
    ExperimentKind.SE_VS_RCS: SweepDefinition(
        'rcs_variance_dbsm', (-30.0, -20.0, -10.0, 0.0, 10.0), ('se_otfs', 'se_ofdm', 'se_ratio'),
    ),
}

class ExperimentSpec(BaseModel):
    """One campaign: a kind, its sweep, and the base configuration"""
    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    values: Optional[List[float]] = None
    trials: int = Field(1, ge=1)
    base_seed: int = 0
    config: SimulationConfig = Field(default_factory=SimulationConfig)
    output_dir: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)

    @field_validator('values')
    @classmethod
    def _nonempty(cls, values):
        if values is not None and len(values) == 0:
            raise ValueError("sweep values must be nonempty")
        return values

    @property
    def sweep(self) -> SweepDefinition:
        return SWEEPS[self.kind]

    @property
    def sweep_values(self) -> List[float]:
        return list(self.values) if self.values is not None else list(self.sweep.values)

    def digest(self) -> str:
        """Stable hash of the campaign definition"""
        text = self.model_dump_json(exclude={'output_dir', 'workers'})
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

@dataclass
class TrialResult:
    sweep_index: int
    sweep_value: float
    trial_index: int
    seed: int
    status: str = "ok"          # ok | infeasible | singular | failed
    error: str = ""
    metrics: Dict[str, float] = field(default_factory=dict)
    trace: List[Dict] = field(default_factory=list)

    def row(self, columns) -> Dict:
        row = {
            'sweep_index': self.sweep_index,
            'sweep_value': self.sweep_value,
            'trial': self.trial_index,
            'seed': self.seed,
            'status': self.status,
            'error': self.error,
        }
        for column in columns:
            row[column] = float(self.metrics.get(column, float('nan')))
        return row

def trial_seed(base_seed: int, sweep_index: int, trial_index: int) -> int:
    return derive_seed(base_seed, sweep_index, trial_index)

# Scenes

def closest_receivers(scenario: Scenario) -> List[int]:
    """Closest AP to each hotspot, lowest index on ties"""
    return sorted({
        int(np.argmin([scenario.hotspot_distance(r, v) for r in range(scenario.num_aps)]))
        for v in range(scenario.num_targets)
    })

def equal_power_setup(scenario: Scenario) -> ResourceAllocation:
    coeffs = comm_coefficients(scenario)
    modes = modes_from_receivers(scenario.num_aps, closest_receivers(scenario))
    return equal_power_allocation(coeffs, modes, scenario.max_power)

def aoa_scenario(config: ScenarioConfig, aoa_deg: float, distance: float = 50.0, seed: int = 0) -> Scenario:
    """One transmitter, one receiver and a static target at the origin.

    The receive array is turned so that its axis makes ``aoa_deg`` with the
    receiver-to-target direction; 0 and 180 degrees put the target on the
    array axis.
    """
    tx_position = np.array([distance, 0.0])
    rx_position = np.array([0.0, -distance])
    target_position = np.zeros(2)
    offset = target_position - rx_position
    rho = offset / float(np.hypot(*offset))
    c, s = unit_from_degrees(aoa_deg)
    axis = np.array([c * rho[0] - s * rho[1], s * rho[0] + c * rho[1]])
    axis = axis / np.linalg.norm(axis)

    aps = [
        AccessPoint(0, tx_position, np.array([0.0, 1.0]), config.antennas, config.max_power_w),
        AccessPoint(1, rx_position, axis, config.antennas, config.max_power_w),
    ]
    target = Target(
        index=0,
        position=target_position,
        velocity=np.zeros(2),
        rcs_variance=config.rcs_variance_m2,
        hotspot_center=target_position,
        hotspot_half_width=config.hotspot_size_m / 2.0,
    )
    return assemble_scenario(config, aps, [target], seed=seed)

def sensing_only_allocation(scenario: Scenario, transmitters, receivers) -> ResourceAllocation:
    """Every transmitter spends P_d on its sensing beams only"""
    modes = modes_from_receivers(scenario.num_aps, receivers)
    comm = np.zeros((scenario.num_aps, scenario.num_users))
    sensing = np.zeros((scenario.num_aps, scenario.num_targets))
    for p in transmitters:
        sensing[p] = scenario.max_power / scenario.num_targets
    return ResourceAllocation.from_blocks(modes, comm, sensing)

def _mean_peb(scenario: Scenario, allocation: ResourceAllocation, mode: BoundMode) -> float:
    return float(np.mean([report.peb for report in position_fim(scenario, allocation, mode)]))

def _with_waveform(scenario: Scenario, waveform: Waveform) -> Scenario:
    return replace(scenario, waveform=waveform)

# Trials, one per kind. Each returns its metrics; SimulationError marks the row.

def _trial_peb_vs_targets(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    scenario_config = config.scenario.model_copy(update={'num_targets': int(value)})
    scenario = generate_scenario(scenario_config, seed)
    allocation = equal_power_setup(scenario)
    result.metrics.update({
        'exact_peb': _mean_peb(scenario, allocation, BoundMode.EXACT),
        'approx_peb': _mean_peb(scenario, allocation, BoundMode.APPROX),
        'num_rx': len(allocation.receivers),
    })

def _trial_rmse_vs_rcs(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    scenario_config = config.scenario.model_copy(update={'rcs_variance_dbsm': float(value)})
    scenario = generate_scenario(scenario_config, seed)
    allocation = equal_power_setup(scenario)
    rng = spawn_rng(seed, 1)
    echo = synthesize_echo(scenario, allocation, rng)
    estimate = estimate_positions(echo, scenario, config)
    truth = np.array([t.position for t in scenario.targets])
    squared = float(np.sum((estimate.positions - truth) ** 2))
    result.metrics.update({
        'rmse': math.sqrt(squared),
        'squared_error': squared,
        'exact_peb': _mean_peb(scenario, allocation, BoundMode.EXACT),
        'approx_peb': _mean_peb(scenario, allocation, BoundMode.APPROX),
    })

def _trial_peb_vs_aoa(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    scenario = aoa_scenario(config.scenario, value, seed=seed)
    allocation = sensing_only_allocation(scenario, [0], [1])
    report = position_fim(scenario, allocation, BoundMode.EXACT)[0]
    path = scenario.path(0, 1, 0)
    jacobian = position_jacobian(path, scenario.aps[0], scenario.aps[1], scenario.targets[0], scenario.grid)
    result.metrics.update({
        'exact_peb': report.peb,
        'aoa_gradient': float(np.linalg.norm(jacobian[0])),
        'divergent': float(report.singular or not np.isfinite(report.peb)),
    })
    if report.singular:
        result.status = "singular"

def _trial_convergence(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    solver = config.solver.model_copy(update={'penalty': float(value), 'keep_incumbent': False})
    config = config.model_copy(update={'solver': solver})
    scenario = generate_scenario(config.scenario, seed)
    allocation = solve_joint(scenario, config)
    coeffs = comm_coefficients(scenario)
    result.trace = [dict(row) for row in allocation.trace if 'iteration' in row]
    result.metrics.update({
        'iterations': allocation.iterations,
        'binary_gap': allocation.binary_gap,
        'min_se': min_spectral_efficiency(coeffs, allocation, scenario.grid, scenario.waveform),
        'kkt_residual': allocation.kkt_residual,
    })

def _min_se_or_nan(scenario: Scenario, coeffs, allocation: Optional[ResourceAllocation]) -> float:
    if allocation is None:
        return float('nan')
    return min_spectral_efficiency(coeffs, allocation, scenario.grid, scenario.waveform)

def _joint_and_closest(scenario: Scenario, config: SimulationConfig, data) -> Tuple[
        Optional[ResourceAllocation], Optional[ResourceAllocation]]:
    """Joint allocation (None when infeasible) and the closest-AP allocation it may start from"""
    cap = closest_ap_selection(scenario, config, data).allocation
    incumbent = cap if config.solver.keep_incumbent else None
    try:
        jap = solve_joint(scenario, config, data, incumbent)
    except InfeasibleProblemError as e:
        logger.debug(f"Joint allocation infeasible: {e}")
        jap = None
    return jap, cap

def _with_peb_threshold(config: SimulationConfig, value: float) -> SimulationConfig:
    sensing = config.sensing.model_copy(update={'peb_threshold_m': float(value)})
    return config.model_copy(update={'sensing': sensing})

def _trial_se_vs_peb_budget(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    config = _with_peb_threshold(config, value)
    scenario = generate_scenario(config.scenario, seed)
    coeffs = comm_coefficients(scenario)
    data = build_problem_data(scenario, config, coeffs)
    jap, cap = _joint_and_closest(scenario, config, data)

    num_rx = len(jap.receivers) if jap is not None else max(1, scenario.num_targets)
    rng = spawn_rng(seed, 2)
    try:
        rap = run_scheme(scenario, config, Scheme.RAP, rng=rng, num_receivers=num_rx, data=data)
    except InfeasibleProblemError as e:
        logger.debug(f"Random-AP allocation infeasible: {e}")
        rap = None

    se = {name: _min_se_or_nan(scenario, coeffs, a) for name, a in (('jap', jap), ('cap', cap), ('rap', rap))}
    result.metrics.update({'se_jap': se['jap'], 'se_cap': se['cap'], 'se_rap': se['rap'], 'num_rx': num_rx})
    if all(math.isnan(v) for v in se.values()):
        result.status = "infeasible"

def _joint_min_se(scenario: Scenario, config: SimulationConfig) -> float:
    coeffs = comm_coefficients(scenario)
    data = build_problem_data(scenario, config, coeffs)
    jap, _ = _joint_and_closest(scenario, config, data)
    return _min_se_or_nan(scenario, coeffs, jap)

def _trial_mobility(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    """PEB under equal power and joint-scheme min SE for the base frame and a halved M or N"""
    base = config.scenario.model_copy(update={'max_speed_kmh': float(value)})
    for name, (m_div, n_div) in MOBILITY_FRAMES.items():
        grid = base.grid.model_copy(update={
            'subcarriers': max(1, base.grid.subcarriers // m_div),
            'symbols': max(1, base.grid.symbols // n_div),
        })
        scenario = generate_scenario(base.model_copy(update={'grid': grid}), seed)
        allocation = equal_power_setup(scenario)
        result.metrics[f'peb_{name}'] = _mean_peb(scenario, allocation, BoundMode.EXACT)
        result.metrics[f'se_{name}'] = _joint_min_se(scenario, config)
    if all(math.isnan(result.metrics[f'se_{name}']) for name in MOBILITY_FRAMES):
        result.status = "infeasible"

def cellular_scenario(scenario: Scenario, config: ScenarioConfig, seed: int = 0) -> Scenario:
    """Same users, targets and frame served by one site at the area centre.

    AP 0 transmits and AP 1 receives; both sit at the centre with one
    heading and carry every antenna of the cell-free network.
    """
    centre = np.full(2, config.size_m / 2.0)
    heading = spawn_rng(seed, 3).uniform(0.0, 2.0 * np.pi)
    direction = np.array([math.cos(heading), math.sin(heading)])
    antennas = scenario.num_aps * scenario.antennas
    power = CELLULAR_BASELINE['max_power_w']
    aps = [AccessPoint(index, centre, direction, antennas, power) for index in (0, 1)]
    return assemble_scenario(config, aps, scenario.targets, scenario.users, seed=seed, grid=scenario.grid)

def _trial_cellular_baseline(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    config = _with_peb_threshold(config, value)
    scenario = generate_scenario(config.scenario, seed)
    coeffs = comm_coefficients(scenario)
    data = build_problem_data(scenario, config, coeffs)
    jap, cap = _joint_and_closest(scenario, config, data)

    cellular = cellular_scenario(scenario, config.scenario, seed)
    try:
        site = power_allocation_fixed_modes(cellular, [1.0, 0.0], config)
        se_cellular = _min_se_or_nan(cellular, comm_coefficients(cellular), site)
    except InfeasibleProblemError as e:
        logger.debug(f"Cellular allocation infeasible: {e}")
        se_cellular = float('nan')

    result.metrics.update({
        'se_jap': _min_se_or_nan(scenario, coeffs, jap),
        'se_cap': _min_se_or_nan(scenario, coeffs, cap),
        'se_cellular': se_cellular,
    })
    if all(math.isnan(v) for v in result.metrics.values()):
        result.status = "infeasible"

def _trial_se_vs_rcs(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    scenario_config = config.scenario.model_copy(update={'rcs_variance_dbsm': float(value)})
    base = generate_scenario(scenario_config, seed)
    for waveform in (Waveform.OTFS, Waveform.OFDM):
        result.metrics[f'se_{waveform.value}'] = _joint_min_se(_with_waveform(base, waveform), config)
    se_otfs, se_ofdm = result.metrics['se_otfs'], result.metrics['se_ofdm']
    result.metrics['se_ratio'] = se_otfs / se_ofdm if se_ofdm > 0 else float('nan')
    if math.isnan(se_otfs) and math.isnan(se_ofdm):
        result.status = "infeasible"

def _trial_waveform_gap(config: SimulationConfig, value: float, seed: int, result: TrialResult):
    size = int(value)
    grid_config = config.scenario.grid.model_copy(update={'subcarriers': size, 'symbols': size, 'cp_samples': size})
    scenario_config = config.scenario.model_copy(update={'grid': grid_config})
    scenario = generate_scenario(scenario_config, seed)
    grid = scenario.grid
    otfs = approx_coefficients(signal_factors_otfs(grid), scenario.antennas)
    ofdm = approx_coefficients(signal_factors_ofdm(grid), scenario.antennas)
    coeffs = comm_coefficients(scenario)
    allocation = equal_power_setup(scenario)
    prelog_otfs = prelog_factor(grid, Waveform.OTFS)
    prelog_ofdm = prelog_factor(grid, Waveform.OFDM)
    result.metrics.update({
        'prelog_otfs': prelog_otfs,
        'prelog_ofdm': prelog_ofdm,
        'prelog_ratio': prelog_otfs / prelog_ofdm,
        'd33_ratio': ofdm['d33'] / otfs['d33'],
        'd44_ratio': ofdm['d44'] / otfs['d44'],
        'se_otfs': min_spectral_efficiency(coeffs, allocation, grid, Waveform.OTFS),
        'se_ofdm': min_spectral_efficiency(coeffs, allocation, grid, Waveform.OFDM),
    })

TRIALS: Dict[ExperimentKind, Callable] = {
    ExperimentKind.PEB_VS_TARGETS: _trial_peb_vs_targets,
    ExperimentKind.RMSE_VS_RCS: _trial_rmse_vs_rcs,
    ExperimentKind.PEB_VS_AOA: _trial_peb_vs_aoa,
    ExperimentKind.CONVERGENCE: _trial_convergence,
    ExperimentKind.SE_VS_PEB_BUDGET: _trial_se_vs_peb_budget,
    ExperimentKind.MOBILITY_SWEEP: _trial_mobility,
    ExperimentKind.WAVEFORM_GAP: _trial_waveform_gap,
    ExperimentKind.CELLULAR_BASELINE: _trial_cellular_baseline,
    ExperimentKind.SE_VS_RCS: _trial_se_vs_rcs,
}

def run_trial(kind: ExperimentKind, config: SimulationConfig, sweep_index: int, value: float,
              trial_index: int, base_seed: int) -> TrialResult:
    """One trial; library errors become a flagged row, configuration errors propagate"""
    seed = trial_seed(base_seed, sweep_index, trial_index)
    result = TrialResult(sweep_index, float(value), trial_index, seed)
    try:
        TRIALS[kind](config, value, seed, result)
    except ConfigurationError:
        raise
    except InfeasibleProblemError as e:
        result.status, result.error = "infeasible", str(e)
    except SingularInformationError as e:
        result.status, result.error = "singular", str(e)
    except SimulationError as e:
        logger.error(f"Trial ({sweep_index}, {trial_index}) of {kind.value} failed: {e}")
        result.status, result.error = "failed", f"{type(e).__name__}: {e}"
    return result

# Outputs

def results_frame(spec: ExperimentSpec, results: List[TrialResult]) -> pd.DataFrame:
    columns = spec.sweep.columns
    frame = pd.DataFrame([r.row(columns) for r in results])
    if frame.empty:
        frame = pd.DataFrame(columns=['sweep_index', 'sweep_value', 'trial', 'seed', 'status', 'error', *columns])
    return frame.rename(columns={'sweep_value': spec.sweep.variable})

def trace_frame(results: List[TrialResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        for entry in r.trace:
            rows.append({'sweep_index': r.sweep_index, 'trial': r.trial_index, **entry})
    return pd.DataFrame(rows)

def summarize(spec: ExperimentSpec, frame: pd.DataFrame) -> Dict:
    """mean/std/count of every metric column per sweep point, in sweep order"""
    if frame.empty:
        raise ValueError("Cannot summarize an empty campaign")
    variable = spec.sweep.variable
    points = []
    for index, group in frame.groupby('sweep_index', sort=True):
        metrics = {}
        for column in spec.sweep.columns:
            values = group[column].astype(float)
            finite = values[np.isfinite(values)]
            metrics[column] = {
                'mean': float(finite.mean()) if len(finite) else float('nan'),
                'std': float(finite.std(ddof=0)) if len(finite) else float('nan'),
                'count': int(len(finite)),
            }
        points.append({
            'sweep_index': int(index),
            variable: float(group[variable].iloc[0]),
            'trials': int(len(group)),
            'flagged': int((group['status'] != 'ok').sum()),
            'metrics': metrics,
        })
    return {'kind': spec.kind.value, 'variable': variable, 'digest': spec.digest(), 'points': points}

def json_safe(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    return value

def write_outputs(spec: ExperimentSpec, frame: pd.DataFrame, results: List[TrialResult],
                  output_dir: str) -> Dict[str, str]:
    os.makedirs(output_dir, exist_ok=True)
    name = spec.kind.value
    paths = {
        'csv': os.path.join(output_dir, f"{name}.csv"),
        'summary': os.path.join(output_dir, f"{name}_summary.json"),
    }
    frame.to_csv(paths['csv'], index=False, float_format='%.12g', lineterminator='\n')
    with open(paths['summary'], 'w', encoding='utf-8', newline='\n') as f:
        json.dump(json_safe(summarize(spec, frame)), f, indent=2, sort_keys=False)
        f.write('\n')
    traces = trace_frame(results)
    if not traces.empty:
        paths['trace'] = os.path.join(output_dir, f"{name}_trace.csv")
        traces.to_csv(paths['trace'], index=False, float_format='%.12g', lineterminator='\n')
    return paths

def run_experiment(spec: ExperimentSpec, output_dir: Optional[str] = None,
                   record: Optional[bool] = None) -> pd.DataFrame:
    """Run every trial of ``spec``, write CSV/JSON/report and return the result table"""
    from src.core.analysis import write_report
    from src.core.campaign_worker import CampaignWorker

    config = spec.config
    output_dir = output_dir or spec.output_dir or config.resolve_output_dir()
    record = config.harness.record_to_database if record is None else record
    values = spec.sweep_values
    logger.info(
        f"Campaign {spec.kind.value}: {len(values)} sweep points x {spec.trials} trials "
        f"(seed {spec.base_seed}, digest {spec.digest()})"
    )

    db_manager, campaign_id = None, None
    if record:
        from src.database.manager import DatabaseManager
        db_manager = DatabaseManager(config.harness.database_path)
        campaign_id = db_manager.start_campaign(spec.kind.value, spec.digest(), len(values) * spec.trials)

    worker = CampaignWorker(spec.workers or config.harness.workers)
    try:
        results = worker.run(spec.kind, config, values, spec.trials, spec.base_seed)
    except Exception as e:
        if db_manager:
            db_manager.end_campaign(campaign_id, status='error', error_msg=str(e))
        raise

    frame = results_frame(spec, results)
    paths = write_outputs(spec, frame, results, output_dir)
    write_report({spec.kind.value: (spec, frame)}, output_dir)

    flagged = int((frame['status'] != 'ok').sum())
    if db_manager:
        db_manager.save_trials(campaign_id, spec.sweep.variable, results)
        db_manager.end_campaign(campaign_id, status='completed')
    logger.info(f"Campaign {spec.kind.value} done: {len(results)} trials, {flagged} flagged, CSV at {paths['csv']}")
    return frame
