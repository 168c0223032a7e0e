"""
Oracle and property checks behind the ``validate`` command.

Every check compares a production code path with an independent
computation (dense brute force, finite differences, a second solver back
end) or asserts an ordering property over seeded random instances. Checks
never raise: a library error becomes a failed CheckResult with its message.
"""

import math
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.core.allocation import modes_from_receivers
from src.core.comms import prelog_factor
from src.core.convex import solve_convex_subproblem
from src.core.dd_channel import build_psi, build_psi_otfs, synthesize_echo
from src.core.estimator import estimate_positions, rmse
from src.core.exceptions import InfeasibleProblemError, SimulationError
from src.core.experiments import (
    aoa_scenario, closest_receivers, equal_power_setup, run_trial, sensing_only_allocation,
)
from src.core.fisher import (
    approx_coefficients, fim_full, position_fim, position_jacobian, signal_factors_bruteforce,
    signal_factors_ofdm, signal_factors_otfs,
)
from src.core.optimizer import (
    build_power_program, build_problem_data, crlb_floor, feasibility_audit,
    power_allocation_fixed_modes, quadratic_transform_weights,
)
from src.core.scenario import (
    AccessPoint, OtfsGrid, PathParams, Target, array_response, assemble_scenario, generate_scenario,
    spawn_rng,
)
from src.utils.config import GridConfig, ScenarioConfig, SimulationConfig
from src.utils.constants import BoundMode, CrlbForm, ExperimentKind, Waveform

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float              # measured quantity (max error, ratio, violation count, ...)
    threshold: float
    instances: int = 0
    detail: str = ""
    informational: bool = False

def _unit_grid(M: int, N: int, n_cp: int = 0) -> OtfsGrid:
    """Grid with delta_f = T = 1, so delays and Dopplers are counted in bins"""
    return OtfsGrid(M=M, N=N, delta_f=1.0, T=1.0, N_cp=n_cp, carrier_freq=1.0)

def _factor_error(closed, brute) -> float:
    """Largest entry error, each relative to its Cauchy-Schwarz scale"""
    c, b = closed.as_array(), brute.as_array()
    r00, r20, r02 = b[0].real, b[4].real, b[5].real
    scales = np.array([r00, math.sqrt(r00 * r20), math.sqrt(r00 * r02), math.sqrt(r20 * r02), r20, r02])
    return float(np.max(np.abs(c - b) / np.maximum(scales, 1e-300)))

_DELAY_TAPS = (0.0, 1.0, 0.4, 1.3, 2.7)
_DOPPLER_TAPS = (0.0, 1.0, 0.35, -0.6)

def _factor_cases(sizes) -> List[Tuple[OtfsGrid, Waveform, float, float]]:
    cases = []
    for M in sizes:
        for N in sizes:
            otfs_grid = _unit_grid(M, N)
            ofdm_grid = _unit_grid(M, N, n_cp=M)
            for tap in _DELAY_TAPS:
                for k in _DOPPLER_TAPS:
                    if math.ceil(tap) < M:
                        cases.append((otfs_grid, Waveform.OTFS, tap / M, k / N))
                    if tap <= M / 2:
                        cases.append((ofdm_grid, Waveform.OFDM, tap / M, k / N))
    return cases

# Signal factors and Psi

def check_signal_factors(sizes=(2, 4, 8)) -> CheckResult:
    """Closed-form signal factors against sums over the dense Psi"""
    worst, where = 0.0, ""
    cases = _factor_cases(sizes)
    for grid, waveform, tau, nu in cases:
        brute = signal_factors_bruteforce(build_psi(tau, nu, grid, waveform))
        if waveform == Waveform.OFDM:
            closed = signal_factors_ofdm(grid)
        else:
            closed = signal_factors_otfs(grid, tau)
        error = _factor_error(closed, brute)
        if error > worst:
            worst, where = error, f"{waveform.value} M={grid.M} N={grid.N} tau={tau:g} nu={nu:g}"
    return CheckResult("signal_factors", worst < 1e-8, worst, 1e-8, len(cases), where)

def check_unit_energy(sizes=(2, 4, 8)) -> CheckResult:
    """r00 = MN, exactly for the closed forms and to round-off for the dense sums"""
    worst = 0.0
    cases = _factor_cases(sizes)
    exact = True
    for grid, waveform, tau, nu in cases:
        closed = signal_factors_ofdm(grid) if waveform == Waveform.OFDM else signal_factors_otfs(grid, tau)
        exact = exact and closed.r00 == complex(grid.size)
        brute = signal_factors_bruteforce(build_psi(tau, nu, grid, waveform))
        worst = max(worst, abs(brute.r00 - grid.size) / grid.size)
    detail = "" if exact else "closed-form r00 differs from MN"
    return CheckResult("r00_equals_mn", exact and worst < 1e-10, worst, 1e-10, len(cases), detail)

def check_psi_identity(max_size: int = 1024) -> CheckResult:
    """Psi(0, 0) is the identity"""
    worst, count = 0.0, 0
    size = 2
    while size * size <= max_size:
        psi = build_psi_otfs(0.0, 0.0, _unit_grid(size, size)).psi
        worst = max(worst, float(np.max(np.abs(psi - np.eye(size * size)))))
        count += 1
        size *= 2
    return CheckResult("psi_identity", worst < 1e-12, worst, 1e-12, count)

# Fisher information

def _signal_mean(theta: np.ndarray, grid: OtfsGrid, m_t: int, w: np.ndarray) -> np.ndarray:
    """beta (h_r kron Psi) (h_t^T conj(w)) for theta = [omega_r, omega_t, tau, nu, beta_R, beta_I]"""
    omega_r, omega_t, tau, nu, beta_r, beta_i = theta
    psi = build_psi_otfs(tau, nu, grid).psi
    transmit = array_response(omega_t, m_t) @ np.conj(w)
    return (beta_r + 1j * beta_i) * transmit * np.kron(array_response(omega_r, m_t)[:, None], psi)

def finite_difference_fim(theta: np.ndarray, grid: OtfsGrid, m_t: int, w: np.ndarray,
                          noise_power: float = 1.0) -> np.ndarray:
    """(2/sigma^2) Re Tr(dG_i^H dG_j) with central differences of the signal mean"""
    steps = np.array([1e-6, 1e-6, 1e-6 / (grid.M * grid.delta_f), 1e-6 / (grid.N * grid.T), 1e-3, 1e-3])
    derivatives = []
    for i, step in enumerate(steps):
        e = np.zeros(6)
        e[i] = step
        derivatives.append(
            (_signal_mean(theta + e, grid, m_t, w) - _signal_mean(theta - e, grid, m_t, w)) / (2.0 * step)
        )
    F = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            F[i, j] = 2.0 / noise_power * np.real(np.vdot(derivatives[i], derivatives[j]))
    return F

def _normalized_error(F: np.ndarray, reference: np.ndarray) -> float:
    scale = np.sqrt(np.outer(np.diag(reference), np.diag(reference)))
    return float(np.max(np.abs(F - reference) / np.maximum(scale, 1e-300)))

def _random_path(rng: np.random.Generator, grid: OtfsGrid) -> Tuple[PathParams, np.ndarray]:
    # fractional taps away from integers keep l_tau fixed under the difference step
    tap = rng.integers(0, grid.M - 1) + rng.uniform(0.2, 0.8)
    gain = rng.uniform(0.5, 1.5) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
    theta = np.array([
        rng.uniform(-np.pi, np.pi),
        rng.uniform(-np.pi, np.pi),
        tap / (grid.M * grid.delta_f),
        rng.uniform(-1.5, 1.5) / (grid.N * grid.T),
        gain.real,
        gain.imag,
    ])
    path = PathParams(
        aoa=theta[0], aod=theta[1], delay=theta[2], doppler=theta[3],
        gain=float(abs(theta[4] + 1j * theta[5])),
        unit_tx=np.array([1.0, 0.0]), unit_rx=np.array([1.0, 0.0]),
        d_tx=1.0, d_rx=1.0, xi=1.0,
    )
    return path, theta

def check_fim_finite_difference(paths: int = 10, seed: int = 0) -> List[CheckResult]:
    """fim_full against finite differences of the signal mean, M = N = 4, Mt = 2"""
    grid = _unit_grid(4, 4)
    m_t = 2
    rng = spawn_rng(seed, 7)
    worst = {'derived': 0.0, 'printed': 0.0}
    for _ in range(paths):
        path, theta = _random_path(rng, grid)
        w = rng.standard_normal(m_t) + 1j * rng.standard_normal(m_t)
        gram = np.outer(w, w.conj())
        factors = signal_factors_bruteforce(build_psi_otfs(path.delay, path.doppler, grid))
        reference = finite_difference_fim(theta, grid, m_t, w)
        gain = complex(theta[4], theta[5])
        for convention in worst:
            analytic = fim_full(path, gram, factors, m_t, 1.0, gain=gain, convention=convention)
            worst[convention] = max(worst[convention], _normalized_error(analytic, reference))
    return [
        CheckResult("fim_finite_difference", worst['derived'] < 1e-3, worst['derived'], 1e-3, paths),
        CheckResult(
            "fim_printed_convention", True, worst['printed'], 1e-3, paths,
            detail="AoD cross terms with the printed sign convention", informational=True,
        ),
    ]

# Waveforms

def check_prelog(size: int = 128) -> CheckResult:
    """omega_otfs = 0.9922, omega_ofdm = 0.5 and their ratio 1.984 at M = N = N_cp"""
    grid = _unit_grid(size, size, n_cp=size)
    otfs = prelog_factor(grid, Waveform.OTFS)
    ofdm = prelog_factor(grid, Waveform.OFDM)
    ratio = otfs / ofdm
    ok = abs(otfs - 0.9922) <= 1e-4 and ofdm == 0.5 and abs(ratio - 1.984) <= 1e-3
    return CheckResult("prelog_factors", ok, ratio, 1.984, 1, f"otfs={otfs:.4f} ofdm={ofdm:.4f}")

def check_waveform_factors(size: int = 128) -> CheckResult:
    """OFDM/OTFS ratios of r20, r02, d33 and d44 within 5% of 1"""
    grid = _unit_grid(size, size, n_cp=size)
    otfs = signal_factors_otfs(grid)
    ofdm = signal_factors_ofdm(grid)
    d_otfs = approx_coefficients(otfs, 1)
    d_ofdm = approx_coefficients(ofdm, 1)
    ratios = {
        'r20': ofdm.r20.real / otfs.r20.real,
        'r02': ofdm.r02.real / otfs.r02.real,
        'd33': d_ofdm['d33'] / d_otfs['d33'],
        'd44': d_ofdm['d44'] / d_otfs['d44'],
    }
    worst = max(abs(r - 1.0) for r in ratios.values())
    detail = " ".join(f"{k}={v:.4f}" for k, v in ratios.items())
    return CheckResult("waveform_factor_ratio", worst <= 0.05, worst, 0.05, 1, detail)

# Bounds

def check_approx_bound(instances: int = 100, seed: int = 0) -> List[CheckResult]:
    """Approximate PEB never below the exact PEB (reference scene at M = N = 16, equal power).

    The printed d-coefficients are scored alongside: the largest ratio of
    printed to derived approximate PEB, and how often they undercut the
    exact PEB.
    """
    grid = GridConfig(subcarriers=16, symbols=16, bandwidth_hz=8e6)
    config = ScenarioConfig.reference(grid=grid)
    violations = 0
    printed_violations, worst_ratio = 0, 0.0
    for i in range(instances):
        scenario = generate_scenario(config, int(spawn_rng(seed, 11, i).integers(2 ** 63)))
        allocation = equal_power_setup(scenario)
        exact = position_fim(scenario, allocation, BoundMode.EXACT)
        approx = position_fim(scenario, allocation, BoundMode.APPROX)
        printed = position_fim(scenario, allocation, BoundMode.APPROX, convention="printed")
        for e, a in zip(exact, printed):
            if math.isfinite(e.peb) and math.isfinite(a.peb) and a.peb < e.peb * (1.0 - 1e-9):
                printed_violations += 1
        for a, b in zip(approx, printed):
            if math.isfinite(a.peb) and math.isfinite(b.peb) and a.peb > 0:
                worst_ratio = max(worst_ratio, b.peb / a.peb)
        for e, a in zip(exact, approx):
            if math.isinf(e.peb):
                bad = not math.isinf(a.peb)
            else:
                bad = a.peb < e.peb * (1.0 - 1e-9)
            if bad:
                violations += 1
                logger.warning(f"Instance {i}, target {e.target}: approx PEB {a.peb:.4e} < exact {e.peb:.4e}")
    return [
        CheckResult("approx_peb_upper_bound", violations == 0, violations, 0, instances),
        CheckResult(
            "approx_printed_convention", True, worst_ratio, 1.0, instances,
            detail=f"printed d-coefficients: {printed_violations} PEBs below exact", informational=True,
        ),
    ]

def check_aoa_geometry(config: ScenarioConfig) -> CheckResult:
    """PEB(90) < PEB(60) < PEB(30) and zero AoA gradient on the array axis"""
    pebs = {}
    for angle in (30.0, 60.0, 90.0):
        scenario = aoa_scenario(config, angle)
        allocation = sensing_only_allocation(scenario, [0], [1])
        pebs[angle] = position_fim(scenario, allocation, BoundMode.EXACT)[0].peb
    axis_zero = True
    for angle in (0.0, 180.0):
        scenario = aoa_scenario(config, angle)
        jacobian = position_jacobian(
            scenario.path(0, 1, 0), scenario.aps[0], scenario.aps[1], scenario.targets[0], scenario.grid,
        )
        axis_zero = axis_zero and bool(np.all(jacobian[0] == 0.0))
    ordered = pebs[90.0] < pebs[60.0] < pebs[30.0]
    detail = " ".join(f"PEB({int(a)})={p:.4e}" for a, p in pebs.items())
    if not axis_zero:
        detail += " AoA gradient nonzero on the array axis"
    return CheckResult("aoa_ordering", ordered and axis_zero, pebs[90.0] / pebs[30.0], 1.0, 5, detail)

# Optimizer

def _desk(config: SimulationConfig) -> SimulationConfig:
    return config.model_copy(update={'scenario': ScenarioConfig.desk()})

def check_power_allocation(config: SimulationConfig, instances: int = 20, seed: int = 0) -> CheckResult:
    """z nondecreasing, at most 50 iterations and a feasible final allocation"""
    config = _desk(config)
    failures, solved, skipped = [], 0, 0
    for i in range(instances):
        scenario = generate_scenario(config.scenario, int(spawn_rng(seed, 13, i).integers(2 ** 63)))
        modes = modes_from_receivers(scenario.num_aps, closest_receivers(scenario))
        try:
            allocation = power_allocation_fixed_modes(scenario, modes, config)
        except InfeasibleProblemError as e:
            logger.debug(f"Instance {i} infeasible (certificate {e.certificate:.3e} m^2)")
            skipped += 1
            continue
        solved += 1
        z = [row['z'] for row in allocation.trace]
        monotone = all(b >= a - 1e-6 * max(1.0, abs(a)) for a, b in zip(z, z[1:]))
        audit = feasibility_audit(scenario, allocation, config)
        if not monotone or not audit['feasible'] or allocation.iterations > 50:
            failures.append(i)
    detail = f"{solved} solved, {skipped} infeasible"
    if failures:
        detail += f", failing instances {failures}"
    ok = solved > 0 and not failures
    return CheckResult("power_allocation", ok, len(failures), 0, instances, detail)

def check_subproblem_forms(config: SimulationConfig, instances: int = 20, seed: int = 0) -> CheckResult:
    """Smooth and Schur representations of the power subproblem reach the same optimum"""
    config = _desk(config)
    worst, compared = 0.0, 0
    for i in range(instances):
        scenario = generate_scenario(config.scenario, int(spawn_rng(seed, 17, i).integers(2 ** 63)))
        data = build_problem_data(scenario, config)
        receivers = closest_receivers(scenario)
        transmitters = [p for p in range(scenario.num_aps) if p not in receivers]
        modes = modes_from_receivers(scenario.num_aps, receivers)
        try:
            floor, floor_sense = crlb_floor(data, transmitters, receivers, config)
        except InfeasibleProblemError:
            continue
        if floor > 1.0 - config.solver.feasibility_margin:
            continue
        share = 1.0 / (data.num_users + data.num_targets)
        x_comm = np.zeros((data.num_aps, data.num_users))
        x_comm[transmitters] = share
        y = quadratic_transform_weights(data, modes, x_comm, floor_sense)
        program, _ = build_power_program(data, transmitters, receivers, y, x_comm, floor_sense,
                                         config.solver.feasibility_margin)
        smooth = solve_convex_subproblem(program, CrlbForm.SMOOTH)
        schur = solve_convex_subproblem(program, CrlbForm.SCHUR)
        worst = max(worst, abs(smooth.objective - schur.objective) / max(1.0, abs(smooth.objective)))
        compared += 1
    ok = compared > 0 and worst < 1e-5
    return CheckResult("subproblem_forms", ok, worst, 1e-5, compared, f"{instances - compared} skipped")

def check_scheme_ordering(config: SimulationConfig, instances: int = 20, seed: int = 0) -> CheckResult:
    """min SE of JAP >= CAP >= RAP on at least 90% of the instances"""
    config = _desk(config)
    threshold = config.sensing.peb_threshold_m
    ordered, counted = 0, 0
    for j in range(instances):
        result = run_trial(ExperimentKind.SE_VS_PEB_BUDGET, config, 0, threshold, j, seed)
        se = {k: result.metrics.get(f'se_{k}', float('nan')) for k in ('jap', 'cap', 'rap')}
        if math.isnan(se['cap']):
            continue
        counted += 1
        rap = float('-inf') if math.isnan(se['rap']) else se['rap']
        jap = float('-inf') if math.isnan(se['jap']) else se['jap']
        if jap >= se['cap'] - 1e-6 and se['cap'] >= rap - 1e-6:
            ordered += 1
    fraction = ordered / counted if counted else 0.0
    return CheckResult("scheme_ordering", counted > 0 and fraction >= 0.9, fraction, 0.9, counted)

def check_binary_gap(config: SimulationConfig, instances: int = 5, seed: int = 0) -> CheckResult:
    """Relaxed modes end close to binary (gap < 1e-3) on at least 90% of the instances"""
    config = _desk(config)
    penalty = config.solver.penalty
    small, counted = 0, 0
    for j in range(instances):
        result = run_trial(ExperimentKind.CONVERGENCE, config, 0, penalty, j, seed)
        if result.status != "ok":
            continue
        counted += 1
        gap = result.metrics.get('binary_gap', float('nan'))
        if np.isfinite(gap) and gap < 1e-3:
            small += 1
    fraction = small / counted if counted else 0.0
    return CheckResult("binary_gap", counted > 0 and fraction >= 0.9, fraction, 0.9, counted)

# Estimator

def _static_scene(config: ScenarioConfig, tx_position, rx_positions, target_position, center,
                  half_width: float, seed: int):
    """AP 0 transmits, the others receive; one static target in a hotspot around ``center``"""
    aps = [AccessPoint(0, np.asarray(tx_position, dtype=float), np.array([1.0, 0.0]),
                       config.antennas, config.max_power_w)]
    for i, position in enumerate(rx_positions, start=1):
        aps.append(AccessPoint(i, np.asarray(position, dtype=float), np.array([0.0, 1.0]),
                               config.antennas, config.max_power_w))
    target = Target(
        index=0,
        position=np.asarray(target_position, dtype=float),
        velocity=np.zeros(2),
        rcs_variance=config.rcs_variance_m2,
        hotspot_center=np.asarray(center, dtype=float),
        hotspot_half_width=half_width,
    )
    return assemble_scenario(config, aps, [target], seed=seed)

def check_noiseless_recovery(config: SimulationConfig, instances: int = 100, seed: int = 0) -> CheckResult:
    """A noiseless echo from a target on a grid node is located exactly"""
    scene_config = ScenarioConfig.desk(num_users=0, noise_power_dbm=-300.0, static_targets=True)
    config = config.model_copy(update={'scenario': scene_config})
    half = scene_config.hotspot_size_m / 2.0
    worst, missed = 0.0, 0
    for i in range(instances):
        rng = spawn_rng(seed, 19, i)
        center = np.round(rng.uniform(half, scene_config.size_m - half, 2))
        tx, rx = rng.uniform(0.0, scene_config.size_m, (2, 2))
        if min(np.linalg.norm(tx - center), np.linalg.norm(rx - center)) < 2.0 * half:
            tx, rx = center + np.array([3.0 * half, 0.0]), center + np.array([0.0, -3.0 * half])
        scenario = _static_scene(scene_config, tx, [rx], center, center, half, seed=i)
        allocation = sensing_only_allocation(scenario, [0], [1])
        echo = synthesize_echo(scenario, allocation, spawn_rng(seed, 23, i))
        estimate = estimate_positions(echo, scenario, config).positions[0]
        error = float(np.linalg.norm(estimate - center))
        worst = max(worst, error)
        if error > 1e-6:
            missed += 1
    return CheckResult("noiseless_recovery", missed == 0, worst, 1e-6, instances, f"{missed} missed")

def check_rmse_floor(config: SimulationConfig, instances: int = 500, seed: int = 0) -> CheckResult:
    """High-SNR RMSE equals the grid resolution floor step/sqrt(6) within 10%"""
    step = 1.0
    scene_config = ScenarioConfig.desk(antennas=1, num_users=0, noise_power_dbm=-300.0, static_targets=True)
    estimator = config.estimator.model_copy(update={'search_steps': [step]})
    config = config.model_copy(update={'scenario': scene_config, 'estimator': estimator})
    # tau M delta_f = 3.5 on both bistatic paths: fractional, well inside the block
    d = 65.58
    tx = d / math.sqrt(2.0) * np.array([1.0, 1.0])
    receivers = [d / math.sqrt(2.0) * np.array([1.0, -1.0]), d / math.sqrt(2.0) * np.array([-1.0, 1.0])]

    estimates, truths = [], []
    for i in range(instances):
        rng = spawn_rng(seed, 29, i)
        truth = rng.uniform(-0.5 * step, 0.5 * step, 2)
        scenario = _static_scene(scene_config, tx, receivers, truth, np.zeros(2), step, seed=i)
        allocation = sensing_only_allocation(scenario, [0], [1, 2])
        echo = synthesize_echo(scenario, allocation, spawn_rng(seed, 31, i))
        estimates.append(estimate_positions(echo, scenario, config).positions[0])
        truths.append(truth)
    measured = rmse(np.array(estimates) - np.array(truths), np.zeros(2))
    floor = step / math.sqrt(6.0)
    deviation = abs(measured - floor) / floor
    return CheckResult("rmse_floor", deviation <= 0.1, measured, floor, instances,
                       f"relative deviation {deviation:.3f}")

# Suite

Check = Callable[[SimulationConfig, bool, int], object]

def _suite() -> List[Tuple[str, Check]]:
    return [
        ("signal_factors", lambda c, q, s: check_signal_factors((2, 4) if q else (2, 4, 8))),
        ("r00_equals_mn", lambda c, q, s: check_unit_energy((2, 4) if q else (2, 4, 8))),
        ("psi_identity", lambda c, q, s: check_psi_identity(256 if q else 1024)),
        ("fim_finite_difference", lambda c, q, s: check_fim_finite_difference(3 if q else 10, s)),
        ("prelog_factors", lambda c, q, s: check_prelog()),
        ("waveform_factor_ratio", lambda c, q, s: check_waveform_factors()),
        ("approx_peb_upper_bound", lambda c, q, s: check_approx_bound(10 if q else 100, s)),
        ("aoa_ordering", lambda c, q, s: check_aoa_geometry(ScenarioConfig.desk())),
        ("power_allocation", lambda c, q, s: check_power_allocation(c, 3 if q else 20, s)),
        ("subproblem_forms", lambda c, q, s: check_subproblem_forms(c, 3 if q else 20, s)),
        ("scheme_ordering", lambda c, q, s: check_scheme_ordering(c, 3 if q else 20, s)),
        ("binary_gap", lambda c, q, s: check_binary_gap(c, 2 if q else 5, s)),
        ("noiseless_recovery", lambda c, q, s: check_noiseless_recovery(c, 10 if q else 100, s)),
        ("rmse_floor", lambda c, q, s: check_rmse_floor(c, 100 if q else 500, s)),
    ]

CHECK_NAMES = tuple(name for name, _ in _suite())

def run_validation(config: Optional[SimulationConfig] = None, quick: bool = False, seed: int = 0,
                   only: Optional[List[str]] = None) -> List[CheckResult]:
    """Run the suite (or the named checks) and return one result per check"""
    config = config or SimulationConfig()
    unknown = set(only or ()) - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"Unknown checks: {sorted(unknown)}")
    results: List[CheckResult] = []
    for name, check in _suite():
        if only and name not in only:
            continue
        logger.info(f"Running check '{name}'{' (quick)' if quick else ''}")
        try:
            outcome = check(config, quick, seed)
        except SimulationError as e:
            logger.error(f"Check '{name}' raised {type(e).__name__}: {e}")
            outcome = CheckResult(name, False, float('nan'), float('nan'), 0, f"{type(e).__name__}: {e}")
        for result in outcome if isinstance(outcome, list) else [outcome]:
            level = "INFO" if result.passed else "WARNING"
            logger.log(level, f"{result.name}: {'pass' if result.passed else 'FAIL'} "
                              f"(value {result.value:.4g}, threshold {result.threshold:.4g}) {result.detail}")
            results.append(result)
    return results

def validation_frame(results: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([{
        'check': r.name,
        'passed': r.passed,
        'value': r.value,
        'threshold': r.threshold,
        'instances': r.instances,
        'informational': r.informational,
        'detail': r.detail,
    } for r in results])

def write_validation(results: List[CheckResult], output_dir: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "validation.csv")
    validation_frame(results).to_csv(path, index=False, float_format='%.12g', lineterminator='\n')
    return path

def all_passed(results: List[CheckResult]) -> bool:
    return all(r.passed for r in results if not r.informational)

def summary_counts(results: List[CheckResult]) -> Dict[str, int]:
    graded = [r for r in results if not r.informational]
    return {'checks': len(graded), 'passed': sum(r.passed for r in graded)}
