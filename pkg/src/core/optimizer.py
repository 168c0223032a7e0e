"""
AP mode selection and power allocation.

Problems are solved in dimensionless variables

    x_pq = eta_pq b_pq / P_d,   x_pv = eta_pv b_pv / P_d

so a transmitting AP at full power has sum_q x_pq + sum_v x_pv = 1, SINR
terms are normalised by sigma_w^2 and the Fisher blocks are scaled by gamma_s
so the CRLB constraint reads Tr(F^-1) <= 1.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.core.allocation import ResourceAllocation, modes_from_receivers
from src.core.comms import (
    CommCoefficients, ap_power, comm_coefficients, sinr_all, spectral_efficiency,
)
from src.core.convex import (
    ConvexProgram, ConvexSolution, SmoothConstraint, TraceInverseConstraint, solve_convex_subproblem,
)
from src.core.exceptions import (
    ConfigurationError, ConvergenceFailure, InfeasibleProblemError, SingularInformationError,
)
from src.core.fisher import approx_path_fim, position_fim, signal_factors
from src.core.scenario import Scenario
from src.utils.config import SimulationConfig
from src.utils.constants import BoundMode, Scheme

__all__ = [
    'PowerProblemData', 'ScaState', 'ModeSplit', 'ResourceAllocation',
    'approx_blocks', 'build_problem_data', 'fisher_with_modes', 'crlb_floor',
    'build_power_program', 'power_allocation_fixed_modes', 'closest_ap_selection',
    'solve_joint', 'random_ap_selection', 'run_scheme', 'feasibility_audit',
    'solve_convex_subproblem',
]

def approx_blocks(scenario: Scenario) -> np.ndarray:
    """F-hat_{p,r,v} per unit eta_pv for every AP pair, shape (N_AP, N_AP, T_g, 2, 2)"""
    n_ap, n_targets = scenario.num_aps, scenario.num_targets
    blocks = np.zeros((n_ap, n_ap, n_targets, 2, 2))
    for v, target in enumerate(scenario.targets):
        for p in range(n_ap):
            for r in range(n_ap):
                path = scenario.path(p, r, v)
                factors = signal_factors(scenario.grid, scenario.waveform, path.delay)
                blocks[p, r, v] = approx_path_fim(
                    path, scenario.aps[p], scenario.aps[r], target, scenario.grid,
                    factors, scenario.antennas, scenario.noise_power,
                )
    return blocks

def fisher_with_modes(blocks: np.ndarray, modes, sensing_powers, v: int) -> np.ndarray:
    """F_v = sum_p sum_r a_p (1 - a_r) eta_pv F-hat_{p,r,v}, not linearised"""
    a = np.asarray(modes, dtype=float)
    eta = np.asarray(sensing_powers, dtype=float)
    weights = np.outer(a * eta[:, v], 1.0 - a)
    return np.einsum('pr,prij->ij', weights, blocks[:, :, v])

@dataclass(eq=False)
class PowerProblemData:
    """Scaled coefficients shared by every subproblem of one scenario"""
    gains: np.ndarray         # G_pq = sqrt(P_d b_pq) / sigma, (N_AP, K_u)
    comm_cross: np.ndarray    # P_d c_pq,q' / (b_pq' sigma^2), (N_AP, K_u, K_u)
    sense_cross: np.ndarray   # P_d c_pq,v / (b_pv sigma^2), (N_AP, K_u, T_g)
    fisher: np.ndarray        # gamma_s P_d / b_pv * F-hat_{p,r,v}, (N_AP, N_AP, T_g, 2, 2)
    coeffs: CommCoefficients
    blocks: np.ndarray        # unscaled F-hat per unit eta
    max_power: float
    crlb_budget: float

    @property
    def num_aps(self) -> int:
        return self.gains.shape[0]

    @property
    def num_users(self) -> int:
        return self.gains.shape[1]

    @property
    def num_targets(self) -> int:
        return self.fisher.shape[2]

    def interference(self, x_comm: np.ndarray, x_sense: np.ndarray) -> np.ndarray:
        """mu_pq / sigma^2, shape (N_AP, K_u)"""
        return (np.einsum('pqr,pr->pq', self.comm_cross, x_comm)
                + np.einsum('pqv,pv->pq', self.sense_cross, x_sense))

    def numerators(self, modes, x_comm) -> np.ndarray:
        """sum_p G_pq sqrt(a_p x_pq), shape (K_u,)"""
        a = np.asarray(modes, dtype=float)
        return np.sum(self.gains * np.sqrt(np.clip(a[:, None] * x_comm, 0.0, None)), axis=0)

    def sinr(self, modes, x_comm, x_sense) -> np.ndarray:
        a = np.asarray(modes, dtype=float)
        return self.numerators(a, x_comm) ** 2 / (a @ self.interference(x_comm, x_sense) + 1.0)

    def fisher_matrix(self, modes, x_sense, v: int) -> np.ndarray:
        """gamma_s F_v in scaled units"""
        a = np.asarray(modes, dtype=float)
        weights = np.outer(a * x_sense[:, v], 1.0 - a)
        return np.einsum('pr,prij->ij', weights, self.fisher[:, :, v])

    def to_powers(self, x_comm: np.ndarray, x_sense: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        with np.errstate(divide='ignore', invalid='ignore'):
            comm = np.where(self.coeffs.b_comm > 0, x_comm * self.max_power / self.coeffs.b_comm, 0.0)
            sensing = np.where(self.coeffs.b_sense > 0, x_sense * self.max_power / self.coeffs.b_sense, 0.0)
        return np.clip(comm, 0.0, None), np.clip(sensing, 0.0, None)

    def from_powers(self, comm: np.ndarray, sensing: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return comm * self.coeffs.b_comm / self.max_power, sensing * self.coeffs.b_sense / self.max_power

def build_problem_data(scenario: Scenario, config: SimulationConfig,
                       coeffs: Optional[CommCoefficients] = None,
                       blocks: Optional[np.ndarray] = None) -> PowerProblemData:
    if scenario.num_targets == 0:
        raise ConfigurationError("Power allocation needs at least one sensing target")
    coeffs = coeffs or comm_coefficients(scenario)
    blocks = approx_blocks(scenario) if blocks is None else blocks
    p_d = scenario.max_power
    sigma2 = scenario.noise_power
    gamma = config.sensing.crlb_budget

    with np.errstate(divide='ignore', invalid='ignore'):
        per_user = np.where(coeffs.b_comm > 0, p_d / (coeffs.b_comm * sigma2), 0.0)
        per_beam = np.where(coeffs.b_sense > 0, p_d / (coeffs.b_sense * sigma2), 0.0)
    return PowerProblemData(
        gains=np.sqrt(p_d * coeffs.b_comm / sigma2),
        comm_cross=coeffs.c_comm * per_user[:, None, :],
        sense_cross=coeffs.c_sense * per_beam[:, None, :],
        fisher=gamma * blocks * (per_beam * sigma2)[:, None, :, None, None],
        coeffs=coeffs,
        blocks=blocks,
        max_power=p_d,
        crlb_budget=gamma,
    )

# CRLB floor (infeasibility certificate)

def _solve(program: ConvexProgram, solver) -> ConvexSolution:
    return solve_convex_subproblem(
        program, solver.crlb_form,
        feasibility_tolerance=solver.feasibility_tolerance, kkt_tolerance=solver.kkt_tolerance,
    )

def _max_crlb(constraints: Sequence[TraceInverseConstraint], x: np.ndarray) -> float:
    """max_v Tr(F_v(x)^-1), inf outside the domain"""
    if not all(c.in_domain(x) for c in constraints):
        return float('inf')
    return max(float(np.trace(np.linalg.inv(c.matrix(x)))) for c in constraints)

def crlb_floor(data: PowerProblemData, transmitters: Sequence[int], receivers: Sequence[int],
               config: SimulationConfig) -> Tuple[float, np.ndarray]:
    """min over sensing-only allocations of max_v Tr(F_v^-1), in units of gamma_s.

    Returns the minimum and the optimal x_pv (N_AP, T_g). The CRLB budget can
    be met for this mode split only if the minimum is at most 1. The program
    is posed on Fisher blocks normalised at the equal split, so it is the
    same program for every budget. The floor is the max CRLB reached at the
    returned point; after a solver breakdown that is the better of the
    solver's last point and the equal split.
    """
    tx, rx = list(transmitters), list(receivers)
    n_t = data.num_targets
    index = {(p, v): i for i, (p, v) in enumerate((p, v) for p in tx for v in range(n_t))}
    slack = len(index)
    n = slack + 1

    start = np.zeros(n)
    for (p, v), i in index.items():
        start[i] = 1.0 / n_t
    # unit of the blocks here is m^-2 per unit x, independent of gamma_s
    unscaled = data.fisher / data.crlb_budget
    slopes = [{index[p, v]: unscaled[p, rx, v].sum(axis=0) for p in tx} for v in range(n_t)]
    equal_split = [TraceInverseConstraint(np.zeros((2, 2)), s, slack=slack) for s in slopes]
    if any(np.linalg.eigvalsh(c.matrix(start))[0] <= 0 for c in equal_split):
        raise InfeasibleProblemError(
            f"Mode split Tx={tx} Rx={rx} cannot localise every target", certificate=float('inf'),
        )
    reference = _max_crlb(equal_split, start)
    constraints = [
        TraceInverseConstraint(np.zeros((2, 2)), {k: reference * F for k, F in s.items()}, slack=slack,
                               name=f"crlb_{v}")
        for v, s in enumerate(slopes)
    ]
    start[slack] = 2.0 * _max_crlb(constraints, start) + 1.0

    rows, h = [], []
    for p in tx:
        row = np.zeros(n)
        for v in range(n_t):
            row[index[p, v]] = 1.0
        rows.append(row)
        h.append(1.0)
    rows.append(-np.eye(n))
    h.extend([0.0] * n)
    objective = np.zeros(n)
    objective[slack] = -1.0

    program = ConvexProgram(n, objective, np.vstack(rows), np.array(h), [], constraints, start)
    try:
        point = _solve(program, config.solver).x
    except ConvergenceFailure as e:
        point = start
        candidate = None if e.best_iterate is None else np.asarray(e.best_iterate, dtype=float)
        if candidate is not None and np.all(candidate >= -1e-12) and np.all(program.G[:len(tx)] @ candidate <= 1.0 + 1e-9):
            if _max_crlb(constraints, candidate) < _max_crlb(constraints, start):
                point = candidate
        logger.warning(f"CRLB floor solve for Rx={rx} did not converge ({e}); using the best point seen")

    x_sense = np.zeros((data.num_aps, n_t))
    for (p, v), i in index.items():
        x_sense[p, v] = max(point[i], 0.0)
    floor_m2 = _max_crlb(equal_split, np.append(x_sense[tx].ravel(), 0.0))
    return floor_m2 / data.crlb_budget, x_sense

# Power allocation with fixed modes

def build_power_program(data: PowerProblemData, transmitters: Sequence[int], receivers: Sequence[int],
                        y: np.ndarray, start_comm: np.ndarray, start_sense: np.ndarray,
                        margin: float = 0.0) -> Tuple[ConvexProgram, Dict]:
    """Quadratic-transform subproblem for fixed modes and fixed y.

    Variables: s_pq = sqrt(x_pq), x_pv for transmitting APs, and z. The SINR
    surrogate 2 y N - y^2 D is concave in (s, x), so every constraint is a
    smooth convex one.
    """
    tx, rx = list(transmitters), list(receivers)
    n_u, n_t = data.num_users, data.num_targets
    s_index = {(p, q): i for i, (p, q) in enumerate((p, q) for p in tx for q in range(n_u))}
    x_index = {(p, v): len(s_index) + i for i, (p, v) in enumerate((p, v) for p in tx for v in range(n_t))}
    z = len(s_index) + len(x_index)
    n = z + 1

    def unit(i):
        e = np.zeros(n)
        e[i] = 1.0
        return e

    smooth = []
    for p in tx:
        linear = sum((unit(x_index[p, v]) for v in range(n_t)), np.zeros(n))
        squares = [(unit(s_index[p, q]), 0.0) for q in range(n_u)]
        smooth.append(SmoothConstraint(squares, linear, -1.0, name=f"power_{p}"))

    for q in range(n_u):
        yq = float(y[q])
        linear = unit(z)
        squares = []
        for p in tx:
            linear = linear - 2.0 * yq * data.gains[p, q] * unit(s_index[p, q])
            for v in range(n_t):
                linear = linear + yq ** 2 * data.sense_cross[p, q, v] * unit(x_index[p, v])
            for r in range(n_u):
                weight = data.comm_cross[p, q, r]
                if weight > 0:
                    squares.append((yq * np.sqrt(weight) * unit(s_index[p, r]), 0.0))
        smooth.append(SmoothConstraint(squares, linear, yq ** 2, name=f"sinr_{q}"))

    trace_inverse = []
    for v in range(n_t):
        slopes = {x_index[p, v]: data.fisher[p, rx, v].sum(axis=0) for p in tx}
        trace_inverse.append(TraceInverseConstraint(np.zeros((2, 2)), slopes, bound=1.0 - margin, name=f"crlb_{v}"))

    objective = unit(z)
    G = -np.eye(n)
    h = np.zeros(n)
    if n_u == 0:
        G = np.vstack([G, unit(z)])
        h = np.append(h, 0.0)

    start = np.zeros(n)
    for (p, q), i in s_index.items():
        start[i] = np.sqrt(max(start_comm[p, q], 0.0))
    for (p, v), i in x_index.items():
        start[i] = max(start_sense[p, v], 0.0)

    program = ConvexProgram(n, objective, G, h, smooth, trace_inverse, start)
    return program, {'s': s_index, 'x': x_index, 'z': z}

def _unpack_power(data: PowerProblemData, x: np.ndarray, layout: Dict) -> Tuple[np.ndarray, np.ndarray, float]:
    x_comm = np.zeros((data.num_aps, data.num_users))
    x_sense = np.zeros((data.num_aps, data.num_targets))
    for (p, q), i in layout['s'].items():
        x_comm[p, q] = max(x[i], 0.0) ** 2
    for (p, v), i in layout['x'].items():
        x_sense[p, v] = max(x[i], 0.0)
    # round-off can push an AP marginally past P_d
    totals = x_comm.sum(axis=1) + x_sense.sum(axis=1)
    scale = np.where(totals > 1.0, 1.0 / np.maximum(totals, 1e-300), 1.0)
    return x_comm * scale[:, None], x_sense * scale[:, None], float(x[layout['z']])

def quadratic_transform_weights(data: PowerProblemData, modes, x_comm, x_sense) -> np.ndarray:
    """y_q = N_q / (sum_p a_p mu_pq / sigma^2 + 1) for the current powers"""
    a = np.asarray(modes, dtype=float)
    return data.numerators(a, x_comm) / (a @ data.interference(x_comm, x_sense) + 1.0)

def _allocation_from_scaled(data: PowerProblemData, modes, x_comm, x_sense, **kwargs) -> ResourceAllocation:
    comm, sensing = data.to_powers(x_comm, x_sense)
    return ResourceAllocation.from_blocks(np.asarray(modes, dtype=float), comm, sensing, **kwargs)

def _split(modes) -> Tuple[List[int], List[int]]:
    modes = np.asarray(modes)
    return [int(p) for p in np.flatnonzero(modes >= 0.5)], [int(p) for p in np.flatnonzero(modes < 0.5)]

def power_allocation_fixed_modes(scenario: Scenario, modes, config: SimulationConfig,
                                 data: Optional[PowerProblemData] = None) -> ResourceAllocation:
    """Max-min SINR power allocation for a fixed binary mode vector.

    Alternates the closed-form y update with the convex subproblem until z
    changes by at most the tolerance. z is nondecreasing across iterations.
    """
    modes = np.where(np.asarray(modes, dtype=float) >= 0.5, 1.0, 0.0)
    tx, rx = _split(modes)
    if not tx or not rx:
        raise ConfigurationError("Power allocation needs at least one transmitting and one receiving AP")
    data = data or build_problem_data(scenario, config)
    solver = config.solver
    margin = solver.feasibility_margin

    floor, floor_sense = crlb_floor(data, tx, rx, config)
    certificate = floor * data.crlb_budget
    if floor > 1.0 - margin:
        raise InfeasibleProblemError(
            f"CRLB budget {data.crlb_budget:.3e} m^2 unreachable with Rx={rx}: "
            f"best max CRLB is {certificate:.3e} m^2",
            certificate=certificate,
        )

    n_u, n_t = data.num_users, data.num_targets
    if n_u == 0:
        return _allocation_from_scaled(
            data, modes, np.zeros((data.num_aps, 0)), floor_sense,
            iterations=0, feasible=True, certificate=certificate,
        )

    x_comm = np.zeros((data.num_aps, n_u))
    x_sense = np.zeros((data.num_aps, n_t))
    share = 1.0 / (n_u + n_t)
    x_comm[tx] = share
    x_sense[tx] = share

    # sensing floor with silent users: feasible whatever the subproblems do
    kept_comm, kept_sense = np.zeros((data.num_aps, n_u)), floor_sense
    z_prev = 0.0
    trace = []
    kkt = float('nan')
    iterations = 0
    for iteration in range(1, solver.qt_max_iterations + 1):
        y = quadratic_transform_weights(data, modes, x_comm, x_sense)
        program, layout = build_power_program(data, tx, rx, y, x_comm, x_sense, margin)
        if not program.in_domain(program.start):
            program, layout = build_power_program(data, tx, rx, y, x_comm, floor_sense, margin)
        try:
            solution = _solve(program, solver)
        except ConvergenceFailure as e:
            logger.warning(f"Power allocation stopped at iteration {iteration}: {e}")
            break
        x_comm, x_sense, z = _unpack_power(data, solution.x, layout)
        kept_comm, kept_sense = x_comm, x_sense
        kkt = solution.kkt_residual
        iterations = iteration
        min_sinr = float(data.sinr(modes, x_comm, x_sense).min())
        trace.append({'iteration': iteration, 'z': z, 'min_sinr': min_sinr, 'kkt_residual': kkt})
        logger.debug(f"Power allocation iteration {iteration}: z = {z:.6g}, min SINR = {min_sinr:.6g}")
        if abs(z - z_prev) <= solver.qt_tolerance:
            break
        z_prev = z

    allocation = _allocation_from_scaled(
        data, modes, kept_comm, kept_sense,
        iterations=iterations, kkt_residual=kkt, feasible=True, certificate=certificate, trace=trace,
    )
    allocation.min_sinr = float(sinr_all(data.coeffs, allocation).min())
    return allocation

# Closest-AP mode selection

@dataclass
class ModeSplit:
    transmitters: List[int]
    receivers: List[int]
    allocation: Optional[ResourceAllocation]
    min_se: float
    certificate: float = float('nan')  # smallest max CRLB (m^2) of the kept split
    trace: List[Dict] = field(default_factory=list)

def _min_se(scenario: Scenario, allocation: ResourceAllocation) -> float:
    return spectral_efficiency(max(allocation.min_sinr, 0.0), scenario.grid, scenario.waveform)

def _evaluate_split(scenario, config, data, receivers) -> Tuple[float, Optional[ResourceAllocation], float]:
    modes = modes_from_receivers(scenario.num_aps, receivers)
    try:
        allocation = power_allocation_fixed_modes(scenario, modes, config, data)
    except InfeasibleProblemError as e:
        logger.debug(f"Split Rx={sorted(receivers)} infeasible: {e}")
        return float('-inf'), None, e.certificate
    except ConvergenceFailure as e:
        logger.warning(f"Split Rx={sorted(receivers)} skipped, solver failed: {e}")
        return float('-inf'), None, float('nan')
    return _min_se(scenario, allocation), allocation, allocation.certificate

def closest_ap_selection(scenario: Scenario, config: SimulationConfig,
                         data: Optional[PowerProblemData] = None) -> ModeSplit:
    """Move transmitters nearest a hotspot to receive mode while the min SE does not drop"""
    if scenario.num_aps < 2:
        raise ConfigurationError("Mode selection needs at least two APs")
    data = data or build_problem_data(scenario, config)
    distances = np.array([[scenario.hotspot_distance(r, v) for r in range(scenario.num_aps)]
                          for v in range(scenario.num_targets)])

    receivers = sorted({int(np.argmin(distances[v])) for v in range(scenario.num_targets)})
    transmitters = [p for p in range(scenario.num_aps) if p not in receivers]
    if not transmitters:
        raise ConfigurationError("Every AP is the closest to some hotspot; no transmitter left")

    best_se, best_allocation, certificate = _evaluate_split(scenario, config, data, receivers)
    trace = [{'iteration': 0, 'moved': -1, 'min_se': best_se, 'accepted': True}]
    iteration = 0
    while len(transmitters) > 1:
        iteration += 1
        # argmin over (v, r in Tx) of the hotspot distance, lowest AP index on ties
        candidates = [(distances[v, r], r) for v in range(scenario.num_targets) for r in transmitters]
        moved = min(candidates)[1]
        trial_rx = sorted(receivers + [moved])
        se, allocation, cert = _evaluate_split(scenario, config, data, trial_rx)
        accepted = se >= best_se
        trace.append({'iteration': iteration, 'moved': moved, 'min_se': se, 'accepted': accepted})
        if not accepted:
            break
        improvement = se - best_se if np.isfinite(best_se) else float('inf')
        receivers = trial_rx
        transmitters = [p for p in transmitters if p != moved]
        best_se, best_allocation, certificate = se, allocation, cert
        if improvement <= config.solver.cap_tolerance:
            break

    logger.info(f"Closest-AP selection: Tx={transmitters} Rx={receivers} min SE={best_se:.4f}")
    if best_allocation is not None:
        best_allocation.scheme = Scheme.CAP.value
        best_allocation.trace = trace
    return ModeSplit(transmitters, receivers, best_allocation, best_se, certificate, trace)

# Joint mode selection and power allocation

@dataclass
class ScaState:
    """Iterate and linearisation caches of one SCA step"""
    modes: np.ndarray
    x_comm: np.ndarray
    x_sense: np.ndarray
    z: float
    numerators: np.ndarray   # N_q at the iterate
    mu: np.ndarray           # mu_pq / sigma^2
    kappa: np.ndarray        # balances kappa a_p against mu_pq / kappa
    ell: np.ndarray          # kappa a - mu / kappa at the iterate
    f: np.ndarray            # 2 N_q / z

    @classmethod
    def from_iterate(cls, data: PowerProblemData, modes, x_comm, x_sense) -> "ScaState":
        a = np.clip(np.asarray(modes, dtype=float), 1e-9, 1.0)
        numerators = data.numerators(a, x_comm)
        mu = data.interference(x_comm, x_sense)
        sinr = numerators ** 2 / (a @ mu + 1.0)
        z = float(sinr.min()) if sinr.size else 0.0
        kappa = np.clip(np.sqrt(np.maximum(mu, 1e-9) / a[:, None]), 1e-3, 1e3)
        ell = kappa * a[:, None] - mu / kappa
        f = 2.0 * numerators / max(z, 1e-12)
        return cls(a, x_comm, x_sense, z, numerators, mu, kappa, ell, f)

    def varrho(self, p: int, r: int, v: int, modes, x_sense) -> float:
        """First-order expansion of a_p (1 - a_r) x_pv around the iterate"""
        a0, b0, x0 = self.modes[p], self.modes[r], self.x_sense[p, v]
        return float(a0 * (1 - b0) * x_sense[p, v]
                     + (modes[p] * (1 - b0) + a0 * (2 * b0 - modes[r] - 1)) * x0)

    def binary_gap(self, modes, penalty: float) -> float:
        a = np.asarray(modes, dtype=float)
        return float(penalty * np.sum(a - self.modes * (2 * a - self.modes)))

def _joint_program(data: PowerProblemData, state: ScaState, penalty: float, margin: float):
    n_ap, n_u, n_t = data.num_aps, data.num_users, data.num_targets
    a_index = np.arange(n_ap)
    c_index = n_ap + np.arange(n_ap * n_u).reshape(n_ap, n_u)
    s_index = n_ap + n_ap * n_u + np.arange(n_ap * n_t).reshape(n_ap, n_t)
    z = n_ap * (1 + n_u + n_t)
    n = z + 1

    def unit(i):
        e = np.zeros(n)
        e[i] = 1.0
        return e

    a0 = state.modes
    objective = unit(z)
    objective[a_index] = -penalty * (1.0 - 2.0 * a0)

    rows, h = [], []
    for p in range(n_ap):
        row = np.zeros(n)
        row[c_index[p]] = 1.0
        row[s_index[p]] = 1.0
        row[a_index[p]] = -2.0 * a0[p]
        rows.append(row)
        h.append(-a0[p] ** 2)
        rows.append(unit(a_index[p]))
        h.append(1.0)
    rows.append(-np.eye(n))
    h.extend([0.0] * n)
    if n_u == 0:
        rows.append(unit(z))
        h.append(0.0)

    smooth = []
    for q in range(n_u):
        f = state.f[q]
        squares, linear = [], f ** 2 * unit(z)
        constant = 4.0
        products = []
        for p in range(n_ap):
            kappa, ell = state.kappa[p, q], state.ell[p, q]
            mu_vec = np.zeros(n)
            mu_vec[c_index[p]] = data.comm_cross[p, q]
            mu_vec[s_index[p]] = data.sense_cross[p, q]
            squares.append((kappa * unit(a_index[p]) + mu_vec / kappa, 0.0))
            linear = linear - 2.0 * ell * (kappa * unit(a_index[p]) - mu_vec / kappa)
            constant += ell ** 2
            if data.gains[p, q] > 0:
                products.append((4.0 * f * data.gains[p, q], int(a_index[p]), int(c_index[p, q])))
        smooth.append(SmoothConstraint(squares, linear, constant, products, name=f"sinr_{q}"))

    trace_inverse = []
    for v in range(n_t):
        base = np.zeros((2, 2))
        slopes: Dict[int, np.ndarray] = {}
        for p in range(n_ap):
            x0 = state.x_sense[p, v]
            for r in range(n_ap):
                block = data.fisher[p, r, v]
                b0 = a0[r]
                base += a0[p] * (2 * b0 - 1) * x0 * block
                terms = [(s_index[p, v], a0[p] * (1 - b0)), (a_index[p], (1 - b0) * x0), (a_index[r], -a0[p] * x0)]
                for k, coef in terms:
                    if coef != 0.0:
                        slopes[int(k)] = slopes.get(int(k), np.zeros((2, 2))) + coef * block
        trace_inverse.append(TraceInverseConstraint(base, slopes, bound=1.0 - margin, name=f"crlb_{v}"))

    start = np.zeros(n)
    start[a_index] = state.modes
    start[c_index] = np.maximum(state.x_comm, 1e-12)
    start[s_index] = state.x_sense
    start[z] = max(state.z * (1.0 - 1e-6), 0.0)
    program = ConvexProgram(n, objective, np.vstack(rows), np.array(h), smooth, trace_inverse, start)
    return program, (a_index, c_index, s_index, z)

def _round_modes(modes: np.ndarray, threshold: float) -> np.ndarray:
    """Binary modes with at least one transmitter and one receiver"""
    binary = np.where(modes >= threshold, 1.0, 0.0)
    if binary.sum() == binary.size:
        binary[int(np.argmin(modes))] = 0.0
        logger.warning("Rounding left no receiver; lowest-mode AP switched to receive")
    if binary.sum() == 0:
        binary[int(np.argmax(modes))] = 1.0
        logger.warning("Rounding left no transmitter; highest-mode AP switched to transmit")
    return binary

def solve_joint(scenario: Scenario, config: SimulationConfig,
                data: Optional[PowerProblemData] = None,
                incumbent: Optional[ResourceAllocation] = None) -> ResourceAllocation:
    """Penalised SCA over relaxed modes and powers, then rounding and a fixed-mode repair"""
    data = data or build_problem_data(scenario, config)
    solver = config.solver
    penalty = solver.penalty
    n_ap, n_u, n_t = data.num_aps, data.num_users, data.num_targets

    a = np.full(n_ap, solver.initial_mode)
    budget = a ** 2
    share = budget / max(n_u + n_t, 1)
    x_comm = np.repeat(share[:, None], n_u, axis=1)
    x_sense = np.repeat(share[:, None], n_t, axis=1)
    state = ScaState.from_iterate(data, a, x_comm, x_sense)

    def true_objective(s: ScaState) -> float:
        return s.z - penalty * float(np.sum(s.modes - s.modes ** 2))

    trace = []
    previous = true_objective(state)
    gap = float('nan')
    kkt = float('nan')
    iterations = 0
    for iteration in range(1, solver.sca_max_iterations + 1):
        program, (a_idx, c_idx, s_idx, z_idx) = _joint_program(data, state, penalty, solver.feasibility_margin)
        if not program.in_domain(program.start):
            logger.warning("SCA iterate left the domain of the CRLB constraint; stopping")
            break
        try:
            solution = _solve(program, solver)
        except (ConvergenceFailure, InfeasibleProblemError) as e:
            if iteration == 1:
                return _joint_fallback(scenario, config, data, incumbent, e)
            logger.warning(f"SCA stopped at iteration {iteration}: {e}")
            break
        x = solution.x
        new_modes = np.clip(x[a_idx], 1e-9, 1.0)
        new_state = ScaState.from_iterate(
            data, new_modes, np.clip(x[c_idx], 0.0, None), np.clip(x[s_idx], 0.0, None),
        )
        gap = state.binary_gap(new_modes, penalty)
        value = true_objective(new_state)
        accepted = value >= previous - 1e-8 * max(1.0, abs(previous))
        trace.append({
            'iteration': iteration,
            'objective': float(x[z_idx]) - gap,
            'true_objective': value,
            'binary_gap': gap,
            'kkt_residual': solution.kkt_residual,
            'min_sinr': new_state.z,
            'accepted': accepted,
        })
        logger.debug(f"SCA iteration {iteration}: objective {value:.6g}, gap {gap:.3e}")
        if not accepted:
            logger.info(f"SCA step {iteration} lowered the objective; keeping the previous iterate")
            break
        state = new_state
        iterations = iteration
        kkt = solution.kkt_residual
        if abs(value - previous) < solver.sca_tolerance and gap < solver.sca_tolerance:
            previous = value
            break
        previous = value

    modes = _round_modes(state.modes, solver.rounding_threshold)
    logger.info(f"Joint selection: modes {modes.astype(int).tolist()} after {iterations} SCA iterations")
    try:
        allocation = power_allocation_fixed_modes(scenario, modes, config, data)
    except (InfeasibleProblemError, ConvergenceFailure) as e:
        return _joint_fallback(scenario, config, data, incumbent, e)

    allocation.scheme = Scheme.JAP.value
    allocation.binary_gap = gap
    allocation.kkt_residual = kkt
    allocation.trace = trace
    allocation.iterations = iterations
    if incumbent is not None and incumbent.min_sinr > allocation.min_sinr:
        logger.info("Closest-AP split beats the rounded joint solution; keeping it")
        return replace(
            incumbent, iterations=iterations, binary_gap=gap, kkt_residual=kkt,
            scheme=Scheme.JAP.value, trace=trace + [{'incumbent': True}],
        )
    return allocation

def _joint_fallback(scenario, config, data, incumbent, error) -> ResourceAllocation:
    if incumbent is not None:
        logger.warning(f"Joint solve failed ({error}); using the closest-AP split")
        return replace(incumbent, iterations=0, scheme=Scheme.JAP.value, trace=[{'incumbent': True}])
    split = closest_ap_selection(scenario, config, data)
    if split.allocation is None:
        raise InfeasibleProblemError(
            f"PEB budget unreachable with any closest-AP split: {error}",
            certificate=split.certificate,
        ) from error
    split.allocation.scheme = Scheme.JAP.value
    return split.allocation

# Baselines and dispatch

def random_ap_selection(num_aps: int, num_receivers: int,
                        rng: np.random.Generator) -> Tuple[List[int], List[int]]:
    """Receivers drawn uniformly without replacement"""
    if not 1 <= num_receivers < num_aps:
        raise ConfigurationError(f"Need 1 <= receivers < {num_aps}, got {num_receivers}")
    receivers = sorted(int(r) for r in rng.choice(num_aps, size=num_receivers, replace=False))
    return [p for p in range(num_aps) if p not in receivers], receivers

def run_scheme(scenario: Scenario, config: SimulationConfig, scheme: Scheme,
               rng: Optional[np.random.Generator] = None, num_receivers: Optional[int] = None,
               data: Optional[PowerProblemData] = None) -> ResourceAllocation:
    data = data or build_problem_data(scenario, config)
    if scheme == Scheme.CAP:
        split = closest_ap_selection(scenario, config, data)
        if split.allocation is None:
            raise InfeasibleProblemError("No closest-AP split meets the PEB budget")
        return split.allocation

    if scheme == Scheme.RAP:
        rng = rng if rng is not None else np.random.default_rng(scenario.rng_seed)
        count = num_receivers or max(1, scenario.num_targets)
        _, receivers = random_ap_selection(scenario.num_aps, count, rng)
        allocation = power_allocation_fixed_modes(
            scenario, modes_from_receivers(scenario.num_aps, receivers), config, data,
        )
        allocation.scheme = Scheme.RAP.value
        return allocation

    incumbent = None
    if config.solver.keep_incumbent:
        incumbent = closest_ap_selection(scenario, config, data).allocation
    return solve_joint(scenario, config, data, incumbent)

def feasibility_audit(scenario: Scenario, allocation: ResourceAllocation, config: SimulationConfig,
                      coeffs: Optional[CommCoefficients] = None) -> Dict:
    """PEB (approx, not linearised) and per-AP power of a finished allocation"""
    coeffs = coeffs or comm_coefficients(scenario)
    threshold = config.sensing.peb_threshold_m
    try:
        reports = position_fim(scenario, allocation, BoundMode.APPROX)
        pebs = [r.peb for r in reports]
    except (ConfigurationError, SingularInformationError):
        pebs = [float('inf')] * scenario.num_targets
    powers = [ap_power(coeffs, allocation, p) for p in range(scenario.num_aps)]
    peb_ok = all(peb <= threshold * (1 + 1e-6) + 1e-6 for peb in pebs)
    power_ok = all(power <= scenario.max_power * (1 + 1e-6) for power in powers)
    return {
        'peb': pebs,
        'power': powers,
        'peb_ok': peb_ok,
        'power_ok': power_ok,
        'feasible': peb_ok and power_ok,
    }
