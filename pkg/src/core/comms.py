"""
Closed-form downlink SINR, spectral efficiency and per-AP power accounting
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.allocation import ResourceAllocation
from src.core.scenario import OtfsGrid, Scenario, sensing_precoder
from src.utils.constants import Waveform

@dataclass(frozen=True, eq=False)
class CommCoefficients:
    """Statistical coefficients of the MR precoded downlink.

    b_pq = sum_i Tr(B_pq,i), c_pq,q' = sum_ij Tr(B_pq,i B_pq',j),
    c_pq,v = sum_i Tr(B_pq,i B_pv), b_pv = Tr(B_pv) with B_pv = h_pv h_pv^H.
    """
    b_comm: np.ndarray      # (N_AP, K_u)
    c_comm: np.ndarray      # (N_AP, K_u, K_u), [p, q, q']
    c_sense: np.ndarray     # (N_AP, K_u, T_g), [p, q, v]
    b_sense: np.ndarray     # (N_AP, T_g)
    comm_covariances: np.ndarray    # (N_AP, K_u, Mt, Mt), sum_i B_pq,i
    sensing_covariances: np.ndarray  # (N_AP, T_g, Mt, Mt)
    noise_power: float

    @property
    def num_aps(self) -> int:
        return self.b_comm.shape[0]

    @property
    def num_users(self) -> int:
        return self.b_comm.shape[1]

    @property
    def num_targets(self) -> int:
        return self.b_sense.shape[1]

    def interference(self, comm_powers: np.ndarray, sensing_powers: np.ndarray) -> np.ndarray:
        """mu_pq = sum_q' eta_pq' c_pq,q' + sum_v eta_pv c_pq,v, shape (N_AP, K_u)"""
        return (np.einsum('pqr,pr->pq', self.c_comm, comm_powers)
                + np.einsum('pqv,pv->pq', self.c_sense, sensing_powers))

def comm_coefficients(scenario: Scenario) -> CommCoefficients:
    m_t = scenario.antennas
    n_ap, n_users, n_targets = scenario.num_aps, scenario.num_users, scenario.num_targets

    comm_cov = np.zeros((n_ap, n_users, m_t, m_t), dtype=complex)
    for p in range(n_ap):
        for q in range(n_users):
            comm_cov[p, q] = scenario.comm_channels[p][q].estimate_covariances.sum(axis=0)

    sense_cov = np.zeros((n_ap, n_targets, m_t, m_t), dtype=complex)
    for p in range(n_ap):
        for v in range(n_targets):
            beam = sensing_precoder(scenario.aod_estimate(p, v), m_t)
            sense_cov[p, v] = np.outer(beam, beam.conj())

    # Tr(X Y) = sum_ab X_ab Y_ba
    b_comm = np.einsum('pqaa->pq', comm_cov).real
    b_sense = np.einsum('pvaa->pv', sense_cov).real
    c_comm = np.einsum('pqab,prba->pqr', comm_cov, comm_cov).real
    c_sense = np.einsum('pqab,pvba->pqv', comm_cov, sense_cov).real

    return CommCoefficients(
        b_comm=np.clip(b_comm, 0.0, None),
        c_comm=np.clip(c_comm, 0.0, None),
        c_sense=np.clip(c_sense, 0.0, None),
        b_sense=b_sense,
        comm_covariances=comm_cov,
        sensing_covariances=sense_cov,
        noise_power=scenario.noise_power,
    )

def _transmit_mask(allocation: ResourceAllocation) -> np.ndarray:
    mask = np.zeros(allocation.num_aps)
    mask[allocation.transmitters] = 1.0
    return mask

def sinr_comm(coeffs: CommCoefficients, allocation: ResourceAllocation, q: int) -> float:
    """(sum_p sqrt(eta_pq) b_pq)^2 / (sum_p mu_pq + sigma_w^2), transmitting APs only.

    The denominator keeps the q' = q term (estimation-error self interference).
    """
    mask = _transmit_mask(allocation)
    comm, sensing = allocation.comm_powers * mask[:, None], allocation.sensing_powers * mask[:, None]
    numerator = np.sum(np.sqrt(comm[:, q]) * coeffs.b_comm[:, q]) ** 2
    denominator = coeffs.interference(comm, sensing)[:, q].sum() + coeffs.noise_power
    return float(numerator / denominator)

def sinr_all(coeffs: CommCoefficients, allocation: ResourceAllocation) -> np.ndarray:
    return np.array([sinr_comm(coeffs, allocation, q) for q in range(coeffs.num_users)])

def sinr_with_modes(coeffs: CommCoefficients, modes: np.ndarray, comm_powers: np.ndarray,
                    sensing_powers: np.ndarray) -> np.ndarray:
    """SINR of every user for fractional modes: (sum sqrt(a_p eta_pq) b_pq)^2 / (sum a_p mu_pq + sigma^2)"""
    modes = np.asarray(modes, dtype=float)
    numerator = np.sum(np.sqrt(modes[:, None] * comm_powers) * coeffs.b_comm, axis=0) ** 2
    mu = coeffs.interference(comm_powers, sensing_powers)
    return numerator / (modes @ mu + coeffs.noise_power)

def prelog_factor(grid: OtfsGrid, waveform: Waveform = Waveform.OTFS) -> float:
    """One CP per OTFS frame, one per OFDM symbol"""
    if waveform == Waveform.OFDM:
        return grid.M / (grid.M + grid.N_cp)
    return grid.size / (grid.size + grid.N_cp)

def spectral_efficiency(sinr, grid: OtfsGrid, waveform: Waveform = Waveform.OTFS):
    """omega * log2(1 + SINR) in bit/s/Hz"""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be nonnegative")
    se = prelog_factor(grid, waveform) * np.log2(1.0 + sinr)
    return float(se) if se.ndim == 0 else se

def min_spectral_efficiency(coeffs: CommCoefficients, allocation: ResourceAllocation,
                            grid: OtfsGrid, waveform: Waveform = Waveform.OTFS) -> float:
    if coeffs.num_users == 0:
        return float('nan')
    return spectral_efficiency(float(sinr_all(coeffs, allocation).min()), grid, waveform)

def ap_power(coeffs: CommCoefficients, allocation: ResourceAllocation, p: int) -> float:
    """P_p = sum_q eta_pq b_pq + sum_v eta_pv b_pv"""
    return float(allocation.comm_powers[p] @ coeffs.b_comm[p] + allocation.sensing_powers[p] @ coeffs.b_sense[p])

def _allocation(coeffs: CommCoefficients, modes, comm, sensing) -> ResourceAllocation:
    return ResourceAllocation.from_blocks(np.asarray(modes, dtype=float), comm, sensing)

def equal_power_allocation(coeffs: CommCoefficients, modes, max_power: float) -> ResourceAllocation:
    """eta = P_d / (sum_q b_pq + sum_v b_pv) on every stream of a transmitting AP"""
    modes = np.asarray(modes, dtype=float)
    comm = np.zeros_like(coeffs.b_comm)
    sensing = np.zeros_like(coeffs.b_sense)
    for p in np.flatnonzero(modes >= 0.5):
        total = coeffs.b_comm[p].sum() + coeffs.b_sense[p].sum()
        if total > 0:
            comm[p] = sensing[p] = max_power / total
    return _allocation(coeffs, modes, comm, sensing)

def stream_split_allocation(coeffs: CommCoefficients, modes, max_power: float,
                            budget: Optional[np.ndarray] = None) -> ResourceAllocation:
    """Each AP spends budget_p (default P_d on transmitters) evenly over its K_u + T_g streams"""
    modes = np.asarray(modes, dtype=float)
    if budget is None:
        budget = np.where(modes >= 0.5, max_power, 0.0)
    streams = coeffs.num_users + coeffs.num_targets
    share = np.asarray(budget, dtype=float)[:, None] / max(streams, 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        comm = np.where(coeffs.b_comm > 0, share / coeffs.b_comm, 0.0)
        sensing = np.where(coeffs.b_sense > 0, share / coeffs.b_sense, 0.0)
    return _allocation(coeffs, modes, comm, sensing)
