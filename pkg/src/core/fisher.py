"""
Fisher information, CRLB and PEB for multi-static position estimation.

Parameter order of the per-path blocks: [omega_r, omega_t, tau, nu, beta_R, beta_I].
Signal factors are inner products of Psi and its derivatives,
R(X, Y) = Tr(X^H Y):

    r00 = R(Psi, Psi)        r10 = R(Psi, dPsi/dtau)     r01 = R(Psi, dPsi/dnu)
    r11 = R(dtau, dnu)       r20 = R(dtau, dtau)         r02 = R(dnu, dnu)
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.core.allocation import ResourceAllocation
from src.core.dd_channel import EffectiveDDChannel, delay_tap
from src.core.exceptions import ConfigurationError, SingularInformationError
from src.core.scenario import (
    AccessPoint, OtfsGrid, PathParams, Scenario, Target, array_response, sensing_precoder,
)
from src.utils.constants import NUMERICS, SPEED_OF_LIGHT, BoundMode, Waveform

@dataclass(frozen=True)
class SignalFactors:
    r00: complex
    r10: complex
    r01: complex
    r11: complex
    r20: complex
    r02: complex
    waveform: Waveform = Waveform.OTFS

    def as_array(self) -> np.ndarray:
        return np.array([self.r00, self.r10, self.r01, self.r11, self.r20, self.r02], dtype=complex)

    @property
    def delay_information(self) -> float:
        """R20 - |R10|^2 / R00, the delay term left after removing the gain"""
        return float(self.r20.real - abs(self.r10) ** 2 / self.r00.real)

    @property
    def doppler_information(self) -> float:
        return float(self.r02.real - abs(self.r01) ** 2 / self.r00.real)

@dataclass
class FisherBlock:
    full: np.ndarray         # 6x6
    equivalent: np.ndarray   # 4x4
    position: np.ndarray     # 2x2
    jacobian: np.ndarray     # 4x2

@dataclass
class PebReport:
    target: int
    fim: np.ndarray
    crlb: float
    peb: float
    singular: bool
    contributions: List[Tuple[int, int, np.ndarray]] = field(default_factory=list)

# Signal factors

def signal_factors_bruteforce(dd: EffectiveDDChannel) -> SignalFactors:
    """Direct sums over the dense Psi and derivatives (MN <= 4096)"""
    psi, dtau, dnu = dd.psi, dd.dpsi_dtau, dd.dpsi_dnu
    return SignalFactors(
        r00=np.vdot(psi, psi),
        r10=np.vdot(psi, dtau),
        r01=np.vdot(psi, dnu),
        r11=np.vdot(dtau, dnu),
        r20=np.vdot(dtau, dtau),
        r02=np.vdot(dnu, dnu),
        waveform=dd.waveform,
    )

def _isi_profile(grid: OtfsGrid, tau: float) -> np.ndarray:
    """g(l) = l/(M df) - T [l in ISI set]; a delay past the block puts every column in ISI"""
    l = np.arange(grid.M)
    l_tau = min(delay_tap(tau, grid), grid.M)
    isi = l >= grid.M - l_tau
    return l / (grid.M * grid.delta_f) - grid.T * isi

def signal_factors_otfs(grid: OtfsGrid, tau: float = 0.0) -> SignalFactors:
    M, N, T, df = grid.M, grid.N, grid.T, grid.delta_f
    MN = M * N
    g = _isi_profile(grid, tau)
    sum_g, sum_g2 = g.sum(), (g ** 2).sum()
    pi = np.pi
    return SignalFactors(
        r00=complex(MN),
        r10=1j * pi * df * (M - 1) * MN,
        r01=1j * pi * (T * (N - 1) * MN + 2 * N * sum_g),
        r11=complex(pi ** 2 * df * T * (N - 1) * (M - 1) * MN + 2 * pi ** 2 * df * N * (M - 1) * sum_g),
        r20=complex((2 * pi * df) ** 2 * MN * (M - 1) * (2 * M - 1) / 6),
        r02=complex(
            (2 * pi * T) ** 2 * MN * (N - 1) * (2 * N - 1) / 6
            + (2 * pi) ** 2 * N * sum_g2
            + (2 * pi) ** 2 * T * N * (N - 1) * sum_g
        ),
        waveform=Waveform.OTFS,
    )

def signal_factors_ofdm(grid: OtfsGrid) -> SignalFactors:
    """Closed forms for the OFDM channel, T = T_cp + T_0"""
    M, N, T, df = grid.M, grid.N, grid.T, grid.delta_f
    t0 = grid.ofdm_useful_duration
    MN = M * N
    pi = np.pi
    return SignalFactors(
        r00=complex(MN),
        r10=1j * pi * df * (M - 1) * MN,
        r01=1j * pi * (T * (N - 1) * MN + t0 * (M - 1) * N),
        r11=complex(pi ** 2 * df * T * MN * (N - 1) * (M - 1) + pi ** 2 * df * t0 * N * (M - 1) ** 2),
        r20=complex((2 * pi * df) ** 2 * MN * (M - 1) * (2 * M - 1) / 6),
        r02=complex(
            (2 * pi * T) ** 2 * MN * (N - 1) * (2 * N - 1) / 6
            + (2 * pi * t0) ** 2 * (M - 1) * N * (2 * M - 1) / (6 * M)
            + 2 * pi ** 2 * t0 * T * N * (N - 1) * (M - 1)
        ),
        waveform=Waveform.OFDM,
    )

def signal_factors(grid: OtfsGrid, waveform: Waveform = Waveform.OTFS, tau: float = 0.0) -> SignalFactors:
    if waveform == Waveform.OFDM:
        return signal_factors_ofdm(grid)
    return signal_factors_otfs(grid, tau)

# Per-path blocks

def array_derivative(h: np.ndarray) -> np.ndarray:
    """h-dot = c * h with c = [0, ..., Mt-1]"""
    return np.arange(h.size) * h

def fim_full(path: PathParams, precoder_gram: np.ndarray, factors: SignalFactors, m_t: int,
             noise_power: float, gain: Optional[complex] = None, convention: str = "derived") -> np.ndarray:
    """6x6 FIM of one bistatic path, entry = (RX factor)(TX factor)(signal factor).

    ``convention="printed"`` reproduces the published AoD cross entries, which
    carry the opposite sign (t10 -> -conj(t10)); only the derived form agrees
    with finite differences of the signal mean.
    """
    if convention not in ("derived", "printed"):
        raise ValueError(f"Unknown FIM convention '{convention}'")
    beta = path.gain if gain is None else gain
    b2 = abs(beta) ** 2
    bc = np.conj(beta)

    h_r = array_response(path.aoa, m_t)
    h_t = array_response(path.aod, m_t)
    hd_r = array_derivative(h_r)
    hd_t = array_derivative(h_t)
    V = precoder_gram

    a_rx = float(m_t)                       # h_r^H h_r
    ad = np.vdot(hd_r, h_r)                 # hdot_r^H h_r
    add = np.vdot(hd_r, hd_r)               # hdot_r^H hdot_r
    t00 = np.vdot(h_t, V @ h_t)
    t10 = np.vdot(hd_t, V @ h_t)
    t11 = np.vdot(hd_t, V @ hd_t)
    if convention == "printed":
        t10 = -np.conj(t10)

    r00, r10, r01, r11, r20, r02 = factors.as_array()

    F = np.zeros((6, 6), dtype=complex)
    F[0, 0] = b2 * add * t00 * r00
    F[1, 1] = b2 * a_rx * t11 * r00
    F[2, 2] = b2 * a_rx * t00 * r20
    F[3, 3] = b2 * a_rx * t00 * r02
    F[4, 4] = F[5, 5] = a_rx * t00 * r00

    F[0, 1] = b2 * ad * np.conj(t10) * r00
    F[0, 2] = 1j * b2 * ad * t00 * r10
    F[0, 3] = 1j * b2 * ad * t00 * r01
    F[0, 4] = 1j * bc * ad * t00 * r00
    F[0, 5] = -bc * ad * t00 * r00

    F[1, 2] = 1j * b2 * a_rx * t10 * r10
    F[1, 3] = 1j * b2 * a_rx * t10 * r01
    F[1, 4] = 1j * bc * a_rx * t10 * r00
    F[1, 5] = -bc * a_rx * t10 * r00

    F[2, 3] = b2 * a_rx * t00 * r11
    F[2, 4] = bc * a_rx * t00 * np.conj(r10)
    F[2, 5] = 1j * bc * a_rx * t00 * np.conj(r10)
    F[3, 4] = bc * a_rx * t00 * np.conj(r01)
    F[3, 5] = 1j * bc * a_rx * t00 * np.conj(r01)

    F = (2.0 / noise_power) * F.real
    upper = np.triu(F, 1)
    return np.diag(np.diag(F)) + upper + upper.T

def fim_equivalent(block: np.ndarray) -> np.ndarray:
    """Schur complement removing the gain parameters"""
    block = np.asarray(block, dtype=float)
    f11, f12, f22 = block[:4, :4], block[:4, 4:], block[4:, 4:]
    if not np.all(np.isfinite(f22)) or np.linalg.det(f22) <= 0:
        raise SingularInformationError("Gain block of the FIM is singular")
    try:
        reduced = f11 - f12 @ np.linalg.solve(f22, f12.T)
    except np.linalg.LinAlgError as e:
        raise SingularInformationError(f"Gain block of the FIM is singular: {e}") from e
    return 0.5 * (reduced + reduced.T)

def _perp_part(vector: np.ndarray, unit: np.ndarray) -> np.ndarray:
    """(I - unit unit^T) vector, written so that vector parallel to unit gives exactly 0"""
    normal = np.array([-unit[1], unit[0]])
    return (unit[0] * vector[1] - unit[1] * vector[0]) * normal

def position_jacobian(path: PathParams, tx: AccessPoint, rx: AccessPoint, tgt: Target,
                      grid: OtfsGrid) -> np.ndarray:
    """Rows are the gradients of [omega_r, omega_t, tau, nu] with respect to p_v"""
    rho_tx, rho_rx = path.unit_tx, path.unit_rx
    velocity = np.asarray(tgt.velocity, dtype=float)
    return np.vstack([
        np.pi * _perp_part(rx.array_direction, rho_rx) / path.d_rx,
        -np.pi * _perp_part(tx.array_direction, rho_tx) / path.d_tx,
        (rho_rx - rho_tx) / SPEED_OF_LIGHT,
        (_perp_part(velocity, rho_rx) / path.d_rx - _perp_part(velocity, rho_tx) / path.d_tx) / grid.wavelength,
    ])

def path_fisher_block(scenario: Scenario, p: int, r: int, v: int, precoder_gram: np.ndarray,
                      factors: Optional[SignalFactors] = None, gain: Optional[complex] = None,
                      convention: str = "derived") -> FisherBlock:
    path = scenario.path(p, r, v)
    if factors is None:
        factors = signal_factors(scenario.grid, scenario.waveform, path.delay)
    full = fim_full(path, precoder_gram, factors, scenario.antennas, scenario.noise_power, gain, convention)
    equivalent = fim_equivalent(full)
    jacobian = position_jacobian(path, scenario.aps[p], scenario.aps[r], scenario.targets[v], scenario.grid)
    return FisherBlock(full, equivalent, jacobian.T @ equivalent @ jacobian, jacobian)

def approx_coefficients(factors: SignalFactors, m_t: int, convention: str = "derived") -> Dict[str, float]:
    """Diagonal EFIM of a single matched beam, per unit power and unit 2|beta|^2/sigma^2.

    ``derived`` carries the array gains of h^H h = Mt and the matched beam
    and removes the gain coupling with -|R10|^2 / R00. ``printed`` is the
    closed form without the array gains and with +R10^2 / MN; it is kept to
    report the gap, see check_approx_bound.
    """
    c = np.arange(m_t)
    ad, add = float(c.sum()), float((c ** 2).sum())
    r00 = factors.r00.real
    if convention == "printed":
        return {
            'd11': r00 * (add - ad ** 2 / m_t),
            'd22': 0.0,
            'd33': float((factors.r20 + factors.r10 ** 2 / r00).real),
            'd44': float((factors.r02 + factors.r01 ** 2 / r00).real),
        }
    if convention != "derived":
        raise ValueError(f"Unknown FIM convention '{convention}'")
    return {
        'd11': m_t * r00 * (add - ad ** 2 / m_t),
        'd22': 0.0,
        'd33': m_t ** 2 * factors.delay_information,
        'd44': m_t ** 2 * factors.doppler_information,
    }

def approx_path_fim(path: PathParams, tx: AccessPoint, rx: AccessPoint, tgt: Target, grid: OtfsGrid,
                    factors: SignalFactors, m_t: int, noise_power: float,
                    gain: Optional[complex] = None, convention: str = "derived") -> np.ndarray:
    """F-hat of one path per unit eta_pv, only the target's own beam counted"""
    beta = path.gain if gain is None else gain
    d = approx_coefficients(factors, m_t, convention)
    J = position_jacobian(path, tx, rx, tgt, grid)
    scale = 2.0 * abs(beta) ** 2 / noise_power
    return scale * (d['d11'] * np.outer(J[0], J[0]) + d['d33'] * np.outer(J[2], J[2])
                     + d['d44'] * np.outer(J[3], J[3]))

def precoder_gram(scenario: Scenario, allocation: ResourceAllocation, p: int) -> np.ndarray:
    """V_p = sum_v eta_pv h_pv h_pv^H + sum_q eta_pq sum_i B_pq,i"""
    m_t = scenario.antennas
    V = np.zeros((m_t, m_t), dtype=complex)
    for v in range(scenario.num_targets):
        eta = allocation.sensing_powers[p, v]
        if eta > 0:
            beam = sensing_precoder(scenario.aod_estimate(p, v), m_t)
            V += eta * np.outer(beam, beam.conj())
    for q in range(scenario.num_users):
        eta = allocation.comm_powers[p, q]
        if eta > 0:
            V += eta * scenario.comm_channels[p][q].estimate_covariances.sum(axis=0)
    return V

# Position level

def trace_inverse_2x2(F: np.ndarray) -> float:
    """Tr(F^-1) = (f11 + f22) / (f11 f22 - f12^2)"""
    f11, f12, f22 = F[0, 0], 0.5 * (F[0, 1] + F[1, 0]), F[1, 1]
    det = f11 * f22 - f12 ** 2
    if det <= 0 or f11 <= 0:
        raise SingularInformationError(f"2x2 FIM is not positive definite (det = {det:.3e})")
    return float((f11 + f22) / det)

def is_singular(F: np.ndarray) -> bool:
    trace = F[0, 0] + F[1, 1]
    det = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    tolerance = max(NUMERICS['singular_det_abs'], NUMERICS['singular_det_rel'] * trace ** 2)
    return bool(det <= tolerance or trace <= 0)

def peb_from_fim(F: np.ndarray, target: int = 0, contributions=None) -> PebReport:
    if is_singular(F):
        return PebReport(target, F, float('inf'), float('inf'), True, contributions or [])
    crlb = trace_inverse_2x2(F)
    return PebReport(target, F, crlb, float(np.sqrt(crlb)), False, contributions or [])

def position_fim(scenario: Scenario, allocation: ResourceAllocation,
                 mode: BoundMode = BoundMode.EXACT, convention: str = "derived") -> List[PebReport]:
    """F_pv and PEB for every target under the given allocation.

    Exact: sum over (p, r) of J^T F^e J with the full precoder Gram V_p.
    Approx: eta_pv F-hat with only the target's own beam.
    """
    transmitters, receivers = allocation.transmitters, allocation.receivers
    if not transmitters or not receivers:
        raise ConfigurationError("Position FIM needs at least one transmitting and one receiving AP")

    grams = {}
    if mode == BoundMode.EXACT:
        grams = {p: precoder_gram(scenario, allocation, p) for p in transmitters}

    m_t = scenario.antennas
    reports = []
    for v, target in enumerate(scenario.targets):
        total = np.zeros((2, 2))
        contributions = []
        for p in sorted(transmitters):
            eta = allocation.sensing_powers[p, v]
            for r in sorted(receivers):
                path = scenario.path(p, r, v)
                factors = signal_factors(scenario.grid, scenario.waveform, path.delay)
                if mode == BoundMode.EXACT:
                    block = path_fisher_block(scenario, p, r, v, grams[p], factors, convention=convention)
                    contribution = block.position
                else:
                    contribution = eta * approx_path_fim(
                        path, scenario.aps[p], scenario.aps[r], target, scenario.grid,
                        factors, m_t, scenario.noise_power, convention=convention,
                    )
                contributions.append((p, r, contribution))
                total = total + contribution
        total = 0.5 * (total + total.T)
        report = peb_from_fim(total, v, contributions)
        if report.singular:
            logger.warning(f"Position FIM of target {v} is singular ({mode.value} mode)")
        reports.append(report)
    return reports

def peb_sweep_frame(parameters: Sequence[float], exact: Sequence[float], approx: Sequence[float],
                    name: str = "parameter") -> pd.DataFrame:
    return pd.DataFrame({name: list(parameters), 'exact_peb': list(exact), 'approx_peb': list(approx)})
