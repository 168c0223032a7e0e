"""
Delay-Doppler effective channels, reflected channels and echo synthesis.

Psi couples DD input index (k', l') to output index (k, l), flattened as
i = k*M + l. Every Psi and derivative used here is a short sum of terms

    (A kron D) * phase[None, :]

with A (N x N) acting on the Doppler index, D (M x M) on the delay index
and phase a per-column factor. Applying a term to s = vec(S), S of shape
(N, M), is A @ (S * phase) @ D.T, so nothing of size MN x MN is built
unless asked for.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np
from loguru import logger
from scipy.sparse.linalg import LinearOperator

from src.core.allocation import ResourceAllocation
from src.core.exceptions import ConfigurationError, DelayOutOfRangeError, SizeGuardError
from src.core.scenario import (
    OtfsGrid, PathParams, Scenario, array_response, draw_rcs, path_gain, sensing_precoder,
)
from src.utils.constants import NUMERICS, Waveform

@dataclass(frozen=True, eq=False)
class KroneckerTerm:
    doppler: np.ndarray   # A, (N, N)
    delay: np.ndarray     # D, (M, M)
    phase: np.ndarray     # (N, M), indexed by the input (k', l')

    def apply(self, block: np.ndarray) -> np.ndarray:
        return self.doppler @ (block * self.phase) @ self.delay.T

    def apply_adjoint(self, block: np.ndarray) -> np.ndarray:
        return np.conj(self.phase) * (self.doppler.conj().T @ block @ self.delay.conj())

    def dense(self) -> np.ndarray:
        return np.kron(self.doppler, self.delay) * self.phase.reshape(1, -1)

def _sum_apply(terms, block, adjoint=False):
    out = np.zeros(block.shape, dtype=complex)
    for term in terms:
        out += term.apply_adjoint(block) if adjoint else term.apply(block)
    return out

@dataclass(frozen=True, eq=False)
class EffectiveDDChannel:
    """Psi(tau, nu) with its tau and nu derivatives, in factored form"""
    tau: float
    nu: float
    waveform: Waveform
    M: int
    N: int
    psi_terms: Tuple[KroneckerTerm, ...]
    dtau_terms: Tuple[KroneckerTerm, ...]
    dnu_terms: Tuple[KroneckerTerm, ...]

    @property
    def size(self) -> int:
        return self.M * self.N

    def _terms(self, which: str):
        try:
            return {'psi': self.psi_terms, 'dtau': self.dtau_terms, 'dnu': self.dnu_terms}[which]
        except KeyError:
            raise ValueError(f"Unknown matrix '{which}' (expected psi, dtau or dnu)") from None

    def apply(self, x: np.ndarray, which: str = 'psi') -> np.ndarray:
        """Matrix-vector product for a length-MN vector (or (..., MN) stack)"""
        block = np.asarray(x).reshape(-1, self.N, self.M)
        out = np.stack([_sum_apply(self._terms(which), b) for b in block])
        return out.reshape(np.shape(x))

    def apply_adjoint(self, x: np.ndarray, which: str = 'psi') -> np.ndarray:
        block = np.asarray(x).reshape(-1, self.N, self.M)
        out = np.stack([_sum_apply(self._terms(which), b, adjoint=True) for b in block])
        return out.reshape(np.shape(x))

    def as_operator(self, which: str = 'psi') -> LinearOperator:
        return LinearOperator(
            shape=(self.size, self.size),
            matvec=lambda x: self.apply(np.ravel(x), which),
            rmatvec=lambda x: self.apply_adjoint(np.ravel(x), which),
            dtype=complex,
        )

    def dense(self, which: str = 'psi') -> np.ndarray:
        if self.size > NUMERICS['dense_limit']:
            raise SizeGuardError(
                f"Dense {self.size}x{self.size} matrix requested; limit is MN <= {NUMERICS['dense_limit']}"
            )
        return sum(term.dense() for term in self._terms(which))

    @cached_property
    def psi(self) -> np.ndarray:
        return self.dense('psi')

    @cached_property
    def dpsi_dtau(self) -> np.ndarray:
        return self.dense('dtau')

    @cached_property
    def dpsi_dnu(self) -> np.ndarray:
        return self.dense('dnu')

def delay_tap(tau: float, grid: OtfsGrid) -> int:
    """l_tau = ceil(tau * M * delta_f), with near-integer values snapped first"""
    x = tau * grid.M * grid.delta_f
    nearest = round(x)
    if abs(x - nearest) < NUMERICS['tap_snap']:
        x = float(nearest)
    return int(np.ceil(x))

def _dirichlet(offset: np.ndarray, length: int) -> Tuple[np.ndarray, np.ndarray]:
    """sum_n exp(j 2 pi offset n / length) and sum_n n exp(...), elementwise in offset"""
    n = np.arange(length)
    kernel = np.exp(2j * np.pi * offset[..., None] * n / length)
    return kernel.sum(axis=-1), (kernel * n).sum(axis=-1)

def build_psi_otfs(tau: float, nu: float, grid: OtfsGrid) -> EffectiveDDChannel:
    if tau < 0:
        raise DelayOutOfRangeError(f"Negative delay {tau}")
    M, N, T, df = grid.M, grid.N, grid.T, grid.delta_f
    l_tau = delay_tap(tau, grid)
    if l_tau >= M:
        raise DelayOutOfRangeError(f"Delay tap {l_tau} outside the block (M = {M})")

    k = np.arange(N)
    l = np.arange(M)
    # offsets indexed [output, input]
    doppler, doppler_n = _dirichlet(k[None, :] - k[:, None] + nu * N * T, N)
    delay, delay_m = _dirichlet(l[None, :] - l[:, None] + tau * M * df, M)
    doppler = doppler / (N * M)
    doppler_n = doppler_n / (N * M)

    isi = l >= M - l_tau
    phase = np.exp(2j * np.pi * nu * l / (M * df))[None, :] * np.where(
        isi[None, :], np.exp(-2j * np.pi * (nu * T + k[:, None] / N)), 1.0
    )
    g = l / (M * df) - T * isi

    psi_terms = (KroneckerTerm(doppler, delay, phase),)
    dtau_terms = (KroneckerTerm(doppler, 2j * np.pi * df * delay_m, phase),)
    dnu_terms = (
        KroneckerTerm(2j * np.pi * T * doppler_n, delay, phase),
        KroneckerTerm(doppler, delay, 2j * np.pi * g[None, :] * phase),
    )
    return EffectiveDDChannel(tau, nu, Waveform.OTFS, M, N, psi_terms, dtau_terms, dnu_terms)

def build_psi_ofdm(tau: float, nu: float, grid: OtfsGrid) -> EffectiveDDChannel:
    """TF-domain OFDM channel; index (n, m) plays the role of (k, l)"""
    if tau < 0:
        raise DelayOutOfRangeError(f"Negative delay {tau}")
    t_cp = grid.ofdm_cp_duration
    if tau > t_cp * (1 + 1e-12):
        raise DelayOutOfRangeError(f"Delay {tau:.3e} s exceeds the OFDM cyclic prefix {t_cp:.3e} s")
    M, N, T, df = grid.M, grid.N, grid.T, grid.delta_f
    t0 = grid.ofdm_useful_duration

    n = np.arange(N)
    m = np.arange(M)
    symbol_phase = np.exp(2j * np.pi * n * nu * T)
    doppler = np.diag(symbol_phase)
    doppler_n = np.diag(2j * np.pi * n * T * symbol_phase)

    # inter-carrier interference within one symbol, samples spaced T0/M
    i = np.arange(M)
    kernel = np.exp(2j * np.pi * (m[None, :] - m[:, None] + nu * t0)[..., None] * i / M)
    delay = kernel.sum(axis=-1) / M
    delay_i = (kernel * (2j * np.pi * t0 * i / M)).sum(axis=-1) / M

    phase = np.broadcast_to(np.exp(2j * np.pi * m * tau * df)[None, :], (N, M)).copy()
    dphase = 2j * np.pi * df * m[None, :] * phase

    psi_terms = (KroneckerTerm(doppler, delay, phase),)
    dtau_terms = (KroneckerTerm(doppler, delay, dphase),)
    dnu_terms = (
        KroneckerTerm(doppler_n, delay, phase),
        KroneckerTerm(doppler, delay_i, phase),
    )
    return EffectiveDDChannel(tau, nu, Waveform.OFDM, M, N, psi_terms, dtau_terms, dnu_terms)

def build_psi(tau: float, nu: float, grid: OtfsGrid, waveform: Waveform = Waveform.OTFS) -> EffectiveDDChannel:
    if waveform == Waveform.OFDM:
        return build_psi_ofdm(tau, nu, grid)
    return build_psi_otfs(tau, nu, grid)

def dump_psi(dd: EffectiveDDChannel, path: str):
    """Row-major little-endian complex64 dump of the dense Psi"""
    dd.psi.astype('<c8').tofile(path)

@dataclass(frozen=True, eq=False)
class ReflectedChannel:
    """H = h_rx h_tx^T kron Psi, kept factored.

    Per-antenna blocks are rows: a transmit vector of length Mt*MN is a
    (Mt, MN) array whose row j is the DD block fed to antenna j.
    """
    path: PathParams
    h_rx: np.ndarray
    h_tx: np.ndarray
    dd: EffectiveDDChannel

    def beam_signal(self, block: np.ndarray) -> np.ndarray:
        """Psi (h_tx^T X): the DD signal common to all receive antennas"""
        return self.dd.apply(self.h_tx @ block)

    def apply(self, block: np.ndarray) -> np.ndarray:
        return np.outer(self.h_rx, self.beam_signal(block))

    def dense(self) -> np.ndarray:
        return np.kron(np.outer(self.h_rx, self.h_tx), self.dd.psi)

def assemble_reflected(scenario: Scenario, p: int, r: int, v: int) -> ReflectedChannel:
    path = scenario.path(p, r, v)
    m_t = scenario.antennas
    return ReflectedChannel(
        path=path,
        h_rx=array_response(path.aoa, m_t),
        h_tx=array_response(path.aod, m_t),
        dd=build_psi(path.delay, path.doppler, scenario.grid, scenario.waveform),
    )

# Transmit frames and echoes

@dataclass(frozen=True, eq=False)
class PrecodedFrame:
    ap: int
    block: np.ndarray            # (Mt, MN), row j feeds antenna j
    comm_symbols: np.ndarray     # (K_u, MN) x_q
    sensing_symbols: np.ndarray  # (T_g, MN) x_v

    @property
    def vector(self) -> np.ndarray:
        """x_p stacked antenna-major, length Mt*MN"""
        return self.block.ravel()

    @property
    def power(self) -> float:
        """Average transmit power per DD symbol"""
        return float(np.sum(np.abs(self.block) ** 2)) / self.block.shape[1]

@dataclass(frozen=True, eq=False)
class Echo:
    transmitters: Tuple[int, ...]
    receivers: Tuple[int, ...]
    signals: Tuple[np.ndarray, ...]   # y_r as (Mt, MN), aligned with receivers
    frames: Dict[int, PrecodedFrame]
    gains: np.ndarray                 # beta_prv, shape (N_AP, N_AP, T_g)
    noise_power: float

    def signal(self, r: int) -> np.ndarray:
        return self.signals[self.receivers.index(r)]

def qpsk_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-power QPSK"""
    bits = rng.integers(0, 2, size=(2, *np.atleast_1d(shape)))
    return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2.0)

def _draw_complex_gaussian(covariance: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample CN(0, covariance) through the PSD square root"""
    values, vectors = np.linalg.eigh(covariance)
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    w = (rng.standard_normal(covariance.shape[0]) + 1j * rng.standard_normal(covariance.shape[0])) / np.sqrt(2.0)
    return root @ w

def build_frames(scenario: Scenario, allocation: ResourceAllocation,
                 rng: np.random.Generator) -> Dict[int, PrecodedFrame]:
    """x_p for every transmitting AP.

    Sensing: sqrt(eta_pv) conj(h_pv) kron x_v. Communication: per path i,
    sqrt(eta_pq) conj(h_pq,i) kron Psi_i^H x_q with h_pq,i ~ CN(0, B_pq,i).
    """
    grid = scenario.grid
    m_t = scenario.antennas
    comm_symbols = qpsk_symbols(rng, (scenario.num_users, grid.size)).reshape(scenario.num_users, grid.size)
    sensing_symbols = qpsk_symbols(rng, (scenario.num_targets, grid.size)).reshape(scenario.num_targets, grid.size)
    comm_powers = allocation.comm_powers
    sensing_powers = allocation.sensing_powers

    frames = {}
    for p in allocation.transmitters:
        block = np.zeros((m_t, grid.size), dtype=complex)
        for v in range(scenario.num_targets):
            eta = sensing_powers[p, v]
            if eta > 0:
                beam = sensing_precoder(scenario.aod_estimate(p, v), m_t)
                block += np.sqrt(eta) * np.outer(beam.conj(), sensing_symbols[v])
        for q in range(scenario.num_users):
            eta = comm_powers[p, q]
            if eta <= 0:
                continue
            channel = scenario.comm_channels[p][q]
            for i in range(channel.num_paths):
                estimate = _draw_complex_gaussian(channel.estimate_covariances[i], rng)
                dd = build_psi(channel.delays[i], channel.dopplers[i], grid, scenario.waveform)
                block += np.sqrt(eta) * np.outer(estimate.conj(), dd.apply_adjoint(comm_symbols[q]))
        frames[p] = PrecodedFrame(p, block, comm_symbols, sensing_symbols)
    return frames

def synthesize_echo(scenario: Scenario, allocation: ResourceAllocation,
                    rng: np.random.Generator) -> Echo:
    """y_r = sum_p sum_v beta_prv H_prv x_p + w_r for every receiving AP"""
    receivers = tuple(allocation.receivers)
    transmitters = tuple(allocation.transmitters)
    if not receivers:
        raise ConfigurationError("Echo synthesis needs at least one receiving AP")

    frames = build_frames(scenario, allocation, rng)
    m_t = scenario.antennas
    size = scenario.grid.size
    gains = np.zeros((scenario.num_aps, scenario.num_aps, scenario.num_targets), dtype=complex)

    signals: List[np.ndarray] = []
    for r in receivers:
        y = np.zeros((m_t, size), dtype=complex)
        for p in transmitters:
            for v, target in enumerate(scenario.targets):
                channel = assemble_reflected(scenario, p, r, v)
                gains[p, r, v] = path_gain(channel.path.xi, draw_rcs(target.rcs_variance, rng))
                y += gains[p, r, v] * channel.apply(frames[p].block)
        noise = rng.standard_normal((2, m_t, size))
        y += np.sqrt(scenario.noise_power / 2.0) * (noise[0] + 1j * noise[1])
        signals.append(y)

    logger.debug(f"Echo synthesized: {len(transmitters)} Tx, {len(receivers)} Rx, MN={size}")
    return Echo(transmitters, receivers, tuple(signals), frames, gains, scenario.noise_power)
