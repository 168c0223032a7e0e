"""
Scene generation: access points, users, targets and the geometric path parameters
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import integrate, linalg

from src.core.exceptions import ConfigurationError, DegenerateGeometryError
from src.utils.config import GridConfig, ScenarioConfig
from src.utils.constants import CHANNEL_SETTINGS, NUMERICS, SPEED_OF_LIGHT, Placement, Waveform

def _frozen(array) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array

def spawn_rng(seed: int, *indices: int) -> np.random.Generator:
    """Independent stream for (seed, index, ...), identical on every platform"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))

def derive_seed(seed: int, *indices: int) -> int:
    """64-bit seed for a child stream, e.g. (base_seed, sweep_index, trial_index)"""
    state = np.random.SeedSequence([int(seed), *map(int, indices)]).generate_state(1, np.uint64)
    return int(state[0])

def unit_from_degrees(angle_deg: float) -> np.ndarray:
    """Unit vector at angle_deg, exact at multiples of 90 degrees"""
    quarter, rest = divmod(float(angle_deg), 90.0)
    if rest == 0.0:
        exact = {0: (1.0, 0.0), 1: (0.0, 1.0), 2: (-1.0, 0.0), 3: (0.0, -1.0)}
        return np.array(exact[int(quarter) % 4])
    theta = math.radians(angle_deg)
    return np.array([math.cos(theta), math.sin(theta)])

@dataclass(frozen=True)
class OtfsGrid:
    """Critically sampled delay-Doppler grid"""
    M: int                 # subcarriers / delay bins
    N: int                 # symbols / Doppler bins
    delta_f: float         # Hz
    T: float               # s, T * delta_f = 1
    N_cp: int              # cyclic prefix samples
    carrier_freq: float    # Hz

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ConfigurationError(f"Grid needs M, N >= 1 (got {self.M}, {self.N})")
        if abs(self.T * self.delta_f - 1.0) > 1e-12:
            raise ConfigurationError("Grid must be critically sampled (T * delta_f = 1)")
        if self.N_cp < 0:
            raise ConfigurationError("N_cp must be nonnegative")

    @classmethod
    def from_config(cls, config: GridConfig, max_delay: float) -> "OtfsGrid":
        """N_cp = ceil(tau_max * M * delta_f) unless pinned by the config"""
        delta_f = config.bandwidth_hz / config.subcarriers
        n_cp = config.cp_samples
        if n_cp is None:
            n_cp = int(math.ceil(max_delay * config.subcarriers * delta_f - NUMERICS['tap_snap']))
        return cls(
            M=config.subcarriers,
            N=config.symbols,
            delta_f=delta_f,
            T=1.0 / delta_f,
            N_cp=max(n_cp, 0),
            carrier_freq=config.carrier_freq_hz,
        )

    @property
    def size(self) -> int:
        return self.M * self.N

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def ofdm_cp_duration(self) -> float:
        """T_cp when one OFDM symbol (CP included) lasts T"""
        return self.T * self.N_cp / (self.M + self.N_cp)

    @property
    def ofdm_useful_duration(self) -> float:
        """T_0 = T - T_cp"""
        return self.T * self.M / (self.M + self.N_cp)

@dataclass(frozen=True, eq=False)
class AccessPoint:
    index: int
    position: np.ndarray
    array_direction: np.ndarray  # unit vector u_p
    num_antennas: int
    max_power: float             # P_d in W

    def __post_init__(self):
        if abs(np.linalg.norm(self.array_direction) - 1.0) > 1e-12:
            raise ConfigurationError(f"AP {self.index}: array direction must be a unit vector")
        if self.num_antennas < 1 or self.max_power <= 0:
            raise ConfigurationError(f"AP {self.index}: needs >= 1 antenna and positive power")

@dataclass(frozen=True, eq=False)
class Target:
    index: int
    position: np.ndarray
    velocity: np.ndarray
    rcs_variance: float          # m^2
    hotspot_center: np.ndarray
    hotspot_half_width: float

    def __post_init__(self):
        if self.rcs_variance <= 0:
            raise ConfigurationError(f"Target {self.index}: RCS variance must be positive")
        offset = np.abs(np.asarray(self.position) - np.asarray(self.hotspot_center))
        if np.any(offset > self.hotspot_half_width + 1e-9):
            raise ConfigurationError(f"Target {self.index} lies outside its hotspot")

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

@dataclass(frozen=True, eq=False)
class UserEquipment:
    index: int
    position: np.ndarray
    velocity: np.ndarray
    num_paths: int

@dataclass(frozen=True, eq=False)
class CommChannel:
    """Multipath statistics of one AP-user link"""
    delays: np.ndarray                 # (L,) s
    dopplers: np.ndarray               # (L,) Hz
    angles: np.ndarray                 # (L,) rad, nominal angle to the array axis
    correlations: np.ndarray           # (L, Mt, Mt) R_pq,i
    estimate_covariances: np.ndarray   # (L, Mt, Mt) B_pq,i

    @property
    def num_paths(self) -> int:
        return len(self.delays)

@dataclass(frozen=True, eq=False)
class PathParams:
    """Bistatic reflection p -> v -> r"""
    aoa: float             # omega_r
    aod: float             # omega_t
    delay: float           # s
    doppler: float         # Hz
    gain: float            # RMS amplitude sqrt(sigma_rcs^2 * xi)
    unit_tx: np.ndarray    # rho_pv = (p_p - p_v) / d_pv
    unit_rx: np.ndarray    # rho_vr = (p_v - p_r) / d_vr
    d_tx: float
    d_rx: float
    xi: float              # lambda^2 / ((4 pi)^3 d_pv^2 d_vr^2)

@dataclass(frozen=True, eq=False)
class Scenario:
    grid: OtfsGrid
    aps: Tuple[AccessPoint, ...]
    users: Tuple[UserEquipment, ...]
    targets: Tuple[Target, ...]
    noise_power: float
    rng_seed: int
    waveform: Waveform = Waveform.OTFS
    comm_channels: Tuple[Tuple[CommChannel, ...], ...] = ()  # [p][q]
    aod_estimates: Optional[np.ndarray] = None                # (N_AP, T_g)
    scene_size: float = 0.0

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ConfigurationError("Noise power must be positive")

    @property
    def num_aps(self) -> int:
        return len(self.aps)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_targets(self) -> int:
        return len(self.targets)

    @property
    def antennas(self) -> int:
        return self.aps[0].num_antennas

    @property
    def max_power(self) -> float:
        return self.aps[0].max_power

    def path(self, p: int, r: int, v: int) -> PathParams:
        return path_parameters(self.aps[p], self.aps[r], self.targets[v], self.grid)

    def aod_estimate(self, p: int, v: int) -> float:
        if self.aod_estimates is None:
            return self.path(p, p, v).aod
        return float(self.aod_estimates[p, v])

    def hotspot_distance(self, p: int, v: int) -> float:
        """Distance from AP p to the centre of target v's hotspot"""
        return float(np.linalg.norm(self.aps[p].position - self.targets[v].hotspot_center))

def array_response(omega: float, m_t: int) -> np.ndarray:
    """ULA response, element i = exp(-j i omega)"""
    if m_t < 1:
        raise ValueError("m_t must be >= 1")
    return np.exp(-1j * np.arange(m_t) * omega)

def sensing_precoder(aod_estimate: float, m_t: int) -> np.ndarray:
    """Unit-norm beam pointed at the estimated AoD"""
    return array_response(aod_estimate, m_t) / np.sqrt(m_t)

def draw_rcs(sigma2: float, rng: np.random.Generator, size=None):
    """Swerling-I gain alpha ~ CN(0, sigma2)"""
    if sigma2 <= 0:
        raise ValueError("RCS variance must be positive")
    scale = np.sqrt(sigma2 / 2.0)
    alpha = scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    return complex(alpha) if size is None else alpha

def radar_path_loss(wavelength: float, d_tx: float, d_rx: float) -> float:
    """xi, symmetric in (d_tx, d_rx)"""
    return wavelength ** 2 / ((4.0 * np.pi) ** 3 * d_tx ** 2 * d_rx ** 2)

def path_gain(xi: float, alpha: complex) -> complex:
    """beta = alpha * xi^(1/2)"""
    return alpha * np.sqrt(xi)

def path_parameters(tx: AccessPoint, rx: AccessPoint, tgt: Target, grid: OtfsGrid) -> PathParams:
    to_tx = np.asarray(tx.position, dtype=float) - tgt.position
    from_rx = np.asarray(tgt.position, dtype=float) - rx.position
    d_tx = float(np.hypot(*to_tx))
    d_rx = float(np.hypot(*from_rx))
    if d_tx < 1e-9 or d_rx < 1e-9:
        raise DegenerateGeometryError(
            f"Target {tgt.index} coincides with AP {tx.index if d_tx < 1e-9 else rx.index}"
        )

    unit_tx = to_tx / d_tx
    unit_rx = from_rx / d_rx
    wavelength = grid.wavelength
    xi = radar_path_loss(wavelength, d_tx, d_rx)

    return PathParams(
        aoa=float(np.pi * unit_rx @ rx.array_direction),
        aod=float(np.pi * unit_tx @ tx.array_direction),
        delay=(d_tx + d_rx) / SPEED_OF_LIGHT,
        doppler=float(tgt.velocity @ (unit_tx + unit_rx)) / wavelength,
        gain=float(np.sqrt(tgt.rcs_variance * xi)),
        unit_tx=unit_tx,
        unit_rx=unit_rx,
        d_tx=d_tx,
        d_rx=d_rx,
        xi=xi,
    )

# Communication channel statistics

def umi_path_loss_db(distance: float, carrier_freq: float, intercept_db: float, slope_db: float) -> float:
    return intercept_db + 20.0 * np.log10(carrier_freq / 1e9) + slope_db * np.log10(distance)

def local_scattering(angle: float, m_t: int, angular_std: float, exact: bool = False) -> np.ndarray:
    """Normalised spatial correlation of a ULA for Gaussian angular spread around ``angle``.

    ``angle`` is measured from the array axis, so the steering phase is pi*cos(angle).
    The default uses the small-spread closed form; ``exact`` integrates numerically.
    """
    lags = np.arange(m_t)
    if exact and angular_std > 0:
        column = np.zeros(m_t, dtype=complex)
        column[0] = 1.0
        pdf_norm = 1.0 / (np.sqrt(2.0 * np.pi) * angular_std)
        limit = 20.0 * angular_std
        for lag in lags[1:]:
            def density(delta, part):
                phase = -lag * np.pi * np.cos(angle + delta)
                weight = pdf_norm * np.exp(-delta ** 2 / (2.0 * angular_std ** 2))
                return weight * (np.cos(phase) if part == 0 else np.sin(phase))
            real = integrate.quad(density, -limit, limit, args=(0,))[0]
            imag = integrate.quad(density, -limit, limit, args=(1,))[0]
            column[lag] = real + 1j * imag
    else:
        column = np.exp(-1j * lags * np.pi * np.cos(angle)) * np.exp(
            -0.5 * (angular_std * lags * np.pi * np.sin(angle)) ** 2
        )
    # R[m, n] depends on m - n only
    return linalg.toeplitz(column, column.conj())

def estimate_covariance(correlation: np.ndarray, pilot_snr: float) -> np.ndarray:
    """MMSE estimate covariance B = R (R + (Tr R / (Mt rho)) I)^-1 R"""
    m_t = correlation.shape[0]
    noise = np.trace(correlation).real / (m_t * pilot_snr)
    shaped = linalg.solve(correlation + noise * np.eye(m_t), correlation, assume_a='her')
    b = correlation @ shaped
    return 0.5 * (b + b.conj().T)

def _comm_channel(ap: AccessPoint, user: UserEquipment, config: ScenarioConfig,
                  wavelength: float, rng: np.random.Generator) -> CommChannel:
    offset = user.position - ap.position
    distance = max(float(np.hypot(*offset)), CHANNEL_SETTINGS['min_distance_m'])
    loss_db = umi_path_loss_db(distance, config.grid.carrier_freq_hz,
                               config.pathloss_intercept_db, config.pathloss_slope_db)
    loss_db += config.shadowing_std_db * rng.standard_normal()
    gain = 10.0 ** (-loss_db / 10.0) / user.num_paths

    los = math.acos(float(np.clip(offset @ ap.array_direction / max(np.hypot(*offset), 1e-12), -1.0, 1.0)))
    std = math.radians(config.angular_std_deg)
    angles = los + std * rng.standard_normal(user.num_paths)
    delays = rng.uniform(0.0, config.comm_delay_spread_s, user.num_paths)
    headings = rng.uniform(0.0, 2.0 * np.pi, user.num_paths)
    dopplers = np.linalg.norm(user.velocity) / wavelength * np.cos(headings)

    correlations = np.stack([
        gain * local_scattering(a, ap.num_antennas, std, exact=config.exact_local_scattering)
        for a in angles
    ])
    covariances = np.stack([estimate_covariance(r, config.pilot_snr) for r in correlations])
    return CommChannel(
        delays=_frozen(delays),
        dopplers=_frozen(dopplers),
        angles=_frozen(angles),
        correlations=_frozen(correlations),
        estimate_covariances=_frozen(covariances),
    )

# Generation

def _check_config(config: ScenarioConfig):
    if config.num_users == 0 and config.num_targets == 0:
        raise ConfigurationError("Nothing to simulate: no users and no targets")
    if config.multistatic and config.num_targets > 0 and config.num_aps < 2:
        raise ConfigurationError("Multi-static sensing needs at least two APs")
    if config.hotspot_size_m > config.size_m:
        raise ConfigurationError("Hotspot larger than the scene box")

def _random_heading_velocity(rng: np.random.Generator, max_speed: float) -> np.ndarray:
    speed = rng.uniform(0.0, max_speed)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    return speed * np.array([np.cos(heading), np.sin(heading)])

def _place_aps(config: ScenarioConfig, rng: np.random.Generator) -> Tuple[AccessPoint, ...]:
    n = config.num_aps
    if config.placement == Placement.GRID:
        side = int(math.ceil(math.sqrt(n)))
        spacing = config.size_m / side
        cells = [((i % side) + 0.5, (i // side) + 0.5) for i in range(n)]
        positions = np.array(cells) * spacing
    else:
        positions = rng.uniform(0.0, config.size_m, (n, 2))

    headings = rng.uniform(0.0, 2.0 * np.pi, n)
    aps = []
    for p in range(n):
        direction = np.array([np.cos(headings[p]), np.sin(headings[p])])
        direction = direction / np.linalg.norm(direction)
        aps.append(AccessPoint(
            index=p,
            position=_frozen(positions[p]),
            array_direction=_frozen(direction),
            num_antennas=config.antennas,
            max_power=config.max_power_w,
        ))
    return tuple(aps)

def _place_targets(config: ScenarioConfig, aps: Sequence[AccessPoint],
                   rng: np.random.Generator) -> Tuple[Target, ...]:
    half = config.hotspot_size_m / 2.0
    separation = NUMERICS['min_ap_separation_m']
    ap_positions = np.array([ap.position for ap in aps])
    targets = []
    for v in range(config.num_targets):
        for _ in range(100):
            center = rng.uniform(half, config.size_m - half, 2)
            position = center + rng.uniform(-half, half, 2)
            if np.min(np.linalg.norm(ap_positions - position, axis=1)) >= separation:
                break
        else:
            raise DegenerateGeometryError(f"Could not place target {v} away from the APs")

        if config.static_targets:
            velocity = np.zeros(2)
        else:
            velocity = _random_heading_velocity(rng, config.max_speed_ms)
        targets.append(Target(
            index=v,
            position=_frozen(position),
            velocity=_frozen(velocity),
            rcs_variance=config.rcs_variance_m2,
            hotspot_center=_frozen(center),
            hotspot_half_width=half,
        ))
    return tuple(targets)

def _place_users(config: ScenarioConfig, rng: np.random.Generator) -> Tuple[UserEquipment, ...]:
    users = []
    for q in range(config.num_users):
        position = rng.uniform(0.0, config.size_m, 2)
        users.append(UserEquipment(
            index=q,
            position=_frozen(position),
            velocity=_frozen(_random_heading_velocity(rng, config.max_speed_ms)),
            num_paths=config.user_paths,
        ))
    return tuple(users)

def _draw_aod_estimates(aps, targets, grid, error_std_deg: float, rng) -> np.ndarray:
    estimates = np.zeros((len(aps), len(targets)))
    std = math.radians(error_std_deg)
    for p, ap in enumerate(aps):
        for v, tgt in enumerate(targets):
            true_aod = path_parameters(ap, ap, tgt, grid).aod
            error = std * rng.standard_normal()
            if std == 0.0:
                estimates[p, v] = true_aod
            else:
                angle = math.acos(float(np.clip(true_aod / np.pi, -1.0, 1.0)))
                estimates[p, v] = np.pi * math.cos(angle + error)
    return _frozen(estimates)

def max_bistatic_delay(size_m: float) -> float:
    """Longest AP -> target -> AP delay inside a square box"""
    return 2.0 * math.sqrt(2.0) * size_m / SPEED_OF_LIGHT

def assemble_scenario(config: ScenarioConfig, aps: Sequence[AccessPoint], targets: Sequence[Target],
                      users: Sequence[UserEquipment] = (), seed: int = 0,
                      grid: Optional[OtfsGrid] = None) -> Scenario:
    """Scenario from explicit entities; channel statistics are drawn from ``seed``"""
    if grid is None:
        grid = OtfsGrid.from_config(config.grid, max_bistatic_delay(config.size_m))
    rng = spawn_rng(seed, 1)

    comm_channels = tuple(
        tuple(_comm_channel(ap, user, config, grid.wavelength, rng) for user in users)
        for ap in aps
    )
    aod_estimates = _draw_aod_estimates(aps, targets, grid, config.aod_error_deg, rng)

    return Scenario(
        grid=grid,
        aps=tuple(aps),
        users=tuple(users),
        targets=tuple(targets),
        noise_power=config.noise_power_w,
        rng_seed=int(seed),
        waveform=config.grid.waveform,
        comm_channels=comm_channels,
        aod_estimates=aod_estimates,
        scene_size=config.size_m,
    )

def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Random scene drawn from ``config``; deterministic in (config, seed)"""
    _check_config(config)
    rng = spawn_rng(seed, 0)

    aps = _place_aps(config, rng)
    targets = _place_targets(config, aps, rng)
    users = _place_users(config, rng)

    scenario = assemble_scenario(config, aps, targets, users, seed=seed)
    logger.debug(
        f"Scenario seed={seed}: {len(aps)} APs, {len(users)} users, {len(targets)} targets, "
        f"M={scenario.grid.M} N={scenario.grid.N} N_cp={scenario.grid.N_cp}"
    )
    return scenario
