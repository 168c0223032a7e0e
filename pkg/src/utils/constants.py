"""
Constants for the cell-free OTFS ISAC simulator
"""

from enum import Enum

APP_NAME = "CellFreeIsacSim"

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Environment override for the output directory (the only one)
OUTPUT_DIR_ENV = "OTFS_ISAC_OUTPUT_DIR"

class Waveform(Enum):
    OTFS = "otfs"
    OFDM = "ofdm"

class Scheme(Enum):
    """AP mode selection schemes compared in the tradeoff experiments"""
    JAP = "jap"    # joint mode selection and power allocation
    CAP = "cap"    # closest-AP receivers, then power allocation
    RAP = "rap"    # random receivers + power allocation

class BoundMode(Enum):
    EXACT = "exact"
    APPROX = "approx"

class ObjectiveMode(Enum):
    FULL = "full"              # reduced log-likelihood with A_r^{-1}
    SIMPLIFIED = "simplified"  # orthogonality approximation

class CrlbForm(Enum):
    """Representation of Tr(F^{-1}) <= bound inside the convex subproblem"""
    SMOOTH = "smooth"  # closed-form 2x2 tr/det, cvxopt interior point
    SCHUR = "schur"    # [[F, I], [I, S]] >> 0, Tr S <= bound, cvxpy

class Placement(Enum):
    UNIFORM = "uniform"
    GRID = "grid"

class ExperimentKind(Enum):
    PEB_VS_TARGETS = "peb_vs_targets"
    RMSE_VS_RCS = "rmse_vs_rcs"
    PEB_VS_AOA = "peb_vs_aoa"
    CONVERGENCE = "convergence"
    SE_VS_PEB_BUDGET = "se_vs_peb_budget"
    MOBILITY_SWEEP = "mobility_sweep"
    WAVEFORM_GAP = "waveform_gap"
    CELLULAR_BASELINE = "cellular_baseline"
    SE_VS_RCS = "se_vs_rcs"

# Simulation parameters of the reference setup
REFERENCE_DEFAULTS = {
    'subcarriers': 128,
    'symbols': 128,
    'bandwidth_hz': 64e6,
    'carrier_freq_hz': 38e9,
    'size_m': 300.0,
    'num_aps': 32,
    'antennas': 16,
    'max_power_w': 1.0,
    'num_users': 10,
    'num_targets': 2,
    'max_speed_kmh': 300.0,
    'user_paths': 4,
    'angular_std_deg': 15.0,
    'noise_power_dbm': -89.0,
    'rcs_variance_dbsm': 0.0,
    'peb_threshold_m': 0.1,
}

# Small enough for dense Psi and for the echo/grid-search path
DESK_DEFAULTS = {
    'subcarriers': 16,
    'symbols': 16,
    'bandwidth_hz': 8e6,
    'size_m': 150.0,
    'num_aps': 8,
    'antennas': 4,
    'num_users': 4,
    'num_targets': 1,
}

# Channel model settings
CHANNEL_SETTINGS = {
    'pathloss_intercept_db': 32.4,   # 3GPP UMi street canyon, NLoS fit
    'pathloss_slope_db': 31.9,
    'min_distance_m': 10.0,
    'pilot_snr_db': 20.0,
    'comm_delay_spread_s': 1e-6,
    'hotspot_size_m': 20.0,
}

# Numerical tolerances shared across modules
NUMERICS = {
    'tap_snap': 1e-9,             # snapping of tau*M*df to the nearest integer
    'dense_limit': 4096,          # largest MN for which dense Psi is built
    'singular_det_abs': 1e-18,
    'singular_det_rel': 1e-12,
    'conditioning_limit': 1e12,
    'regularization': 1e-8,
    'min_ap_separation_m': 1.0,
}

SOLVER_SETTINGS = {
    'penalty': 10.0,
    'initial_mode': 0.5,
    'sca_tolerance': 1e-3,
    'sca_max_iterations': 30,
    'qt_tolerance': 1e-3,
    'qt_max_iterations': 50,
    'cap_tolerance': 1e-3,
    'feasibility_margin': 1e-7,
    'feasibility_tolerance': 1e-7,   # accepted primal violation of a subproblem
    'kkt_tolerance': 1e-6,           # accepted relative KKT residual of a subproblem
    'rounding_threshold': 0.5,
}

# Frame variants of the mobility sweep: divisors of (subcarriers, symbols)
MOBILITY_FRAMES = {
    'full': (1, 1),
    'half_m': (2, 1),
    'half_n': (1, 2),
}

# Single co-located transmit/receive site holding every antenna of the cell-free network
CELLULAR_BASELINE = {
    'max_power_w': 5.0,
}

SEARCH_STEPS = (10.0, 1.0, 0.1)

DB_NAME = "campaigns.db"
LOG_FILE = "simulation_log.txt"
