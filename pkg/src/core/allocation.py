"""
AP modes and power coefficients shared by the channel, bound and optimizer modules
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

@dataclass
class ResourceAllocation:
    """Mode vector a and power coefficients eta.

    ``powers`` is laid out AP-major: for AP p the K_u user coefficients come
    first, then the T_g target coefficients.
    """
    modes: np.ndarray
    powers: np.ndarray
    num_users: int
    num_targets: int
    min_sinr: float = 0.0
    iterations: int = 0
    binary_gap: float = 0.0
    kkt_residual: float = 0.0
    feasible: bool = True
    certificate: float = float('nan')
    scheme: str = ""
    trace: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=float)
        self.powers = np.asarray(self.powers, dtype=float)
        expected = self.modes.size * (self.num_users + self.num_targets)
        if self.powers.size != expected:
            raise ValueError(f"Expected {expected} power coefficients, got {self.powers.size}")
        if np.any(self.modes < -1e-12) or np.any(self.modes > 1 + 1e-12):
            raise ValueError("AP modes must lie in [0, 1]")
        if np.any(self.powers < 0):
            raise ValueError("Power coefficients must be nonnegative")

    @classmethod
    def from_blocks(cls, modes, comm_powers, sensing_powers, **kwargs) -> "ResourceAllocation":
        comm_powers = np.asarray(comm_powers, dtype=float)
        sensing_powers = np.asarray(sensing_powers, dtype=float)
        num_aps = len(modes)
        comm_powers = comm_powers.reshape(num_aps, -1)
        sensing_powers = sensing_powers.reshape(num_aps, -1)
        powers = np.concatenate([comm_powers, sensing_powers], axis=1).ravel()
        return cls(
            modes=modes,
            powers=powers,
            num_users=comm_powers.shape[1],
            num_targets=sensing_powers.shape[1],
            **kwargs,
        )

    @property
    def num_aps(self) -> int:
        return self.modes.size

    @property
    def _blocks(self) -> np.ndarray:
        return self.powers.reshape(self.num_aps, self.num_users + self.num_targets)

    @property
    def comm_powers(self) -> np.ndarray:
        """eta_pq, shape (N_AP, K_u)"""
        return self._blocks[:, :self.num_users]

    @property
    def sensing_powers(self) -> np.ndarray:
        """eta_pv, shape (N_AP, T_g)"""
        return self._blocks[:, self.num_users:]

    @property
    def transmitters(self) -> List[int]:
        return [p for p in range(self.num_aps) if self.modes[p] >= 0.5]

    @property
    def receivers(self) -> List[int]:
        return [p for p in range(self.num_aps) if self.modes[p] < 0.5]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.modes == 0.0) | (self.modes == 1.0)))

    def to_dict(self) -> Dict:
        return {
            'scheme': self.scheme,
            'transmitters': self.transmitters,
            'receivers': self.receivers,
            'num_tx': len(self.transmitters),
            'num_rx': len(self.receivers),
            'modes': self.modes.tolist(),
            'comm_powers': self.comm_powers.tolist(),
            'sensing_powers': self.sensing_powers.tolist(),
            'min_sinr': float(self.min_sinr),
            'feasible': bool(self.feasible),
            'iterations': int(self.iterations),
            'binary_gap': float(self.binary_gap),
            'kkt_residual': float(self.kkt_residual),
        }

def modes_from_receivers(num_aps: int, receivers) -> np.ndarray:
    """Binary mode vector with a_p = 0 for the given receivers"""
    modes = np.ones(num_aps)
    modes[list(receivers)] = 0.0
    return modes

def empty_allocation(modes, num_users: int, num_targets: int) -> ResourceAllocation:
    modes = np.asarray(modes, dtype=float)
    return ResourceAllocation(
        modes=modes,
        powers=np.zeros(modes.size * (num_users + num_targets)),
        num_users=num_users,
        num_targets=num_targets,
    )
