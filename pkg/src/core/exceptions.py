"""
Error hierarchy of the simulator
"""

class SimulationError(Exception):
    """Base class for every error raised by the simulation library"""

class ConfigurationError(SimulationError):
    pass

class DegenerateGeometryError(SimulationError):
    """A target coincides with an AP, so a path length is zero"""

class DelayOutOfRangeError(SimulationError):
    """Delay beyond what the waveform can represent (l_tau >= M, or tau > T_cp)"""

class SizeGuardError(SimulationError):
    """Dense materialisation requested above the size limit"""

class ConditioningError(SimulationError):
    pass

class EstimationFailure(SimulationError):
    pass

class SingularInformationError(SimulationError):
    pass

class InfeasibleProblemError(SimulationError):
    """Raised when the CRLB budget cannot be met.

    ``certificate`` is the smallest achievable max_v Tr(F_v^-1) (m^2) for the
    mode split that was tried, which exceeds the budget.
    """

    def __init__(self, message: str, certificate: float = float('nan')):
        super().__init__(message)
        self.certificate = certificate

class ConvergenceFailure(SimulationError):
    """Solver stopped without meeting its tolerances; ``best_iterate`` is the last good point"""

    def __init__(self, message: str, best_iterate=None):
        super().__init__(message)
        self.best_iterate = best_iterate
