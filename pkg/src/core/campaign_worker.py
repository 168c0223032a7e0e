"""
Campaign Worker - runs the trials of a campaign across worker processes
"""

from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import psutil
from loguru import logger

from src.core.experiments import TrialResult, run_trial
from src.utils.config import SimulationConfig
from src.utils.constants import ExperimentKind

def default_workers() -> int:
    """Physical cores, or 1 when they cannot be counted"""
    return psutil.cpu_count(logical=False) or 1

class CampaignWorker:
    """
    Executes (sweep point, trial) jobs and returns them in index order.
    Every trial seeds itself from its indices, so the pool size never
    changes the results.
    """

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or default_workers()

    def jobs(self, values: Sequence[float], trials: int) -> List[tuple]:
        return [(i, value, j) for i, value in enumerate(values) for j in range(trials)]

    def run(self, kind: ExperimentKind, config: SimulationConfig, values: Sequence[float],
            trials: int, base_seed: int) -> List[TrialResult]:
        jobs = self.jobs(values, trials)
        logger.info(f"Running {len(jobs)} trials on {min(self.workers, len(jobs))} worker(s)")

        if self.workers == 1 or len(jobs) == 1:
            results = [run_trial(kind, config, i, value, j, base_seed) for i, value, j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures = [
                    pool.submit(run_trial, kind, config, i, value, j, base_seed)
                    for i, value, j in jobs
                ]
                # gathered in submission order, never completion order
                results = [future.result() for future in futures]

        for result in results:
            if result.status != "ok":
                logger.warning(
                    f"Trial ({result.sweep_index}, {result.trial_index}) flagged '{result.status}': {result.error}"
                )
        logger.info(f"Collected {len(results)} trial results")
        return results
