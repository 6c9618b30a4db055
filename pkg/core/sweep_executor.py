"""
Sweep Executor - Runs (policy, seed) simulations on worker threads
Reports progress through a callback and merges results by (policy, seed)
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import FleetCheckError
from .hazard_models import HazardModel, IncidentTrace
from .selector import CoverageTable
from .simulator import AllocationRequest, SimConfig, SimPolicy, SimReport, run_simulation

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, str], None]


class SweepStatus(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


@dataclass
class SweepResult:
    policy: SimPolicy
    seed: int
    status: SweepStatus
    report: Optional[SimReport] = None
    error: Optional[FleetCheckError] = None
    execution_time: float = 0.0

    @property
    def key(self) -> Tuple[str, int]:
        return self.policy.value, self.seed


class SweepExecutor:
    """Simulation sweep over shared, read-only inputs"""

    def __init__(
        self,
        allocations: Sequence[AllocationRequest],
        coverage: Optional[CoverageTable] = None,
        model: Optional[HazardModel] = None,
        trace: Optional[IncidentTrace] = None,
        workers: int = 1,
        progress_callback: Optional[ProgressCallback] = None,
    ):
        self.allocations = tuple(allocations)
        self.coverage = coverage
        self.model = model
        self.trace = trace
        self.workers = max(1, int(workers))
        self.progress_callback = progress_callback

    def _progress(self, progress: int, message: str):
        if self.progress_callback:
            self.progress_callback(progress, message)

    def run_one(self, config: SimConfig) -> SweepResult:
        result = SweepResult(config.policy, config.seed, SweepStatus.RUNNING)
        start = time.time()
        try:
            result.report = run_simulation(config, self.allocations, self.coverage, self.model, self.trace)
            result.status = SweepStatus.SUCCESS
        except FleetCheckError as e:
            logger.error(f"❌ {config.policy.value} seed {config.seed} failed: {e}")
            result.status = SweepStatus.FAILED
            result.error = e
        result.execution_time = time.time() - start
        return result

    def run(self, base: SimConfig, policies: Sequence[SimPolicy], seeds: Sequence[int]) -> List[SweepResult]:
        """Run every (policy, seed) pair; results come back sorted by that key"""
        configs = [replace(base, policy=SimPolicy.parse(p), seed=int(s)) for p in policies for s in seeds]
        total = len(configs)
        logger.info(f"🚀 Starting sweep of {total} simulations on {self.workers} workers")

        results: Dict[Tuple[str, int], SweepResult] = {}
        if self.workers == 1:
            for i, config in enumerate(configs):
                self._progress(int(i / total * 100), f"Simulating: {config.policy.value} seed {config.seed}")
                result = self.run_one(config)
                results[result.key] = result
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(self.run_one, config) for config in configs]
                for done, future in enumerate(as_completed(futures), start=1):
                    result = future.result()
                    results[result.key] = result
                    self._progress(int(done / total * 100), f"Finished: {result.policy.value} seed {result.seed}")

        self._progress(100, "Completed")
        ordered = [results[key] for key in sorted(results)]
        success_count = sum(1 for r in ordered if r.status is SweepStatus.SUCCESS)
        logger.info(f"✅ Sweep completed: {success_count}/{total} successful")
        return ordered
