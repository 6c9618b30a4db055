"""
Selector - Benchmark subset selection from an incident-probability model
Greedy probability decrement per time unit over historical benchmark coverage
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError
from .hazard_models import (
    HazardModel,
    HazardVariant,
    IncidentEvent,
    IncidentTrace,
    NodeStatus,
    SurvivalSample,
    extract_samples,
    fit_model,
    fit_samples,
    model_accuracy,
    predict_tbni,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkInfo:
    """A benchmark's running time and the defect nodes it has found historically"""
    benchmark_id: str
    running_time_s: float
    defect_node_ids: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if not self.running_time_s > 0:
            raise InvalidInputError(f"Benchmark {self.benchmark_id} needs a positive running time")
        object.__setattr__(self, "defect_node_ids", frozenset(self.defect_node_ids))


class CoverageTable:
    """Per-benchmark defect sets and the defect universe they span"""

    def __init__(self, benchmarks: Iterable[BenchmarkInfo]):
        ordered = sorted(benchmarks, key=lambda b: b.benchmark_id)
        ids = [b.benchmark_id for b in ordered]
        if len(ids) != len(set(ids)):
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidInputError(f"Duplicate benchmark ids: {duplicates}")

        self.benchmarks: Dict[str, BenchmarkInfo] = {b.benchmark_id: b for b in ordered}
        self.universe: FrozenSet[str] = frozenset().union(*(b.defect_node_ids for b in ordered))

    @classmethod
    def from_validation_log(cls, entries: Iterable[Tuple[str, str]], running_times: Mapping[str, float]) -> "CoverageTable":
        """Rebuild coverage from a cumulative log of (benchmark_id, defect node_id) findings"""
        found: Dict[str, set] = {benchmark: set() for benchmark in running_times}
        for benchmark_id, node_id in entries:
            if benchmark_id not in found:
                raise InvalidInputError(f"Validation log names unknown benchmark {benchmark_id!r}")
            found[benchmark_id].add(node_id)
        return cls(BenchmarkInfo(b, running_times[b], frozenset(nodes)) for b, nodes in found.items())

    @property
    def benchmark_ids(self) -> List[str]:
        return list(self.benchmarks)

    def __len__(self):
        return len(self.benchmarks)

    def total_time(self, subset: Iterable[str]) -> float:
        return sum(self.benchmarks[b].running_time_s for b in set(subset))

    def coverage(self, subset: Iterable[str]) -> float:
        """Share of the defect universe found by the subset"""
        chosen = set(subset)
        unknown = chosen - set(self.benchmarks)
        if unknown:
            raise InvalidInputError(f"Unknown benchmarks: {sorted(unknown)}")

        if not self.universe:
            return 1.0 if chosen == set(self.benchmarks) else 0.0
        found = frozenset().union(*(self.benchmarks[b].defect_node_ids for b in chosen))
        return len(found) / len(self.universe)


@dataclass
class SelectionOutcome:
    """Chosen benchmarks and the residual incident probability they leave"""
    chosen: Tuple[str, ...] = ()
    coverage: float = 0.0
    residual: float = 0.0
    total_time_s: float = 0.0
    initial_probability: float = 0.0
    skipped: bool = False


def joint_incident_probability(nodes: Sequence[NodeStatus], model: HazardModel, horizon_hours: float) -> float:
    """1 - prod(1 - F_n(t0)) over independent nodes"""
    if not nodes:
        return 0.0
    marginals = np.array([model.predict_cdf(status, horizon_hours) for status in nodes], dtype=float)
    marginals = np.clip(marginals, 0.0, 1.0)
    return float(-np.expm1(np.sum(np.log1p(-marginals))))


def incident_prob(
    nodes: Sequence[NodeStatus],
    subset: Iterable[str],
    model: HazardModel,
    horizon_hours: float,
    coverage: CoverageTable,
) -> float:
    """Joint incident probability left after validating with the subset"""
    return joint_incident_probability(nodes, model, horizon_hours) * (1.0 - coverage.coverage(subset))


def _coverage_table(benchmarks: Union[CoverageTable, Iterable[BenchmarkInfo]]) -> CoverageTable:
    return benchmarks if isinstance(benchmarks, CoverageTable) else CoverageTable(benchmarks)


def _check_threshold(p0: float):
    if not 0.0 < p0 < 1.0:
        raise InvalidInputError(f"p0 must lie in (0, 1), got {p0}")


def select_benchmarks(
    nodes: Sequence[NodeStatus],
    benchmarks: Union[CoverageTable, Iterable[BenchmarkInfo]],
    model: HazardModel,
    p0: float,
    t0_hours: float,
) -> SelectionOutcome:
    """Greedily add the benchmark with the best probability decrement per second.

    Stops once the residual probability is at most p0 or every benchmark is
    chosen. Ties go to the lower benchmark id.
    """
    _check_threshold(p0)
    table = _coverage_table(benchmarks)
    probability = joint_incident_probability(nodes, model, t0_hours)

    if probability <= p0:
        logger.debug(f"🔍 Incident probability {probability:.4f} <= p0 {p0}; validation skipped")
        return SelectionOutcome((), 0.0, probability, 0.0, probability, skipped=True)

    chosen: List[str] = []
    residual = probability * (1.0 - table.coverage(chosen))

    while residual > p0 and len(chosen) < len(table):
        best_id, best_gain, best_residual = None, -math.inf, residual
        for benchmark_id in table.benchmark_ids:
            if benchmark_id in chosen:
                continue
            after = probability * (1.0 - table.coverage(chosen + [benchmark_id]))
            gain = (residual - after) / table.benchmarks[benchmark_id].running_time_s
            if gain > best_gain:
                best_id, best_gain, best_residual = benchmark_id, gain, after

        chosen.append(best_id)
        residual = best_residual

    if residual > p0:
        logger.warning(f"⚠️ Full benchmark set leaves residual {residual:.4f} above p0 {p0}")

    outcome = SelectionOutcome(
        tuple(chosen), table.coverage(chosen), residual, table.total_time(chosen), probability, False,
    )
    logger.info(f"✅ Selected {len(chosen)} of {len(table)} benchmarks, residual {residual:.4f}")
    return outcome


def exhaustive_selection(
    nodes: Sequence[NodeStatus],
    benchmarks: Union[CoverageTable, Iterable[BenchmarkInfo]],
    model: HazardModel,
    p0: float,
    t0_hours: float,
) -> SelectionOutcome:
    """Cheapest subset meeting p0 by enumerating all 2^n subsets; the full set when none does"""
    _check_threshold(p0)
    table = _coverage_table(benchmarks)
    probability = joint_incident_probability(nodes, model, t0_hours)
    if probability <= p0:
        return SelectionOutcome((), 0.0, probability, 0.0, probability, skipped=True)

    ids = table.benchmark_ids
    best: Optional[Tuple[float, Tuple[str, ...]]] = None
    for size in range(len(ids) + 1):
        for subset in combinations(ids, size):
            if probability * (1.0 - table.coverage(subset)) > p0:
                continue
            cost = table.total_time(subset)
            if best is None or cost < best[0]:
                best = (cost, subset)

    subset = best[1] if best is not None else tuple(ids)
    return SelectionOutcome(
        subset, table.coverage(subset), probability * (1.0 - table.coverage(subset)),
        table.total_time(subset), probability, False,
    )


def p0_from_job_durations(durations_hours: Sequence[float], horizon_hours: float) -> float:
    """Probability that an exponential clock with the mean job duration fires within the horizon"""
    durations = np.asarray(list(durations_hours), dtype=float)
    if durations.size == 0 or np.any(durations <= 0) or horizon_hours <= 0:
        raise InvalidInputError("Need positive job durations and a positive horizon")
    return float(-np.expm1(-horizon_hours / durations.mean()))


__all__ = [
    "BenchmarkInfo", "CoverageTable", "SelectionOutcome", "HazardModel", "HazardVariant",
    "IncidentEvent", "IncidentTrace", "NodeStatus", "SurvivalSample",
    "extract_samples", "fit_model", "fit_samples", "predict_tbni", "model_accuracy",
    "joint_incident_probability", "incident_prob", "select_benchmarks", "exhaustive_selection",
    "p0_from_job_durations",
]
