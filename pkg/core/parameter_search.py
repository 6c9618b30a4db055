"""
Parameter Search - Warmup and measurement window tuning for step benchmarks
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .metricspace import MetricSample, similarity

logger = logging.getLogger(__name__)

SIMILAR_CYCLES = 3
PEAK_FRACTION = 0.5


@dataclass(frozen=True)
class StepSeries:
    """Per-step throughput of one end-to-end benchmark run"""
    values: Tuple[float, ...]
    node_id: str
    metric_id: str = "throughput"

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if len(values) < 2:
            raise InvalidInputError(f"Step series for {self.node_id} needs at least two steps")
        array = np.asarray(values)
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise InvalidInputError(f"Step series for {self.node_id} must hold finite, non-negative values")
        object.__setattr__(self, "values", values)

    def window(self, warmup: int, measure: int) -> MetricSample:
        return MetricSample(self.values[warmup:warmup + measure], self.metric_id, self.node_id)


@dataclass
class SearchResult:
    """Selected warmup and measurement step counts"""
    warmup: int
    measure: int
    fallback: bool = False
    score: float = 0.0
    periods: Dict[str, int] = field(default_factory=dict)


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; edges average over the part of the window inside the series"""
    kernel = np.ones(window)
    sums = np.convolve(values, kernel, mode="same")
    counts = np.convolve(np.ones_like(values), kernel, mode="same")
    return sums / counts


def estimate_period(values: Sequence[float]) -> int:
    """First autocorrelation peak lag >= 2 of the detrended series that reaches
    PEAK_FRACTION of the highest peak; 1 when there is no peak.
    """
    series = np.asarray(values, dtype=float)
    length = len(series)
    window = min(max(5, (length // 20) | 1), length)

    residual = series - moving_average(series, window)
    residual = residual - residual.mean()
    variance = float(np.dot(residual, residual))
    if variance <= 1e-12 * max(1.0, float(np.dot(series, series))):
        return 1

    max_lag = length // 2
    acf = np.array([np.dot(residual[:length - lag], residual[lag:]) / variance for lag in range(max_lag + 1)])

    peaks = [
        lag for lag in range(2, max_lag)
        if acf[lag] > acf[lag - 1] and acf[lag] >= acf[lag + 1] and acf[lag] > 0
    ]
    if not peaks:
        return 1

    highest = max(acf[lag] for lag in peaks)
    return next(lag for lag in peaks if acf[lag] >= PEAK_FRACTION * highest)


def _cycle_samples(series: StepSeries, period: int) -> List[MetricSample]:
    count = len(series.values) // period
    return [
        MetricSample(series.values[j * period:(j + 1) * period], series.metric_id, series.node_id)
        for j in range(count)
    ]


def stable_window(series: StepSeries, alpha: float, period: int, similar_cycles: int = SIMILAR_CYCLES) -> Optional[Tuple[int, int]]:
    """Earliest run of consecutive cycles whose pairwise similarities all exceed alpha"""
    cycles = _cycle_samples(series, period)
    for start in range(len(cycles) - similar_cycles + 1):
        run = cycles[start:start + similar_cycles]
        if all(similarity(a, b) > alpha for a, b in combinations(run, 2)):
            return start * period, similar_cycles * period
    return None


def _window_score(series: Sequence[StepSeries], warmup: int, measure: int) -> float:
    windows = [s.window(warmup, measure) for s in series]
    if len(windows) == 1:
        # one node: agreement between its own cycles stands in for cross-node agreement
        values = windows[0].values
        chunk = max(1, measure // SIMILAR_CYCLES)
        parts = [MetricSample(values[i:i + chunk], windows[0].metric_id, windows[0].node_id)
                 for i in range(0, len(values) - chunk + 1, chunk)]
        if len(parts) < 2:
            return 1.0
        return float(np.mean([similarity(a, b) for a, b in combinations(parts, 2)]))
    return float(np.mean([similarity(a, b) for a, b in combinations(windows, 2)]))


def search_parameters(
    series: Iterable[StepSeries],
    alpha: float = 0.95,
    similar_cycles: int = SIMILAR_CYCLES,
) -> SearchResult:
    """Pick (warmup, measure) so the measured window is stable and short.

    Every series proposes its earliest stable window; the proposal with the
    highest mean cross-node similarity of the selected windows wins, smaller
    windows first on ties.
    """
    ordered = sorted(series, key=lambda s: s.node_id)
    if not ordered:
        raise InvalidInputError("Parameter search needs at least one series")
    if similar_cycles < 2:
        raise InvalidInputError("similar_cycles must be at least 2")

    shortest = min(len(s.values) for s in ordered)
    periods: Dict[str, int] = {}
    candidates = set()

    for item in ordered:
        period = estimate_period(item.values)
        periods[item.node_id] = period
        window = stable_window(item, alpha, period, similar_cycles)
        if window is None:
            logger.debug(f"🔍 No stable window on {item.node_id} (period {period})")
            continue
        if sum(window) <= shortest:
            candidates.add(window)

    if not candidates:
        logger.warning(f"⚠️ No window reached similarity {alpha}; measuring all {shortest} steps")
        return SearchResult(0, shortest, fallback=True, periods=periods)

    scored = [(_window_score(ordered, w, n), w, n) for w, n in candidates]
    score, warmup, measure = min(scored, key=lambda item: (-item[0], item[2], item[1]))

    logger.info(f"✅ Selected warmup {warmup} and measure {measure} steps (score {score:.4f})")
    return SearchResult(warmup, measure, False, score, periods)
