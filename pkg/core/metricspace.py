"""
Metric Space - Empirical CDF representation of benchmark samples
Two-sided and one-sided CDF-area distances every other module scores with
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidInputError

logger = logging.getLogger(__name__)


class Direction(Enum):
    """Which side of a metric is the good side"""
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"

    @classmethod
    def parse(cls, value) -> "Direction":
        """Accept enum members, values and the usual spellings found in result files"""
        if isinstance(value, Direction):
            return value

        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "higher_is_better": cls.HIGHER_IS_BETTER,
            "higherisbetter": cls.HIGHER_IS_BETTER,
            "higher": cls.HIGHER_IS_BETTER,
            "throughput": cls.HIGHER_IS_BETTER,
            "lower_is_better": cls.LOWER_IS_BETTER,
            "lowerisbetter": cls.LOWER_IS_BETTER,
            "lower": cls.LOWER_IS_BETTER,
            "latency": cls.LOWER_IS_BETTER,
        }
        if key not in aliases:
            raise InvalidInputError(f"Unknown metric direction: {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class MetricSample:
    """Measured values of one metric from one benchmark run on one node"""
    values: Tuple[float, ...]
    metric_id: str
    node_id: str
    direction: Direction = Direction.HIGHER_IS_BETTER

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise InvalidInputError(f"Empty sample for metric {self.metric_id} on node {self.node_id}")

        array = np.asarray(values)
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise InvalidInputError(
                f"Sample for metric {self.metric_id} on node {self.node_id} "
                "must hold finite, non-negative values"
            )

        object.__setattr__(self, "values", values)
        object.__setattr__(self, "direction", Direction.parse(self.direction))

    @cached_property
    def sorted_values(self) -> np.ndarray:
        array = np.sort(np.asarray(self.values, dtype=float))
        array.setflags(write=False)
        return array

    @property
    def mean(self) -> float:
        return float(np.mean(self.sorted_values))

    def scaled(self, factor: float) -> "MetricSample":
        """Same sample with every value multiplied by a positive factor"""
        if factor <= 0:
            raise InvalidInputError("Scale factor must be positive")
        return MetricSample(tuple(v * factor for v in self.values), self.metric_id, self.node_id, self.direction)


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous step function: fraction of values <= x"""
    support: Tuple[float, ...]
    heights: Tuple[float, ...]

    def evaluate(self, x):
        """Evaluate at a scalar or an array of points"""
        support = np.asarray(self.support)
        heights = np.concatenate(([0.0], np.asarray(self.heights)))
        index = np.searchsorted(support, np.asarray(x, dtype=float), side="right")
        result = heights[index]
        return float(result) if np.ndim(result) == 0 else result


def empirical_cdf(sample: MetricSample) -> EmpiricalCdf:
    """Build the empirical CDF of a sample; input order does not matter"""
    if not isinstance(sample, MetricSample):
        raise InvalidInputError("empirical_cdf expects a MetricSample")

    support, counts = np.unique(sample.sorted_values, return_counts=True)
    heights = np.cumsum(counts) / len(sample.values)
    return EmpiricalCdf(tuple(float(s) for s in support), tuple(float(h) for h in heights))


def _check_same_metric(first: MetricSample, second: MetricSample):
    if first.metric_id != second.metric_id:
        raise InvalidInputError(
            f"Cannot compare metric {first.metric_id!r} with metric {second.metric_id!r}"
        )


def _segments(first: MetricSample, second: MetricSample):
    """Piecewise-constant segments of both CDFs between merged support points.

    Returns x_max, segment widths and the CDF heights of both samples on each
    segment [p_j, p_{j+1}).
    """
    _check_same_metric(first, second)

    x1 = first.sorted_values
    x2 = second.sorted_values
    x_max = float(max(x1[-1], x2[-1]))

    points = np.union1d(np.union1d(x1, x2), [0.0])
    left = points[:-1]
    widths = np.diff(points)
    cdf1 = np.searchsorted(x1, left, side="right") / len(x1)
    cdf2 = np.searchsorted(x2, left, side="right") / len(x2)
    return x_max, widths, cdf1, cdf2


def _normalized_area(x_max: float, widths: np.ndarray, numerator: np.ndarray, denominator: np.ndarray) -> float:
    # 0/0 below both supports counts as no deviation
    if x_max <= 0.0 or widths.size == 0:
        return 0.0
    ratio = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)
    area = float(np.dot(widths, ratio)) / x_max
    return min(1.0, max(0.0, area))


def distance(s1: MetricSample, s2: MetricSample) -> float:
    """Normalized CDF-area distance in [0, 1]; symmetric and zero on identical samples"""
    x_max, widths, cdf1, cdf2 = _segments(s1, s2)
    return _normalized_area(x_max, widths, np.abs(cdf1 - cdf2), np.maximum(cdf1, cdf2))


def similarity(s1: MetricSample, s2: MetricSample) -> float:
    return 1.0 - distance(s1, s2)


def one_sided_distance(observed: MetricSample, criteria_sample: MetricSample) -> float:
    """Distance counting only deviations toward the bad side of the observed metric.

    For HigherIsBetter a larger observed CDF means lower values, so only
    CDF_obs > CDF_c contributes; LowerIsBetter mirrors the numerator.
    """
    x_max, widths, cdf_obs, cdf_ref = _segments(observed, criteria_sample)

    if observed.direction is Direction.HIGHER_IS_BETTER:
        numerator = np.maximum(0.0, cdf_obs - cdf_ref)
    else:
        numerator = np.maximum(0.0, cdf_ref - cdf_obs)

    return _normalized_area(x_max, widths, numerator, np.maximum(cdf_obs, cdf_ref))


def similarity_matrix(samples: Sequence[MetricSample]) -> np.ndarray:
    """Symmetric matrix of pairwise similarities with ones on the diagonal"""
    count = len(samples)
    matrix = np.ones((count, count))
    for i in range(count):
        for j in range(i + 1, count):
            value = similarity(samples[i], samples[j])
            matrix[i, j] = value
            matrix[j, i] = value
    return matrix
