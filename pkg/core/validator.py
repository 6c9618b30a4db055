"""
Validator - Criteria learning and online defect filtering
Learns a reference sample per benchmark metric from fleet results and
scores new results against it
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .metricspace import Direction, MetricSample, distance, one_sided_distance, similarity, similarity_matrix

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.95


@dataclass(frozen=True)
class Criteria:
    """Learned reference sample S_C for one benchmark metric"""
    metric_id: str
    reference_sample: MetricSample
    alpha: float = DEFAULT_ALPHA
    direction: Direction = Direction.HIGHER_IS_BETTER

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.reference_sample.metric_id != self.metric_id:
            raise InvalidInputError(
                f"Reference sample belongs to {self.reference_sample.metric_id!r}, not {self.metric_id!r}"
            )
        object.__setattr__(self, "direction", Direction.parse(self.direction))


@dataclass
class CriteriaLearning:
    """Outcome of one criteria learning run"""
    criteria: Criteria
    defects: Tuple[MetricSample, ...] = ()
    iterations: int = 0

    @property
    def defect_nodes(self) -> List[str]:
        return sorted({sample.node_id for sample in self.defects})


@dataclass
class ValidationVerdict:
    """Per-node validation outcome"""
    node_id: str
    scores: Dict[str, float] = field(default_factory=dict)
    defect: bool = False
    violating_metrics: Tuple[str, ...] = ()
    phase: Optional[int] = None


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")


def _canonical(samples: Iterable[MetricSample]) -> List[MetricSample]:
    """Order samples independently of input order; the centroid tie-break relies on it"""
    ordered = sorted(samples, key=lambda s: (s.node_id, s.values))
    if not ordered:
        raise InvalidInputError("Need at least one sample")

    metric_ids = {s.metric_id for s in ordered}
    if len(metric_ids) > 1:
        raise InvalidInputError(f"Samples mix several metrics: {sorted(metric_ids)}")
    return ordered


def _centroid_index(matrix: np.ndarray, members: Sequence[int]) -> int:
    sub = matrix[np.ix_(members, members)]
    return members[int(np.argmax(sub.sum(axis=1)))]


def get_centroid(samples: Iterable[MetricSample]) -> MetricSample:
    """Member with the largest sum of similarities to all members; ties go to the lowest node_id"""
    ordered = _canonical(samples)
    matrix = similarity_matrix(ordered)
    return ordered[_centroid_index(matrix, list(range(len(ordered))))]


def learn_criteria(samples: Iterable[MetricSample], alpha: float = DEFAULT_ALPHA) -> CriteriaLearning:
    """Iteratively exclude samples dissimilar to the centroid of the remaining ones.

    The defect set only grows, so the loop finishes in at most len(samples)
    iterations. Every retained sample ends with similarity > alpha to S_C.
    """
    _check_alpha(alpha)
    ordered = _canonical(samples)
    matrix = similarity_matrix(ordered)

    retained = list(range(len(ordered)))
    excluded: List[int] = []
    iterations = 0

    while True:
        iterations += 1
        centroid = _centroid_index(matrix, retained)
        newly = [i for i in retained if i != centroid and matrix[centroid, i] <= alpha]
        if not newly:
            break

        excluded.extend(newly)
        dropped = set(newly)
        retained = [i for i in retained if i not in dropped]
        logger.debug(f"🔍 Iteration {iterations}: excluded {len(newly)}, {len(retained)} retained")

    reference = ordered[centroid]
    criteria = Criteria(reference.metric_id, reference, alpha, reference.direction)
    defects = tuple(ordered[i] for i in sorted(excluded))

    logger.info(
        f"✅ Learned criteria for {criteria.metric_id}: reference node {reference.node_id}, "
        f"{len(defects)} of {len(ordered)} samples excluded after {iterations} iterations"
    )
    return CriteriaLearning(criteria, defects, iterations)


def _criteria_by_metric(criteria: Union[Mapping[str, Criteria], Iterable[Criteria]]) -> Dict[str, Criteria]:
    if isinstance(criteria, Mapping):
        return dict(criteria)
    return {c.metric_id: c for c in criteria}


def filter_defects(
    results: Iterable[MetricSample],
    criteria: Union[Mapping[str, Criteria], Iterable[Criteria]],
) -> List[ValidationVerdict]:
    """Score each node's results against the criteria with the one-sided similarity.

    A node is defective when any metric scores <= alpha. With several results
    for one metric the worst score counts.
    """
    table = _criteria_by_metric(criteria)
    per_node: Dict[str, Dict[str, float]] = {}

    for result in results:
        entry = table.get(result.metric_id)
        if entry is None:
            raise ConfigurationError(f"No criteria for metric {result.metric_id!r}")

        score = 1.0 - one_sided_distance(result, entry.reference_sample)
        scores = per_node.setdefault(result.node_id, {})
        scores[result.metric_id] = min(score, scores.get(result.metric_id, 1.0))

    verdicts = []
    for node_id in sorted(per_node):
        scores = dict(sorted(per_node[node_id].items()))
        violating = tuple(m for m, s in scores.items() if s <= table[m].alpha)
        verdicts.append(ValidationVerdict(node_id, scores, bool(violating), violating))

    flagged = sum(1 for v in verdicts if v.defect)
    if flagged:
        logger.warning(f"⚠️ {flagged} of {len(verdicts)} nodes flagged as defective")
    else:
        logger.info(f"✅ All {len(verdicts)} nodes passed validation")
    return verdicts


def filter_defects_phased(
    phases: Sequence[Iterable[MetricSample]],
    criteria: Union[Mapping[str, Criteria], Iterable[Criteria]],
) -> List[ValidationVerdict]:
    """Validate in phases (single-node benchmarks, then multi-node ones).

    Nodes flagged in one phase skip the later phases; verdicts carry the
    phase index that flagged them.
    """
    merged: Dict[str, ValidationVerdict] = {}

    for index, phase in enumerate(phases):
        flagged = {node for node, verdict in merged.items() if verdict.defect}
        remaining = [r for r in phase if r.node_id not in flagged]
        if not remaining:
            continue

        for verdict in filter_defects(remaining, criteria):
            current = merged.setdefault(verdict.node_id, ValidationVerdict(verdict.node_id))
            current.scores.update(verdict.scores)
            if verdict.defect:
                current.defect = True
                current.violating_metrics = tuple(sorted(set(current.violating_metrics) | set(verdict.violating_metrics)))
                current.phase = index

    return [merged[node] for node in sorted(merged)]


def defect_rate(verdicts: Sequence[ValidationVerdict]) -> float:
    if not verdicts:
        return 0.0
    return sum(1 for v in verdicts if v.defect) / len(verdicts)


def repeatability(samples: Iterable[MetricSample]) -> float:
    """Mean similarity over all unordered pairs"""
    ordered = _canonical(samples)
    if len(ordered) < 2:
        raise InvalidInputError("Repeatability needs at least two samples")

    matrix = similarity_matrix(ordered)
    upper = np.triu_indices(len(ordered), k=1)
    return float(np.mean(matrix[upper]))


def repeatability_to_criteria(samples: Iterable[MetricSample], criteria: Criteria) -> float:
    """Mean similarity of each sample to S_C"""
    ordered = _canonical(samples)
    return float(np.mean([similarity(s, criteria.reference_sample) for s in ordered]))


def margin_ratio(
    defect_samples: Iterable[MetricSample],
    healthy_samples: Iterable[MetricSample],
    criteria: Criteria,
) -> float:
    """Smallest defect distance to S_C over the largest healthy distance; inf when the latter is 0"""
    defects = list(defect_samples)
    healthy = list(healthy_samples)
    if not defects or not healthy:
        raise InvalidInputError("Margin ratio needs defective and healthy samples")

    reference = criteria.reference_sample
    nearest_defect = min(distance(s, reference) for s in defects)
    farthest_healthy = max(distance(s, reference) for s in healthy)

    if farthest_healthy == 0.0:
        return math.inf
    return nearest_defect / farthest_healthy


def iqr_criteria(samples: Iterable[MetricSample], alpha: float = DEFAULT_ALPHA) -> CriteriaLearning:
    """Baseline: interquartile fence on per-sample means.

    Samples below Q1 - 1.5*IQR (above Q3 + 1.5*IQR for lower-is-better
    metrics) are defects; S_C is the retained sample with the median mean.
    """
    ordered = _canonical(samples)
    means = np.array([s.mean for s in ordered])
    q1, q3 = np.percentile(means, [25, 75])
    spread = q3 - q1

    direction = ordered[0].direction
    if direction is Direction.HIGHER_IS_BETTER:
        outside = means < q1 - 1.5 * spread
    else:
        outside = means > q3 + 1.5 * spread

    retained = sorted((s for s, out in zip(ordered, outside) if not out), key=lambda s: (s.mean, s.node_id))
    reference = retained[(len(retained) - 1) // 2]
    defects = tuple(s for s, out in zip(ordered, outside) if out)

    logger.debug(f"🔍 IQR fence for {reference.metric_id}: q1={q1:.4f} q3={q3:.4f}, {len(defects)} outside")
    return CriteriaLearning(Criteria(reference.metric_id, reference, alpha, direction), defects, 1)


def kmeans_criteria(samples: Iterable[MetricSample], alpha: float = DEFAULT_ALPHA, seed: int = 0) -> CriteriaLearning:
    """Baseline: two-cluster k-means on sorted value vectors.

    The minority cluster holds the defects; S_C is the element-wise mean of
    the majority cluster's sorted vectors.
    """
    from sklearn.cluster import KMeans

    ordered = _canonical(samples)
    lengths = {len(s.values) for s in ordered}
    if len(lengths) != 1:
        raise InvalidInputError("k-means criteria need samples of equal length")

    vectors = np.vstack([s.sorted_values for s in ordered])
    first = ordered[0]

    if len(ordered) < 2 or np.allclose(vectors, vectors[0]):
        labels = np.zeros(len(ordered), dtype=int)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            labels = KMeans(n_clusters=2, n_init=10, random_state=seed).fit_predict(vectors)

    counts = np.bincount(labels, minlength=2)
    if counts[0] != counts[1]:
        majority = int(np.argmax(counts))
    else:
        # equal halves: the cluster on the good side wins
        means = [vectors[labels == k].mean() for k in (0, 1)]
        better = max if first.direction is Direction.HIGHER_IS_BETTER else min
        majority = means.index(better(means))

    reference = MetricSample(
        tuple(vectors[labels == majority].mean(axis=0)),
        first.metric_id,
        "kmeans-centroid",
        first.direction,
    )
    defects = tuple(s for s, label in zip(ordered, labels) if label != majority)
    return CriteriaLearning(Criteria(first.metric_id, reference, alpha, first.direction), defects, 1)
