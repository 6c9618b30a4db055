"""
Hazard Models - Incident-time probability models fitted from node incident history

Four variants share one interface: a single exponential rate, one rate per
historical incident count, an empirical per-hour hazard table, and a linear
Cox proportional-hazards model with a Breslow baseline.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FitError, InvalidInputError, ModelNotFittedError

logger = logging.getLogger(__name__)

TBNI_CAP_HOURS = 2400.0
SECONDS_PER_HOUR = 3600.0


class HazardVariant(Enum):
    EXPONENTIAL = "exponential"
    EXPONENTIAL_PER_COUNT = "exponential-per-count"
    EXPONENTIAL_PER_HOUR = "exponential-per-hour"
    COX_LINEAR = "cox-linear"

    @classmethod
    def parse(cls, value) -> "HazardVariant":
        if isinstance(value, HazardVariant):
            return value
        try:
            return cls(str(value).strip().lower().replace("_", "-"))
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise InvalidInputError(f"Unknown model variant {value!r}; choose one of: {names}") from None


@dataclass(frozen=True)
class IncidentEvent:
    """One incident on one node; timestamps are integer seconds since epoch"""
    node_id: str
    start_ts: int
    end_ts: int
    category: str = "unknown"
    component: str = ""

    def __post_init__(self):
        if self.end_ts < self.start_ts:
            raise InvalidInputError(f"Incident on {self.node_id} ends before it starts")


@dataclass
class IncidentTrace:
    """Incident events plus the observation window and category enumeration"""
    events: List[IncidentEvent]
    categories: Tuple[str, ...] = ()
    start_ts: Optional[int] = None
    end_ts: Optional[int] = None
    node_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.node_id, e.start_ts, e.end_ts))
        self.categories = tuple(self.categories)
        if not self.categories:
            self.categories = tuple(sorted({e.category for e in self.events}))
        unknown = {e.category for e in self.events} - set(self.categories)
        if unknown:
            raise InvalidInputError(f"Incident categories outside the enumeration: {sorted(unknown)}")
        if self.start_ts is None:
            self.start_ts = min((e.start_ts for e in self.events), default=0)
        if self.end_ts is None:
            self.end_ts = max((e.end_ts for e in self.events), default=self.start_ts)
        self.node_ids = tuple(sorted(set(self.node_ids) | {e.node_id for e in self.events}))

    def category_frequencies(self) -> Dict[str, float]:
        """Empirical category frequencies; uniform when the trace holds no incidents"""
        if not self.events:
            return {c: 1.0 / len(self.categories) for c in self.categories} if self.categories else {}
        counts = {c: 0 for c in self.categories}
        for event in self.events:
            counts[event.category] += 1
        return {c: counts[c] / len(self.events) for c in self.categories}


@dataclass(frozen=True)
class NodeStatus:
    """Covariates describing one node at one observation time"""
    node_id: str
    uptime_hours: float = 0.0
    hours_since_last_incident: float = 0.0
    incident_counts: Dict[str, int] = field(default_factory=dict)
    mtbi_hours: Dict[str, float] = field(default_factory=dict)
    observed_at: int = 0

    def __post_init__(self):
        durations = [self.uptime_hours, self.hours_since_last_incident, *self.mtbi_hours.values()]
        if any(d < 0 for d in durations) or any(c < 0 for c in self.incident_counts.values()):
            raise InvalidInputError(f"Negative duration or count in status of {self.node_id}")

    @property
    def total_incidents(self) -> int:
        return sum(self.incident_counts.values())

    def covariates(self, categories: Sequence[str]) -> np.ndarray:
        """[uptime, hours since last incident, total count, counts per category, MTBI per category]"""
        counts = [float(self.incident_counts.get(c, 0)) for c in categories]
        mtbi = [float(self.mtbi_hours.get(c, self.uptime_hours)) for c in categories]
        return np.array([self.uptime_hours, self.hours_since_last_incident, float(self.total_incidents), *counts, *mtbi])


def covariate_names(categories: Sequence[str]) -> List[str]:
    return (
        ["uptime_hours", "hours_since_last_incident", "incident_count"]
        + [f"count:{c}" for c in categories]
        + [f"mtbi:{c}" for c in categories]
    )


@dataclass(frozen=True)
class SurvivalSample:
    """Status at an observation point and the hours until the next incident (or censoring)"""
    status: NodeStatus
    duration_hours: float
    event: bool


def _merge_incidents(events: Sequence[IncidentEvent]) -> List[IncidentEvent]:
    merged: List[IncidentEvent] = []
    for event in sorted(events, key=lambda e: (e.start_ts, e.end_ts)):
        if merged and event.start_ts <= merged[-1].end_ts:
            last = merged[-1]
            merged[-1] = IncidentEvent(last.node_id, last.start_ts, max(last.end_ts, event.end_ts), last.category, last.component)
        else:
            merged.append(event)
    return merged


def _status_at(node_id: str, at_ts: int, trace_start: int, past: Sequence[IncidentEvent]) -> NodeStatus:
    down = sum(e.end_ts - e.start_ts for e in past)
    uptime = max(0.0, (at_ts - trace_start - down) / SECONDS_PER_HOUR)
    last_end = past[-1].end_ts if past else trace_start
    counts: Dict[str, int] = {}
    for e in past:
        counts[e.category] = counts.get(e.category, 0) + 1
    mtbi = {c: uptime / n for c, n in counts.items()}
    return NodeStatus(node_id, uptime, (at_ts - last_end) / SECONDS_PER_HOUR, counts, mtbi, at_ts)


def extract_samples(trace: IncidentTrace, stride_hours: Optional[float] = None) -> List[SurvivalSample]:
    """Survival samples observed at the trace start and at every incident end.

    Each sample runs to the next incident start; the trailing interval of a
    node is right-censored at the trace end. With stride_hours, extra
    observations are taken every stride inside each up interval.
    """
    if stride_hours is not None and stride_hours <= 0:
        raise InvalidInputError("stride_hours must be positive")

    by_node: Dict[str, List[IncidentEvent]] = {node: [] for node in trace.node_ids}
    for event in trace.events:
        by_node[event.node_id].append(event)

    stride = None if stride_hours is None else stride_hours * SECONDS_PER_HOUR
    samples: List[SurvivalSample] = []

    for node_id in sorted(by_node):
        incidents = _merge_incidents(by_node[node_id])
        observations = [trace.start_ts] + [e.end_ts for e in incidents]

        for index, observed in enumerate(observations):
            if observed >= trace.end_ts:
                continue
            past = incidents[:index]
            upcoming = incidents[index] if index < len(incidents) else None
            until = upcoming.start_ts if upcoming is not None else trace.end_ts
            event = upcoming is not None

            point = float(observed)
            while point < until:
                status = _status_at(node_id, int(point), trace.start_ts, past)
                samples.append(SurvivalSample(status, (until - point) / SECONDS_PER_HOUR, event))
                if stride is None:
                    break
                point += stride

    if not any(s.event for s in samples):
        raise FitError("Incident trace holds no completed interval to learn from")
    return samples


class HazardModel(ABC):
    """Incident-time distribution conditioned on a node status"""

    variant: HazardVariant

    def __init__(self, categories: Sequence[str] = ()):
        self.categories = tuple(categories)
        self.fitted = False

    @abstractmethod
    def fit(self, samples: Sequence[SurvivalSample]) -> "HazardModel":
        ...

    @abstractmethod
    def cumulative_hazard(self, status: NodeStatus, t: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def parameters(self) -> Dict[str, Any]:
        ...

    @abstractmethod
    def load_parameters(self, parameters: Dict[str, Any]):
        ...

    def constant_rate(self, status: NodeStatus) -> Optional[float]:
        """Hazard rate when it does not depend on time, else None"""
        return None

    def _require_fitted(self):
        if not self.fitted:
            raise ModelNotFittedError(f"{self.variant.value} model has not been fitted; run the fit-model command first")

    def predict_cdf(self, status: NodeStatus, t):
        """Probability of an incident within t hours"""
        self._require_fitted()
        times = np.asarray(t, dtype=float)
        hazard = self.cumulative_hazard(status, np.maximum(times, 0.0))
        cdf = np.where(times <= 0.0, 0.0, -np.expm1(-hazard))
        cdf = np.clip(cdf, 0.0, 1.0)
        return float(cdf) if cdf.ndim == 0 else cdf

    def survival(self, status: NodeStatus, t):
        return 1.0 - self.predict_cdf(status, t)

    def risk_score(self, status: NodeStatus) -> float:
        """Higher means an earlier expected incident"""
        return float(self.predict_cdf(status, 24.0))

    def sample_time(self, status: NodeStatus, u: float, cap_hours: float = TBNI_CAP_HOURS) -> float:
        """Inverse-CDF sample in hours for a uniform draw u; inf when the CDF never reaches u"""
        self._require_fitted()
        rate = self.constant_rate(status)
        if rate is not None:
            return -math.log1p(-u) / rate if rate > 0 else math.inf

        grid = np.arange(0.0, cap_hours + 1.0)
        cdf = np.maximum.accumulate(self.predict_cdf(status, grid))
        index = int(np.searchsorted(cdf, u, side="left"))
        if index >= len(grid):
            return math.inf
        if index == 0:
            return 0.0
        low, high = cdf[index - 1], cdf[index]
        fraction = (u - low) / (high - low) if high > low else 1.0
        return float(grid[index - 1] + fraction)

    def to_document(self) -> Dict[str, Any]:
        self._require_fitted()
        return {"variant": self.variant.value, "categories": list(self.categories), "parameters": self.parameters()}

    @staticmethod
    def from_document(document: Dict[str, Any]) -> "HazardModel":
        try:
            variant = HazardVariant.parse(document["variant"])
            model = MODEL_CLASSES[variant](document.get("categories", ()))
            model.load_parameters(document["parameters"])
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"Malformed model document: {e}") from e
        model.fitted = True
        return model


def _arrays(samples: Sequence[SurvivalSample]) -> Tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise FitError("No survival samples to fit")
    durations = np.array([s.duration_hours for s in samples], dtype=float)
    events = np.array([s.event for s in samples], dtype=bool)
    if not events.any():
        raise FitError("No observed incidents among the samples")
    return durations, events


def _rate(durations: np.ndarray, events: np.ndarray) -> float:
    exposure = float(durations.sum())
    if exposure <= 0:
        raise FitError("Samples carry no exposure time")
    return float(events.sum()) / exposure


class ExponentialModel(HazardModel):
    """Single rate: events over total exposure"""

    variant = HazardVariant.EXPONENTIAL

    def __init__(self, categories: Sequence[str] = (), rate: Optional[float] = None):
        super().__init__(categories)
        self.rate = 0.0
        if rate is not None:
            self.rate = float(rate)
            self.fitted = True

    def fit(self, samples):
        durations, events = _arrays(samples)
        self.rate = _rate(durations, events)
        self.fitted = True
        logger.info(f"✅ Exponential rate {self.rate:.6f}/h from {len(samples)} samples")
        return self

    def constant_rate(self, status):
        return self.rate

    def cumulative_hazard(self, status, t):
        return self.rate * t

    def parameters(self):
        return {"rate": self.rate}

    def load_parameters(self, parameters):
        self.rate = float(parameters["rate"])


class ExponentialPerCountModel(HazardModel):
    """One rate per bucket of historical incident count"""

    variant = HazardVariant.EXPONENTIAL_PER_COUNT

    def __init__(self, categories: Sequence[str] = (), max_bucket: int = 5):
        super().__init__(categories)
        self.max_bucket = max_bucket
        self.rates: Dict[int, float] = {}
        self.global_rate = 0.0

    def _bucket(self, status: NodeStatus) -> int:
        return min(status.total_incidents, self.max_bucket)

    def fit(self, samples):
        durations, events = _arrays(samples)
        self.global_rate = _rate(durations, events)
        buckets = np.array([self._bucket(s.status) for s in samples])

        self.rates = {}
        for bucket in sorted(set(buckets.tolist())):
            mask = buckets == bucket
            exposure = float(durations[mask].sum())
            if exposure > 0:
                self.rates[int(bucket)] = float(events[mask].sum()) / exposure
        self.fitted = True
        logger.info(f"✅ Per-count rates for buckets {sorted(self.rates)}")
        return self

    def constant_rate(self, status):
        bucket = self._bucket(status)
        seen = [b for b in self.rates if b <= bucket]
        return self.rates[max(seen)] if seen else self.global_rate

    def cumulative_hazard(self, status, t):
        return self.constant_rate(status) * t

    def parameters(self):
        return {
            "max_bucket": self.max_bucket,
            "global_rate": self.global_rate,
            "rates": {int(b): float(r) for b, r in sorted(self.rates.items())},
        }

    def load_parameters(self, parameters):
        self.max_bucket = int(parameters["max_bucket"])
        self.global_rate = float(parameters["global_rate"])
        self.rates = {int(b): float(r) for b, r in parameters["rates"].items()}


class ExponentialPerHourModel(HazardModel):
    """Empirical hazard per hour of node age since the last incident.

    On uncensored data survival to hour H equals the share of samples with at
    least an H-hour life. Beyond the table the overall rate continues.
    """

    variant = HazardVariant.EXPONENTIAL_PER_HOUR

    def __init__(self, categories: Sequence[str] = ()):
        super().__init__(categories)
        self.hourly_rates = np.zeros(0)
        self.tail_rate = 0.0

    def fit(self, samples):
        durations, events = _arrays(samples)
        self.tail_rate = _rate(durations, events)

        hours = int(math.ceil(durations.max()))
        rates = np.zeros(hours)
        for hour in range(hours):
            at_risk = int(np.count_nonzero(durations >= hour))
            if at_risk == 0:
                rates = rates[:hour]
                break
            failed = int(np.count_nonzero(events & (durations >= hour) & (durations < hour + 1)))
            share = min(failed / at_risk, 1.0 - 1e-12)
            rates[hour] = -math.log1p(-share)

        self.hourly_rates = rates
        self.fitted = True
        logger.info(f"✅ Per-hour hazard table over {len(rates)} hours")
        return self

    def _hazard_to(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        span = len(self.hourly_rates)
        table = np.concatenate(([0.0], np.cumsum(self.hourly_rates)))
        rates = np.append(self.hourly_rates, 0.0)

        inside = np.clip(x, 0.0, span)
        whole = np.floor(inside).astype(int)
        hazard = table[whole] + rates[whole] * (inside - whole)
        return hazard + self.tail_rate * np.maximum(x - span, 0.0)

    def cumulative_hazard(self, status, t):
        age = status.hours_since_last_incident
        return self._hazard_to(age + t) - self._hazard_to(np.asarray(age, dtype=float))

    def parameters(self):
        return {"hourly_rates": [float(r) for r in self.hourly_rates], "tail_rate": self.tail_rate}

    def load_parameters(self, parameters):
        self.hourly_rates = np.asarray(parameters["hourly_rates"], dtype=float)
        self.tail_rate = float(parameters["tail_rate"])


class CoxLinearModel(HazardModel):
    """Cox proportional hazards with a linear relative risk.

    Coefficients maximize the Breslow partial likelihood by gradient ascent
    on z-scored covariates; the baseline cumulative hazard is the Breslow
    step function.
    """

    variant = HazardVariant.COX_LINEAR

    def __init__(self, categories: Sequence[str] = (), learning_rate: float = 0.5,
                 iterations: int = 300, l2: float = 0.01):
        super().__init__(categories)
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.l2 = l2
        width = len(covariate_names(self.categories))
        self.coefficients = np.zeros(width)
        self.means = np.zeros(width)
        self.scales = np.ones(width)
        self.baseline_times = np.zeros(0)
        self.baseline_hazard = np.zeros(0)

    def _design(self, statuses: Iterable[NodeStatus]) -> np.ndarray:
        raw = np.vstack([s.covariates(self.categories) for s in statuses])
        return (raw - self.means) / self.scales

    def fit(self, samples):
        durations, events = _arrays(samples)
        raw = np.vstack([s.status.covariates(self.categories) for s in samples])
        self.means = raw.mean(axis=0)
        scales = raw.std(axis=0)
        self.scales = np.where(scales > 0, scales, 1.0)
        features = (raw - self.means) / self.scales

        order = np.argsort(-durations, kind="stable")
        x = features[order]
        times = durations[order]
        observed = events[order]

        # rows with duration >= t are the first risk_end(t) rows of the descending order
        ascending = np.sort(durations)
        risk_end = len(times) - np.searchsorted(ascending, times, side="left")

        n_events = float(observed.sum())

        def objective(beta):
            scores = x @ beta
            shift = scores.max()
            weights = np.exp(scores - shift)
            cum_w = np.cumsum(weights)[risk_end - 1]
            cum_wx = np.cumsum(weights[:, None] * x, axis=0)[risk_end - 1]
            loglik = np.sum(scores[observed] - shift - np.log(cum_w[observed])) / n_events
            gradient = (x[observed] - cum_wx[observed] / cum_w[observed, None]).sum(axis=0) / n_events
            penalty = 0.5 * self.l2 * float(beta @ beta)
            return loglik - penalty, gradient - self.l2 * beta

        beta = np.zeros(x.shape[1])
        value, gradient = objective(beta)
        step = self.learning_rate
        for _ in range(self.iterations):
            candidate = beta + step * gradient
            candidate_value, candidate_gradient = objective(candidate)
            if candidate_value < value:
                step *= 0.5
                continue
            beta, value, gradient = candidate, candidate_value, candidate_gradient

        self.coefficients = beta

        cum_risk = np.cumsum(np.exp(x @ beta))
        event_times, incidents = np.unique(times[observed], return_counts=True)
        at_risk = cum_risk[len(times) - np.searchsorted(ascending, event_times, side="left") - 1]
        self.baseline_times = event_times
        self.baseline_hazard = np.cumsum(incidents / at_risk)

        self.fitted = True
        logger.info(f"✅ Cox coefficients fitted over {len(samples)} samples ({int(n_events)} incidents)")
        return self

    def linear_predictor(self, status: NodeStatus) -> float:
        return float(self._design([status])[0] @ self.coefficients)

    def baseline_cumulative_hazard(self, t: np.ndarray) -> np.ndarray:
        index = np.searchsorted(self.baseline_times, t, side="right")
        table = np.concatenate(([0.0], self.baseline_hazard))
        return table[index]

    def cumulative_hazard(self, status, t):
        return self.baseline_cumulative_hazard(t) * math.exp(self.linear_predictor(status))

    def risk_score(self, status):
        self._require_fitted()
        return self.linear_predictor(status)

    def parameters(self):
        return {
            "covariates": covariate_names(self.categories),
            "coefficients": [float(v) for v in self.coefficients],
            "means": [float(v) for v in self.means],
            "scales": [float(v) for v in self.scales],
            "baseline_times": [float(v) for v in self.baseline_times],
            "baseline_hazard": [float(v) for v in self.baseline_hazard],
        }

    def load_parameters(self, parameters):
        self.coefficients = np.asarray(parameters["coefficients"], dtype=float)
        self.means = np.asarray(parameters["means"], dtype=float)
        self.scales = np.asarray(parameters["scales"], dtype=float)
        self.baseline_times = np.asarray(parameters["baseline_times"], dtype=float)
        self.baseline_hazard = np.asarray(parameters["baseline_hazard"], dtype=float)
        width = len(covariate_names(self.categories))
        if not (len(self.coefficients) == len(self.means) == len(self.scales) == width):
            raise ValueError(f"expected {width} coefficients for categories {list(self.categories)}")
        if len(self.baseline_times) != len(self.baseline_hazard):
            raise ValueError("baseline times and hazards differ in length")


MODEL_CLASSES = {
    HazardVariant.EXPONENTIAL: ExponentialModel,
    HazardVariant.EXPONENTIAL_PER_COUNT: ExponentialPerCountModel,
    HazardVariant.EXPONENTIAL_PER_HOUR: ExponentialPerHourModel,
    HazardVariant.COX_LINEAR: CoxLinearModel,
}


def fit_samples(samples: Sequence[SurvivalSample], variant, categories: Sequence[str] = ()) -> HazardModel:
    model = MODEL_CLASSES[HazardVariant.parse(variant)](categories)
    return model.fit(samples)


def fit_model(trace: IncidentTrace, variant, stride_hours: Optional[float] = None) -> HazardModel:
    """Extract survival samples from an incident trace and fit the requested variant"""
    if len(trace.events) < 2:
        raise FitError(f"Need at least 2 incidents to fit a model, trace holds {len(trace.events)}")
    logger.info(f"🔍 Extracting survival samples from {len(trace.events)} incidents")
    return fit_samples(extract_samples(trace, stride_hours), variant, trace.categories)


def predict_tbni(model: HazardModel, status: NodeStatus, cap_hours: float = TBNI_CAP_HOURS) -> float:
    """Expected hours to the next incident, truncated at the cap (trapezoid on a 1 h grid)"""
    grid = np.arange(0.0, cap_hours + 1.0)
    alive = model.survival(status, grid)
    return float(np.sum((alive[1:] + alive[:-1]) * 0.5))


def model_accuracy(model: HazardModel, samples: Sequence[SurvivalSample], cap_hours: float = TBNI_CAP_HOURS) -> float:
    """Mean of 1 - |capped prediction - capped TBNI| / cap.

    Censored samples only count once they reach the cap, since their true
    TBNI is known to lie beyond it.
    """
    scored = [s for s in samples if s.event or s.duration_hours >= cap_hours]
    if not scored:
        raise InvalidInputError("No test samples with a known capped TBNI")

    errors = [
        abs(min(predict_tbni(model, s.status, cap_hours), cap_hours) - min(s.duration_hours, cap_hours)) / cap_hours
        for s in scored
    ]
    return float(1.0 - np.mean(errors))
