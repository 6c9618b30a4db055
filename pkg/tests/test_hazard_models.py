"""Survival sample extraction and the four incident-time models"""

import math

import numpy as np
import pytest

from conftest import HOUR
from core.errors import FitError, InvalidInputError, ModelNotFittedError
from core.hazard_models import (
    CoxLinearModel,
    ExponentialModel,
    ExponentialPerHourModel,
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

FRESH = NodeStatus("n0")


def _events(durations, status=FRESH, observed=True):
    return [SurvivalSample(status, float(d), observed) for d in durations]


class TestIncidentTrace:
    def test_rejects_reversed_incident(self):
        with pytest.raises(InvalidInputError):
            IncidentEvent("n0", 10, 5)

    def test_rejects_unknown_category(self):
        with pytest.raises(InvalidInputError):
            IncidentTrace([IncidentEvent("n0", 0, 1, "disk")], ("gpu", "net"))

    def test_defaults_from_events(self):
        trace = IncidentTrace([IncidentEvent("b", 50, 60, "gpu"), IncidentEvent("a", 10, 20, "net")])
        assert trace.categories == ("gpu", "net")
        assert (trace.start_ts, trace.end_ts) == (10, 60)
        assert trace.node_ids == ("a", "b")
        assert trace.category_frequencies() == {"gpu": 0.5, "net": 0.5}

    def test_empty_trace_has_uniform_frequencies(self):
        trace = IncidentTrace([], ("gpu", "net", "nvlink", "psu"), 0, 100)
        assert trace.category_frequencies() == {c: 0.25 for c in ("gpu", "net", "nvlink", "psu")}


class TestExtractSamples:
    @staticmethod
    def _single_incident_trace():
        return IncidentTrace([IncidentEvent("n0", 40 * HOUR, 41 * HOUR, "gpu")], ("gpu",), 0, 100 * HOUR)

    def test_observes_start_and_incident_end(self):
        first, second = extract_samples(self._single_incident_trace())
        assert (first.duration_hours, first.event) == (40.0, True)
        assert (second.duration_hours, second.event) == (59.0, False)
        assert second.status.uptime_hours == pytest.approx(40.0)
        assert second.status.hours_since_last_incident == 0.0
        assert second.status.incident_counts == {"gpu": 1}

    def test_stride_adds_observations(self):
        samples = extract_samples(self._single_incident_trace(), stride_hours=10)
        assert len(samples) == 10
        assert [s.duration_hours for s in samples[:4]] == [40.0, 30.0, 20.0, 10.0]
        assert sum(s.event for s in samples) == 4

    def test_hours_since_last_incident_needs_a_stride(self):
        trace = self._single_incident_trace()
        assert {s.status.hours_since_last_incident for s in extract_samples(trace)} == {0.0}
        strided = extract_samples(trace, stride_hours=10)
        assert max(s.status.hours_since_last_incident for s in strided) > 0.0

    def test_overlapping_incidents_merge(self):
        trace = IncidentTrace(
            [IncidentEvent("n0", 10 * HOUR, 20 * HOUR, "gpu"), IncidentEvent("n0", 15 * HOUR, 25 * HOUR, "net")],
            ("gpu", "net"), 0, 100 * HOUR,
        )
        assert [s.duration_hours for s in extract_samples(trace)] == [10.0, 75.0]

    def test_trace_without_incidents(self):
        with pytest.raises(FitError):
            extract_samples(IncidentTrace([], ("gpu",), 0, 100 * HOUR, ("n0",)))

    def test_rejects_non_positive_stride(self):
        with pytest.raises(InvalidInputError):
            extract_samples(self._single_incident_trace(), stride_hours=0)


class TestExponential:
    def test_rate_is_events_over_exposure(self):
        model = ExponentialModel().fit(_events([100.0] * 50))
        assert model.rate == pytest.approx(0.01)
        assert model.predict_cdf(FRESH, 100.0) == pytest.approx(1 - math.exp(-1))
        assert model.predict_cdf(FRESH, 0.0) == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_recovers_rate_from_large_sample(self, seed):
        lifetimes = np.random.default_rng(seed).exponential(100.0, 10_000)
        assert ExponentialModel().fit(_events(lifetimes)).rate == pytest.approx(0.01, rel=0.05)

    def test_expected_tbni(self):
        assert predict_tbni(ExponentialModel(rate=0.01), FRESH) == pytest.approx(100.0, abs=0.1)
        assert predict_tbni(ExponentialModel(rate=1e-12), FRESH) == pytest.approx(2400.0, abs=0.1)

    def test_sample_time_inverts_cdf(self):
        model = ExponentialModel(rate=0.01)
        assert model.sample_time(FRESH, 1 - math.exp(-1)) == pytest.approx(100.0)
        assert math.isinf(ExponentialModel(rate=0.0).sample_time(FRESH, 0.5))

    def test_accuracy_extremes(self):
        never = ExponentialModel(rate=0.0)
        assert model_accuracy(never, _events([2400.0] * 5, observed=False)) == 1.0
        assert model_accuracy(never, _events([0.0] * 5)) == 0.0

    def test_accuracy_on_exponential_lifetimes(self, rng):
        model = ExponentialModel(rate=0.01)
        samples = _events(rng.exponential(100.0, 2000))
        expected = 1 - (100 - 100 + 2 * 100 * math.exp(-1)) / 2400
        assert model_accuracy(model, samples) == pytest.approx(expected, abs=0.005)

    def test_accuracy_needs_scorable_samples(self):
        with pytest.raises(InvalidInputError):
            model_accuracy(ExponentialModel(rate=0.01), _events([5.0], observed=False))

    def test_fit_on_trace(self, rng, make_trace):
        model = fit_model(make_trace(rng), "exponential")
        assert model.rate == pytest.approx(0.01, rel=0.15)


class TestPerHour:
    def test_recovers_constant_hazard(self, rng):
        model = ExponentialPerHourModel().fit(_events(rng.exponential(100.0, 20000)))
        assert np.all((model.hourly_rates[:50] > 0.005) & (model.hourly_rates[:50] < 0.015))
        assert model.predict_cdf(FRESH, 50.0) == pytest.approx(1 - math.exp(-0.5), abs=0.02)

    def test_conditions_on_age(self):
        # every sample fails during hour 10
        model = ExponentialPerHourModel().fit(_events([10.5] * 20))
        older = NodeStatus("n1", hours_since_last_incident=5.0)
        assert model.predict_cdf(FRESH, 5.0) == 0.0
        assert model.predict_cdf(older, 6.0) > 0.99


class TestCox:
    def test_history_raises_risk(self, rng):
        flaky = NodeStatus("a", 100.0, 10.0, {"gpu": 5}, {"gpu": 20.0})
        steady = NodeStatus("b", 100.0, 10.0)
        samples = _events(rng.exponential(10.0, 200), flaky) + _events(rng.exponential(100.0, 200), steady)

        model = fit_samples(samples, "cox-linear", ("gpu",))
        assert model.risk_score(flaky) > model.risk_score(steady)
        assert predict_tbni(model, flaky) < predict_tbni(model, steady)

    @pytest.mark.parametrize("seed", range(100))
    def test_history_ranking_is_stable_across_seeds(self, seed):
        rng = np.random.default_rng(seed)
        flaky = NodeStatus("a", 100.0, 10.0, {"gpu": 5}, {"gpu": 20.0})
        steady = NodeStatus("b", 100.0, 10.0)
        samples = _events(rng.exponential(10.0, 200), flaky) + _events(rng.exponential(100.0, 200), steady)
        model = fit_samples(samples, "cox-linear", ("gpu",))
        assert model.risk_score(flaky) > model.risk_score(steady)

    def test_zero_coefficients_follow_the_baseline(self, rng, make_trace):
        model = fit_model(make_trace(rng), HazardVariant.COX_LINEAR, stride_hours=24)
        model.coefficients = np.zeros_like(model.coefficients)
        t = np.arange(0.0, 400.0, 10.0)
        expected = 1.0 - np.exp(-model.baseline_cumulative_hazard(t))
        flaky = NodeStatus("a", 300.0, 5.0, {"gpu": 4, "net": 1}, {"gpu": 30.0, "net": 200.0})
        assert np.allclose(model.predict_cdf(FRESH, t), expected)
        assert np.allclose(model.predict_cdf(flaky, t), expected)

    def test_document_reload_predicts_identically(self, rng, make_trace):
        model = fit_model(make_trace(rng), HazardVariant.COX_LINEAR)
        reloaded = HazardModel.from_document(model.to_document())
        status = NodeStatus("x", 300.0, 40.0, {"gpu": 2}, {"gpu": 150.0})
        assert isinstance(reloaded, CoxLinearModel)
        assert reloaded.predict_cdf(status, 72.0) == pytest.approx(model.predict_cdf(status, 72.0))

    def test_rejects_wrong_coefficient_count(self, rng, make_trace):
        document = fit_model(make_trace(rng), "cox-linear").to_document()
        document["categories"] = ["gpu"]
        with pytest.raises(InvalidInputError):
            HazardModel.from_document(document)


class TestModelInterface:
    @pytest.mark.parametrize("variant", [v.value for v in HazardVariant])
    def test_cdf_is_a_distribution(self, rng, make_trace, variant):
        model = fit_model(make_trace(rng), variant)
        status = NodeStatus("n", 50.0, 10.0, {"gpu": 1}, {"gpu": 50.0})
        cdf = model.predict_cdf(status, np.arange(0.0, 500.0, 5.0))
        assert cdf[0] == 0.0
        assert np.all(np.diff(cdf) >= -1e-12)
        assert np.all((cdf >= 0.0) & (cdf <= 1.0))

    def test_unfitted_model_points_at_fit_command(self):
        with pytest.raises(ModelNotFittedError, match="fit-model"):
            ExponentialModel().predict_cdf(FRESH, 1.0)

    def test_variant_names(self):
        assert HazardVariant.parse("cox_linear") is HazardVariant.COX_LINEAR
        with pytest.raises(InvalidInputError):
            HazardVariant.parse("weibull")

    def test_needs_two_incidents(self):
        trace = IncidentTrace([IncidentEvent("n0", HOUR, 2 * HOUR, "gpu")], ("gpu",), 0, 100 * HOUR)
        with pytest.raises(FitError):
            fit_model(trace, "exponential")

    def test_malformed_document(self):
        with pytest.raises(InvalidInputError):
            HazardModel.from_document({"variant": "exponential"})
