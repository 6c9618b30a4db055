"""Warmup and measurement window search"""

import numpy as np
import pytest

from core.errors import InvalidInputError
from core.parameter_search import (
    StepSeries,
    estimate_period,
    moving_average,
    search_parameters,
    stable_window,
)
from core.validator import repeatability


def _training_run(rng, node, value=100.0, steps=1000):
    """Linear ramp for 100 steps, then a plateau with a 10-step data-loading cycle"""
    t = np.arange(steps)
    base = np.where(t < 100, 0.1 * value + 0.5 * value * t / 100, 0.8 * value)
    cycle = 0.03 * value * np.sin(2 * np.pi * t / 10)
    noise = rng.normal(0.0, 0.002 * value, steps)
    return StepSeries(tuple(base + cycle + noise), node)


class TestStepSeries:
    def test_needs_two_steps(self):
        with pytest.raises(InvalidInputError):
            StepSeries((1.0,), "n0")

    @pytest.mark.parametrize("bad", [-1.0, float("nan")])
    def test_rejects_invalid_values(self, bad):
        with pytest.raises(InvalidInputError):
            StepSeries((1.0, bad), "n0")

    def test_window_slices_values(self):
        series = StepSeries((1, 2, 3, 4, 5), "n0", "tokens")
        window = series.window(1, 3)
        assert window.values == (2.0, 3.0, 4.0)
        assert window.metric_id == "tokens"
        assert window.node_id == "n0"


class TestPeriod:
    def test_moving_average_edges(self):
        assert np.allclose(moving_average(np.array([1.0, 2, 3, 4, 5]), 3), [1.5, 2, 3, 4, 4.5])

    def test_constant_series_has_no_period(self):
        assert estimate_period([5.0] * 60) == 1

    def test_detects_sine_period(self):
        t = np.arange(200)
        assert estimate_period(5 + np.sin(2 * np.pi * t / 7)) == 7

    def test_detects_cycle_on_top_of_ramp(self, rng):
        assert estimate_period(_training_run(rng, "n0").values) == 10

    @pytest.mark.parametrize("steps", range(2, 7))
    def test_series_shorter_than_the_smoothing_window(self, steps):
        values = [float(i % 2 + 1) for i in range(steps)]
        assert 1 <= estimate_period(values) <= max(1, steps // 2)


class TestStableWindow:
    def test_constant_series(self):
        series = StepSeries((5.0,) * 60, "n0")
        assert stable_window(series, 0.95, 1) == (0, 3)
        assert stable_window(series, 0.95, 1, similar_cycles=4) == (0, 4)

    def test_growing_series_never_stabilises(self):
        series = StepSeries(tuple(1.2 ** t for t in range(40)), "n0")
        assert stable_window(series, 0.95, 1) is None


class TestSearchParameters:
    def test_finds_plateau_after_ramp(self, rng):
        runs = [_training_run(rng, f"n{i}") for i in range(4)]
        result = search_parameters(runs, alpha=0.95)

        assert not result.fallback
        assert (result.warmup, result.measure) == (100, 30)
        assert result.measure < 1000 / 2
        assert set(result.periods.values()) == {10}

        short = repeatability([r.window(result.warmup, result.measure) for r in runs])
        long = repeatability([r.window(result.warmup, 900) for r in runs])
        assert short == pytest.approx(long, abs=0.01)

    def test_constant_series(self):
        result = search_parameters([StepSeries((5.0,) * 60, "n0")])
        assert (result.warmup, result.measure) == (0, 3)
        assert not result.fallback

    @pytest.mark.parametrize("steps", range(2, 7))
    def test_short_alternating_series(self, steps):
        values = tuple(float(i % 2 + 1) for i in range(steps))
        result = search_parameters([StepSeries(values, "n0")])
        assert result.warmup + result.measure <= steps
        assert result.measure >= 1

    def test_falls_back_to_whole_series(self):
        result = search_parameters([StepSeries(tuple(1.2 ** t for t in range(40)), "n0")])
        assert (result.warmup, result.measure) == (0, 40)
        assert result.fallback

    def test_rejects_empty_input(self):
        with pytest.raises(InvalidInputError):
            search_parameters([])

    def test_rejects_single_cycle(self):
        with pytest.raises(InvalidInputError):
            search_parameters([StepSeries((1.0, 2.0), "n0")], similar_cycles=1)
