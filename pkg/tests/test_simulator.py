"""Allocation replay, the event loop and the policy sweep"""

import math

import numpy as np
import pytest

from conftest import HOUR
from core.errors import ConfigurationError, InvalidInputError
from core.hazard_models import ExponentialModel, IncidentEvent, IncidentTrace
from core.selector import BenchmarkInfo, CoverageTable
from core.simulator import (
    AllocationRequest,
    ClusterSimulator,
    SimConfig,
    SimNode,
    SimPolicy,
    compute_metrics,
    run_simulation,
    stressed_replay,
)
from core.sweep_executor import SweepExecutor, SweepStatus

ORIGIN = 1_700_000_000


def _single_node_setup():
    trace = IncidentTrace(
        [IncidentEvent("node000", ORIGIN + 100 * HOUR, ORIGIN + 100 * HOUR + 600, "gpu")],
        ("gpu",), ORIGIN, ORIGIN + 720 * HOUR,
    )
    allocations = [AllocationRequest(1, ORIGIN, 720.0, "train")]
    return trace, allocations


def _assert_time_conserved(report_nodes, horizon):
    for node in report_nodes:
        assert node.up_hours + node.validation_hours + node.down_hours == pytest.approx(horizon)


class TestStressedReplay:
    def test_pulls_idle_gaps_forward(self):
        requests = [AllocationRequest(1, ORIGIN + h * HOUR, 10.0, f"j{h}") for h in (0, 100, 200)]
        replayed = stressed_replay(requests, 2)
        assert [r.submit_ts - ORIGIN for r in replayed] == [0, 0, 10 * HOUR]
        assert [r.job_id for r in replayed] == ["j0", "j100", "j200"]
        assert all(r.duration_hours == 10.0 for r in replayed)

    def test_saturated_trace_is_unchanged(self):
        requests = [AllocationRequest(1, ORIGIN + h * HOUR, 10.0) for h in (0, 10, 20)]
        assert stressed_replay(requests, 1) == requests

    def test_rejects_empty_cluster(self):
        with pytest.raises(InvalidInputError):
            stressed_replay([], 0)


class TestMetrics:
    def test_mtbi_pools_up_time(self):
        nodes = [SimNode("a", up_hours=700.0, incidents=2), SimNode("b", up_hours=600.0)]
        report = compute_metrics(nodes, 720.0)
        assert report.mtbi_hours == pytest.approx(650.0)
        assert report.incidents_per_node == 1.0
        assert report.utilization == pytest.approx((700 + 600) / 1440)

    def test_no_incidents_reports_infinite_mtbi(self):
        report = compute_metrics([SimNode("a", up_hours=720.0)], 720.0)
        assert math.isinf(report.mtbi_hours)
        assert report.no_incidents
        assert report.to_record()["mtbi_hours"] is None


class TestHandTraces:
    def test_absence_takes_long_repair(self):
        trace, allocations = _single_node_setup()
        config = SimConfig(horizon_hours=720, policy=SimPolicy.ABSENCE)
        report = run_simulation(config, allocations, trace=trace)

        assert report.nodes == 1
        assert report.down_hours == pytest.approx(36.0)
        assert report.mtbi_hours == pytest.approx(684.0)
        assert report.utilization == pytest.approx(0.95)
        assert report.total_incidents == 1
        assert report.caught_incidents == 0

    def test_full_set_catches_incident_before_job(self):
        trace, allocations = _single_node_setup()
        coverage = CoverageTable([BenchmarkInfo("burn", 2 * HOUR, frozenset({"x"}))])
        config = SimConfig(horizon_hours=720, policy="full-set", audit=True)
        report = run_simulation(config, allocations, coverage=coverage, trace=trace)

        assert report.utilization * 720 == pytest.approx(715.0)
        assert report.validation_hours == pytest.approx(4.0)
        assert report.down_hours == pytest.approx(1.0)
        assert (report.total_incidents, report.caught_incidents) == (1, 1)
        assert [e.kind for e in report.audit][:3] == ["validate", "caught", "repaired"]

    def test_ideal_has_no_incidents(self):
        _, allocations = _single_node_setup()
        report = run_simulation(SimConfig(policy="ideal"), allocations)
        assert report.utilization == pytest.approx(1.0)
        assert report.no_incidents

    def test_oversized_request_is_skipped(self):
        trace, allocations = _single_node_setup()
        allocations.append(AllocationRequest(4, ORIGIN, 5.0, "wide"))
        report = run_simulation(SimConfig(policy="absence", cluster_size=1), allocations, trace=trace)
        assert report.skipped_requests == 1


class TestConfiguration:
    def test_selector_needs_coverage_and_model(self):
        trace, allocations = _single_node_setup()
        with pytest.raises(ConfigurationError):
            run_simulation(SimConfig(policy="selector"), allocations, trace=trace)
        coverage = CoverageTable([BenchmarkInfo("burn", HOUR, frozenset({"x"}))])
        with pytest.raises(ConfigurationError):
            run_simulation(SimConfig(policy="selector"), allocations, coverage=coverage, trace=trace)

    def test_incidents_need_a_source(self):
        _, allocations = _single_node_setup()
        with pytest.raises(ConfigurationError):
            run_simulation(SimConfig(policy="absence"), allocations)

    @pytest.mark.parametrize("overrides", [
        {"p0": 0.0}, {"horizon_hours": 0}, {"repair_hours_with_validation": 0},
        {"incident_source": "dice"}, {"policy": "sometimes"}, {"cluster_size": 0},
    ])
    def test_rejects_bad_settings(self, overrides):
        with pytest.raises(InvalidInputError):
            SimConfig(**overrides)


def _busy_fleet(seed, nodes=50, jobs=400):
    rng = np.random.default_rng(seed)
    allocations = [
        AllocationRequest(
            int(rng.integers(1, 9)),
            ORIGIN + int(rng.integers(0, 720 * HOUR)),
            float(rng.uniform(5.0, 50.0)),
            f"job{i:03d}",
        )
        for i in range(jobs)
    ]
    coverage = CoverageTable([
        BenchmarkInfo("B1", 0.25 * HOUR, frozenset({"gpu", "net", "nvlink"})),
        BenchmarkInfo("B2", 1.0 * HOUR, frozenset({"gpu"})),
        BenchmarkInfo("B3", 1.5 * HOUR, frozenset({"net"})),
    ])
    return allocations, coverage, ExponentialModel(("gpu", "net"), rate=0.01), nodes


class TestPolicies:
    def test_policy_ordering(self):
        holds = 0
        for seed in range(100):
            allocations, coverage, model, nodes = _busy_fleet(100 + seed)
            reports = {}
            for policy in SimPolicy:
                config = SimConfig(horizon_hours=720, policy=policy, seed=seed, cluster_size=nodes, t0_hours=24)
                reports[policy] = run_simulation(config, allocations, coverage, model)

            util = {policy: report.utilization for policy, report in reports.items()}
            mtbi = {policy: report.mtbi_hours for policy, report in reports.items()}
            ordered = (
                util[SimPolicy.IDEAL] >= util[SimPolicy.SELECTOR] > util[SimPolicy.FULL_SET]
                and util[SimPolicy.SELECTOR] > util[SimPolicy.ABSENCE]
                and mtbi[SimPolicy.IDEAL] >= mtbi[SimPolicy.SELECTOR] >= mtbi[SimPolicy.FULL_SET] >= mtbi[SimPolicy.ABSENCE]
                and reports[SimPolicy.SELECTOR].validation_hours <= reports[SimPolicy.FULL_SET].validation_hours
            )
            holds += ordered
        assert holds >= 95

    def test_time_is_conserved(self):
        allocations, coverage, model, nodes = _busy_fleet(3, nodes=10, jobs=60)
        for policy in SimPolicy:
            simulator = ClusterSimulator(SimConfig(policy=policy, cluster_size=nodes), allocations, coverage, model)
            simulator.run()
            _assert_time_conserved(simulator.nodes, 720.0)

    def test_same_seed_same_report(self):
        allocations, coverage, model, nodes = _busy_fleet(5, nodes=10, jobs=60)
        config = SimConfig(policy="selector", seed=11, cluster_size=nodes)
        first = run_simulation(config, allocations, coverage, model).to_record()
        second = run_simulation(config, allocations, coverage, model).to_record()
        assert first == second


class TestSweepExecutor:
    def test_worker_count_does_not_change_results(self):
        allocations, coverage, model, nodes = _busy_fleet(9, nodes=10, jobs=60)
        base = SimConfig(cluster_size=nodes)
        policies = [SimPolicy.ABSENCE, SimPolicy.SELECTOR]

        progress = []
        sequential = SweepExecutor(allocations, coverage, model, workers=1,
                                   progress_callback=lambda p, m: progress.append(p)).run(base, policies, [1, 2])
        threaded = SweepExecutor(allocations, coverage, model, workers=2).run(base, policies, [1, 2])

        assert [r.key for r in sequential] == [("absence", 1), ("absence", 2), ("selector", 1), ("selector", 2)]
        assert [r.report.to_record() for r in sequential] == [r.report.to_record() for r in threaded]
        assert progress[-1] == 100

    def test_failure_is_captured(self):
        _, allocations = _single_node_setup()
        [result] = SweepExecutor(allocations).run(SimConfig(), ["full-set"], [0])
        assert result.status is SweepStatus.FAILED
        assert isinstance(result.error, ConfigurationError)
        assert result.report is None
