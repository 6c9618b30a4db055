import sys
from pathlib import Path

import numpy as np
import pytest

BASE_DIR = Path(__file__).resolve().parent.parent
if str(BASE_DIR) not in sys.path:
    sys.path.insert(0, str(BASE_DIR))

from core.hazard_models import IncidentEvent, IncidentTrace  # noqa: E402
from core.metricspace import Direction, MetricSample  # noqa: E402

HOUR = 3600


def sample(values, node="n0", metric="bw", direction=Direction.HIGHER_IS_BETTER):
    return MetricSample(tuple(values), metric, node, direction)


def cluster_with_outlier(rng, value=100.0, size=19, length=50, noise=0.005, metric="bw"):
    """size samples around value plus one sample at value/10 on node 'bad'"""
    samples = [
        sample(np.abs(rng.normal(value, noise * value, length)), f"n{i:02d}", metric)
        for i in range(size)
    ]
    samples.append(sample(np.abs(rng.normal(value / 10, noise * value / 10, length)), "bad", metric))
    return samples


def exponential_trace(rng, nodes=20, mean_hours=100.0, horizon_hours=2400.0, repair_seconds=600, categories=("gpu", "net")):
    """Constant-hazard incidents: exponential gaps between repairs"""
    events = []
    for n in range(nodes):
        node = f"node{n:03d}"
        at = 0.0
        while True:
            at += rng.exponential(mean_hours) * HOUR
            if at >= horizon_hours * HOUR:
                break
            category = categories[int(rng.integers(len(categories)))]
            events.append(IncidentEvent(node, int(at), int(at) + repair_seconds, category))
            at += repair_seconds
    return IncidentTrace(events, categories, 0, int(horizon_hours * HOUR), tuple(f"node{n:03d}" for n in range(nodes)))


# dataset records in the on-disk layout the loaders read
def sample_record(s):
    return {"node_id": s.node_id, "metric_id": s.metric_id, "direction": s.direction.value, "values": list(s.values)}


def incident_records(trace):
    header = {
        "categories": list(trace.categories),
        "start_ts": trace.start_ts,
        "end_ts": trace.end_ts,
        "node_ids": list(trace.node_ids),
    }
    records = [
        {"node_id": e.node_id, "start_ts": e.start_ts, "end_ts": e.end_ts, "category": e.category, "component": e.component}
        for e in trace.events
    ]
    return header, records


def allocation_record(request):
    record = {"node_count": request.node_count, "submit_ts": request.submit_ts, "duration_hours": request.duration_hours}
    if request.job_id is not None:
        record["job_id"] = request.job_id
    return record


def coverage_record(benchmark):
    return {
        "benchmark_id": benchmark.benchmark_id,
        "running_time_s": benchmark.running_time_s,
        "defect_node_ids": sorted(benchmark.defect_node_ids),
    }


def status_record(status):
    return {
        "node_id": status.node_id,
        "uptime_hours": status.uptime_hours,
        "hours_since_last_incident": status.hours_since_last_incident,
        "incident_counts": dict(status.incident_counts),
        "mtbi_hours": dict(status.mtbi_hours),
        "observed_at": status.observed_at,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def workspace(tmp_path):
    root = tmp_path / "workspace"
    root.mkdir()
    return root.resolve()


@pytest.fixture
def make_sample():
    return sample


@pytest.fixture
def make_cluster():
    return cluster_with_outlier


@pytest.fixture
def make_trace():
    return exponential_trace
