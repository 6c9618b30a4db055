"""
Records - Versioned data formats for datasets and documents

Datasets are line-delimited JSON: a header line {"schema", "version"} then
one record per line. Documents (criteria, models, topologies, schedules,
reports, simulation configs) are YAML mappings with the same two keys.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from .errors import DataError, FleetCheckError, ModelNotFittedError, SchemaVersionError
from .hazard_models import HazardModel, IncidentEvent, IncidentTrace, NodeStatus
from .metricspace import Direction, MetricSample
from .netscan import FatTreeTopology
from .parameter_search import StepSeries
from .selector import BenchmarkInfo, CoverageTable
from .simulator import AllocationRequest
from .validator import Criteria, ValidationVerdict

logger = logging.getLogger(__name__)

SCHEMA_PREFIX = "fleetcheck"
SCHEMA_VERSION = 1

PathLike = Union[str, Path]


def schema_name(schema: str) -> str:
    return f"{SCHEMA_PREFIX}/{schema}"


def atomic_write(path: PathLike, text: str):
    """Write through a temp file in the target directory and rename it into place"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, temp = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(temp, target)
    except BaseException:
        if os.path.exists(temp):
            os.unlink(temp)
        raise


def _check_header(header: Any, schema: str, path: str, line: Optional[int]):
    if not isinstance(header, dict) or "schema" not in header or "version" not in header:
        raise DataError("missing schema header", path, line)
    if header["schema"] != schema_name(schema):
        raise SchemaVersionError(f"expected schema {schema_name(schema)}, found {header['schema']}", path, line)
    if header["version"] != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported {schema_name(schema)} version {header['version']} (expected {SCHEMA_VERSION})", path, line)


# --- line-delimited datasets ------------------------------------------------

def dumps_records(schema: str, records: Iterable[Mapping[str, Any]], header_extra: Optional[Mapping[str, Any]] = None) -> str:
    header = {"schema": schema_name(schema), "version": SCHEMA_VERSION, **(header_extra or {})}
    lines = [json.dumps(header)] + [json.dumps(record) for record in records]
    return "\n".join(lines) + "\n"


def write_records(path: PathLike, schema: str, records: Iterable[Mapping[str, Any]],
                  header_extra: Optional[Mapping[str, Any]] = None):
    atomic_write(path, dumps_records(schema, records, header_extra))


def read_records(path: PathLike, schema: str) -> Tuple[Dict[str, Any], List[Tuple[int, Dict[str, Any]]]]:
    """Header plus (line number, record) pairs; blank lines are skipped"""
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise DataError(f"cannot read file: {e.strerror}", path) from e

    header = None
    records = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"invalid JSON: {e.msg}", path, number) from e

        if header is None:
            _check_header(value, schema, path, number)
            header = value
            continue
        if not isinstance(value, dict):
            raise DataError("record must be a JSON object", path, number)
        records.append((number, value))

    if header is None:
        raise DataError("empty file, expected a schema header", path, 1)
    return header, records


def _field(record: Mapping[str, Any], key: str, path: str, line: int, cast=None, default: Any = ...):
    if key not in record:
        if default is not ...:
            return default
        raise DataError(f"missing field {key!r}", path, line)
    value = record[key]
    if cast is None:
        return value
    try:
        return cast(value)
    except (TypeError, ValueError) as e:
        raise DataError(f"bad value for {key!r}: {e}", path, line) from e


def _build(path: str, line: int, factory, *args):
    try:
        return factory(*args)
    except (FleetCheckError, TypeError, ValueError) as e:
        raise DataError(str(e), path, line) from e


def load_samples(path: PathLike) -> List[MetricSample]:
    """Benchmark samples (also used for validation results)"""
    path = str(path)
    _, records = read_records(path, "samples")
    samples = []
    directions: Dict[str, Direction] = {}
    for line, record in records:
        values = _field(record, "values", path, line, lambda v: tuple(float(x) for x in v))
        metric = _field(record, "metric_id", path, line, str)
        direction = _build(path, line, Direction.parse, _field(record, "direction", path, line))
        if directions.setdefault(metric, direction) is not direction:
            raise DataError(f"metric {metric!r} changes direction", path, line)
        samples.append(_build(path, line, MetricSample, values, metric, _field(record, "node_id", path, line, str), direction))
    return samples


def verdict_record(verdict: ValidationVerdict) -> Dict[str, Any]:
    record = {
        "node_id": verdict.node_id,
        "defect": verdict.defect,
        "violating_metrics": list(verdict.violating_metrics),
        "scores": dict(verdict.scores),
    }
    if verdict.phase is not None:
        record["phase"] = verdict.phase
    return record


def load_incident_trace(path: PathLike) -> IncidentTrace:
    path = str(path)
    header, records = read_records(path, "incidents")
    events = []
    for line, record in records:
        events.append(_build(
            path, line, IncidentEvent,
            _field(record, "node_id", path, line, str),
            _field(record, "start_ts", path, line, int),
            _field(record, "end_ts", path, line, int),
            _field(record, "category", path, line, str, "unknown"),
            _field(record, "component", path, line, str, ""),
        ))
    return _build(path, 1, IncidentTrace, events, tuple(header.get("categories", ())),
                  header.get("start_ts"), header.get("end_ts"), tuple(header.get("node_ids", ())))


def load_allocations(path: PathLike) -> List[AllocationRequest]:
    path = str(path)
    _, records = read_records(path, "allocations")
    return [
        _build(path, line, AllocationRequest,
               _field(record, "node_count", path, line, int),
               _field(record, "submit_ts", path, line, int),
               _field(record, "duration_hours", path, line, float),
               _field(record, "job_id", path, line, str, None))
        for line, record in records
    ]


def load_coverage(path: PathLike) -> CoverageTable:
    path = str(path)
    _, records = read_records(path, "coverage")
    benchmarks = [
        _build(path, line, BenchmarkInfo,
               _field(record, "benchmark_id", path, line, str),
               _field(record, "running_time_s", path, line, float),
               frozenset(_field(record, "defect_node_ids", path, line, lambda v: [str(x) for x in v], [])))
        for line, record in records
    ]
    return _build(path, 1, CoverageTable, benchmarks)


def load_validation_log(path: PathLike) -> List[Tuple[str, str]]:
    """Cumulative (benchmark_id, node_id) defect findings"""
    path = str(path)
    _, records = read_records(path, "validation-log")
    return [
        (_field(record, "benchmark_id", path, line, str), _field(record, "node_id", path, line, str))
        for line, record in records
    ]


def load_statuses(path: PathLike) -> List[NodeStatus]:
    path = str(path)
    _, records = read_records(path, "statuses")
    counts_cast = lambda v: {str(k): int(n) for k, n in v.items()}
    mtbi_cast = lambda v: {str(k): float(h) for k, h in v.items()}
    return [
        _build(path, line, NodeStatus,
               _field(record, "node_id", path, line, str),
               _field(record, "uptime_hours", path, line, float),
               _field(record, "hours_since_last_incident", path, line, float),
               _field(record, "incident_counts", path, line, counts_cast, {}),
               _field(record, "mtbi_hours", path, line, mtbi_cast, {}),
               _field(record, "observed_at", path, line, int, 0))
        for line, record in records
    ]


def load_series(path: PathLike) -> List[StepSeries]:
    path = str(path)
    _, records = read_records(path, "series")
    return [
        _build(path, line, StepSeries,
               _field(record, "values", path, line, lambda v: tuple(float(x) for x in v)),
               _field(record, "node_id", path, line, str),
               _field(record, "metric_id", path, line, str, "throughput"))
        for line, record in records
    ]


# --- YAML documents ---------------------------------------------------------

def dumps_document(schema: str, body: Mapping[str, Any]) -> str:
    document = {"schema": schema_name(schema), "version": SCHEMA_VERSION, **body}
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=False, allow_unicode=True)


def write_document(path: PathLike, schema: str, body: Mapping[str, Any]):
    atomic_write(path, dumps_document(schema, body))


def parse_document(text: str, schema: str, path: str = "<document>") -> Dict[str, Any]:
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise DataError(f"invalid YAML: {getattr(e, 'problem', None) or e}", path, line) from e

    _check_header(document, schema, path, 1)
    return document


def read_document(path: PathLike, schema: str) -> Dict[str, Any]:
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read file: {e.strerror}", path) from e
    return parse_document(text, schema, path)


def criteria_body(criteria: Sequence[Criteria]) -> Dict[str, Any]:
    return {
        "criteria": [
            {
                "metric_id": c.metric_id,
                "direction": c.direction.value,
                "alpha": c.alpha,
                "reference_node": c.reference_sample.node_id,
                "reference_values": list(c.reference_sample.values),
            }
            for c in sorted(criteria, key=lambda c: c.metric_id)
        ]
    }


def load_criteria(path: PathLike) -> Dict[str, Criteria]:
    path = str(path)
    document = read_document(path, "criteria")
    table = {}
    for entry in document.get("criteria") or []:
        try:
            direction = Direction.parse(entry["direction"])
            reference = MetricSample(tuple(entry["reference_values"]), str(entry["metric_id"]),
                                     str(entry.get("reference_node", "reference")), direction)
            table[reference.metric_id] = Criteria(reference.metric_id, reference, float(entry["alpha"]), direction)
        except (KeyError, TypeError, FleetCheckError, ValueError) as e:
            raise DataError(f"malformed criteria entry: {e}", path) from e
    return table


def load_model(path: PathLike) -> HazardModel:
    path = str(path)
    if not os.path.exists(path):
        raise ModelNotFittedError(f"No fitted model at {path}; run the fit-model command first")
    document = read_document(path, "model")
    try:
        return HazardModel.from_document(document)
    except FleetCheckError as e:
        raise DataError(str(e), path) from e


def load_topology(path: PathLike) -> FatTreeTopology:
    path = str(path)
    document = read_document(path, "topology")
    return FatTreeTopology.from_document(document)


def load_benchmark_times(path: PathLike) -> Dict[str, float]:
    path = str(path)
    document = read_document(path, "benchmark-times")
    try:
        return {str(b): float(t) for b, t in (document.get("running_time_s") or {}).items()}
    except (AttributeError, TypeError, ValueError) as e:
        raise DataError(f"malformed running times: {e}", path) from e
