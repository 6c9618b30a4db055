"""
Cluster Simulator - Trace-driven discrete-event simulation of validation policies

Jobs and nodes wait in FIFO queues. Every node slot owns a wall-clock
incident clock. Before a job starts, the policy decides how long the
allocated nodes validate and with which coverage; impending incidents caught
by validation send the node to a short repair and the job back to the queue,
missed ones interrupt the running job.
"""

import heapq
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .hazard_models import HazardModel, IncidentTrace, NodeStatus
from .selector import CoverageTable, select_benchmarks

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24.0
SECONDS_PER_HOUR = 3600.0


class SimPolicy(Enum):
    ABSENCE = "absence"
    FULL_SET = "full-set"
    SELECTOR = "selector"
    IDEAL = "ideal"

    @classmethod
    def parse(cls, value) -> "SimPolicy":
        if isinstance(value, SimPolicy):
            return value
        try:
            return cls(str(value).strip().lower().replace("_", "-"))
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise InvalidInputError(f"Unknown policy {value!r}; choose one of: {names}") from None


@dataclass
class SimConfig:
    """Simulation settings; durations in hours"""
    horizon_hours: float = 720.0
    repair_hours_no_validation: float = 36.0
    repair_hours_with_validation: float = 1.0
    p0: float = 0.05
    t0_hours: Optional[float] = None
    seed: int = 0
    policy: SimPolicy = SimPolicy.SELECTOR
    cluster_size: Optional[int] = None
    stressed_replay: bool = True
    trace_origin_ts: Optional[int] = None
    audit: bool = False
    incident_source: str = "auto"

    def __post_init__(self):
        self.policy = SimPolicy.parse(self.policy)
        if self.incident_source not in ("auto", "model", "trace"):
            raise InvalidInputError(f"incident_source must be auto, model or trace, got {self.incident_source!r}")
        if not self.horizon_hours > 0:
            raise InvalidInputError("horizon_hours must be positive")
        if not (self.repair_hours_no_validation > 0 and self.repair_hours_with_validation > 0):
            raise InvalidInputError("Repair durations must be positive")
        if not 0.0 < self.p0 < 1.0:
            raise InvalidInputError(f"p0 must lie in (0, 1), got {self.p0}")
        if self.t0_hours is not None and not self.t0_hours > 0:
            raise InvalidInputError("t0_hours must be positive when set")
        if self.cluster_size is not None and self.cluster_size < 1:
            raise InvalidInputError("cluster_size must be at least 1")

    @property
    def repair_hours(self) -> float:
        if self.policy is SimPolicy.ABSENCE:
            return self.repair_hours_no_validation
        return self.repair_hours_with_validation

    def echo(self) -> Dict[str, Any]:
        return {
            "policy": self.policy.value,
            "seed": self.seed,
            "p0": self.p0,
            "t0_hours": self.t0_hours if self.t0_hours is not None else "job-duration",
            "horizon_hours": self.horizon_hours,
        }


@dataclass(frozen=True)
class AllocationRequest:
    node_count: int
    submit_ts: int
    duration_hours: float
    job_id: Optional[str] = None

    def __post_init__(self):
        if self.node_count < 1:
            raise InvalidInputError("Allocation requests need at least one node")
        if not self.duration_hours > 0:
            raise InvalidInputError("Allocation duration must be positive")


class NodeState(Enum):
    IDLE = "idle"
    BUSY = "busy"
    VALIDATING = "validating"
    REPAIR = "repair"


@dataclass
class SimNode:
    """One node slot with its time accounting"""
    node_id: str
    up_hours: float = 0.0
    busy_hours: float = 0.0
    validation_hours: float = 0.0
    down_hours: float = 0.0
    incidents: int = 0
    caught_incidents: int = 0
    incident_counts: Dict[str, int] = field(default_factory=dict)
    daily_up_hours: List[float] = field(default_factory=list)
    state: NodeState = NodeState.IDLE
    state_since: float = 0.0
    last_incident_at: Optional[float] = None
    job: Optional[int] = None
    next_incident: Optional[Tuple[float, str]] = None
    incident_token: int = 0
    repair_token: int = 0

    def status(self, now: float) -> NodeStatus:
        uptime = self.up_hours
        if self.state in (NodeState.IDLE, NodeState.BUSY):
            uptime += now - self.state_since
        since = now - self.last_incident_at if self.last_incident_at is not None else now
        mtbi = {c: uptime / n for c, n in self.incident_counts.items() if n}
        return NodeStatus(self.node_id, uptime, max(since, 0.0), dict(self.incident_counts), mtbi,
                          int(round(now * SECONDS_PER_HOUR)))


@dataclass
class AuditEvent:
    time: float
    kind: str
    node: Optional[str] = None
    job: Optional[str] = None
    detail: str = ""


@dataclass
class SimReport:
    utilization: float
    validation_hours: float
    down_hours: float
    mtbi_hours: float
    incidents_per_node: float
    total_incidents: int = 0
    caught_incidents: int = 0
    job_hours_fraction: float = 0.0
    daily_utilization: List[float] = field(default_factory=list)
    completed_jobs: int = 0
    skipped_requests: int = 0
    nodes: int = 0
    config: Dict[str, Any] = field(default_factory=dict)
    audit: List[AuditEvent] = field(default_factory=list)

    @property
    def no_incidents(self) -> bool:
        return self.total_incidents == 0

    def to_record(self) -> Dict[str, Any]:
        record = asdict(self)
        record.pop("audit")
        record["mtbi_hours"] = None if math.isinf(self.mtbi_hours) else self.mtbi_hours
        record["no_incidents"] = self.no_incidents
        return record


@dataclass
class _Job:
    index: int
    request: AllocationRequest
    remaining: float
    nodes: List[int] = field(default_factory=list)
    coverage: float = 0.0
    started_at: Optional[float] = None
    token: int = 0

    @property
    def name(self) -> str:
        return self.request.job_id or f"job-{self.index}"


def stressed_replay(requests: Sequence[AllocationRequest], cluster_size: int) -> List[AllocationRequest]:
    """Pull submissions earlier so no capacity idles while later jobs are still to come.

    A strict-FIFO capacity replay tracks node free times; whenever the next
    submission arrives after the moment it could have started, that gap and
    all later submissions shift earlier by the same amount. Order, sizes and
    durations are kept.
    """
    if cluster_size < 1:
        raise InvalidInputError("cluster_size must be at least 1")

    ordered = sorted(requests, key=lambda r: r.submit_ts)
    if not ordered:
        return []

    free = [float(ordered[0].submit_ts)] * cluster_size
    heapq.heapify(free)
    offset = 0.0
    previous_start = float(ordered[0].submit_ts)
    replayed = []

    for request in ordered:
        submit = request.submit_ts - offset
        if request.node_count > cluster_size:
            replayed.append(_retimed(request, submit))
            continue

        ready = max(previous_start, heapq.nsmallest(request.node_count, free)[-1])
        if submit > ready:
            offset += submit - ready
            submit = ready

        start = max(submit, ready)
        for _ in range(request.node_count):
            heapq.heappop(free)
        for _ in range(request.node_count):
            heapq.heappush(free, start + request.duration_hours * SECONDS_PER_HOUR)
        previous_start = start
        replayed.append(_retimed(request, submit))

    return replayed


def _retimed(request: AllocationRequest, submit: float) -> AllocationRequest:
    ts = int(round(submit))
    if ts == request.submit_ts:
        return request
    return AllocationRequest(request.node_count, ts, request.duration_hours, request.job_id)


def compute_metrics(
    nodes: Sequence[SimNode],
    horizon_hours: float,
    completed_jobs: int = 0,
    skipped_requests: int = 0,
    config: Optional[Dict[str, Any]] = None,
) -> SimReport:
    """Fleet averages; MTBI is total up-time over total incidents (inf without incidents)"""
    if not nodes:
        raise InvalidInputError("No nodes to report on")

    count = len(nodes)
    total_up = sum(n.up_hours for n in nodes)
    total_incidents = sum(n.incidents for n in nodes)

    days = max((len(n.daily_up_hours) for n in nodes), default=0)
    daily = []
    for day in range(days):
        length = min(HOURS_PER_DAY, horizon_hours - day * HOURS_PER_DAY)
        ups = [n.daily_up_hours[day] if day < len(n.daily_up_hours) else 0.0 for n in nodes]
        daily.append(float(np.mean(ups)) / length)

    return SimReport(
        utilization=float(np.mean([n.up_hours / horizon_hours for n in nodes])),
        validation_hours=float(np.mean([n.validation_hours for n in nodes])),
        down_hours=float(np.mean([n.down_hours for n in nodes])),
        mtbi_hours=total_up / total_incidents if total_incidents else math.inf,
        incidents_per_node=total_incidents / count,
        total_incidents=total_incidents,
        caught_incidents=sum(n.caught_incidents for n in nodes),
        job_hours_fraction=sum(n.busy_hours for n in nodes) / (count * horizon_hours),
        daily_utilization=daily,
        completed_jobs=completed_jobs,
        skipped_requests=skipped_requests,
        nodes=count,
        config=dict(config or {}),
    )


class ClusterSimulator:
    """Event loop over (time, sequence) ordered events"""

    def __init__(
        self,
        config: SimConfig,
        allocations: Sequence[AllocationRequest],
        coverage: Optional[CoverageTable] = None,
        model: Optional[HazardModel] = None,
        trace: Optional[IncidentTrace] = None,
        category_weights: Optional[Dict[str, float]] = None,
    ):
        if not allocations:
            raise InvalidInputError("Allocation trace is empty")

        self.config = config
        self.policy = config.policy
        self.coverage = coverage
        self.model = model
        self.trace = trace

        if self.policy in (SimPolicy.FULL_SET, SimPolicy.SELECTOR) and (coverage is None or not len(coverage)):
            raise ConfigurationError(f"Policy {self.policy.value} needs a coverage table")
        if self.policy is SimPolicy.SELECTOR and model is None:
            raise ConfigurationError("Policy selector needs a fitted incident model")
        source = config.incident_source
        if source == "auto":
            source = "model" if model is not None else "trace"
        self.replay = source == "trace"
        if self.policy is not SimPolicy.IDEAL:
            if self.replay and trace is None:
                raise ConfigurationError(f"Policy {self.policy.value} needs an incident model or an incident trace")
            if not self.replay and model is None:
                raise ConfigurationError("Sampling incidents needs a fitted incident model")

        self.cluster_size = config.cluster_size or (len(trace.node_ids) if trace and trace.node_ids else
                                                     max(r.node_count for r in allocations))
        self.nodes = [SimNode(f"slot-{i:04d}") for i in range(self.cluster_size)]
        days = int(math.ceil(config.horizon_hours / HOURS_PER_DAY))
        for node in self.nodes:
            node.daily_up_hours = [0.0] * days

        streams = np.random.SeedSequence(config.seed).spawn(self.cluster_size + 1)
        self.rng = np.random.default_rng(streams[0])
        self.node_rngs = [np.random.default_rng(s) for s in streams[1:]]

        if trace is not None and trace.categories:
            weights = category_weights or trace.category_frequencies()
        elif category_weights:
            weights = category_weights
        elif model is not None and model.categories:
            weights = {c: 1.0 / len(model.categories) for c in model.categories}
        else:
            weights = {"unknown": 1.0}
        self.categories = sorted(weights)
        total = sum(weights.values())
        self.category_p = np.array([weights[c] / total for c in self.categories])

        submits = [r.submit_ts for r in allocations]
        self.origin = config.trace_origin_ts if config.trace_origin_ts is not None else min(submits)
        self.allocations = stressed_replay(allocations, self.cluster_size) if config.stressed_replay else \
            sorted(allocations, key=lambda r: r.submit_ts)

        self.now = 0.0
        self.events: List[Tuple[float, int, str, tuple]] = []
        self.sequence = 0
        self.jobs: List[_Job] = []
        self.job_queue: Deque[int] = deque()
        self.idle: Deque[int] = deque(range(self.cluster_size))
        self.trace_incidents: List[Deque[Tuple[float, str]]] = [deque() for _ in self.nodes]
        self.completed_jobs = 0
        self.skipped_requests = 0
        self.audit: List[AuditEvent] = []

    # --- event plumbing -------------------------------------------------

    def _push(self, time: float, kind: str, payload: tuple = ()):
        heapq.heappush(self.events, (time, self.sequence, kind, payload))
        self.sequence += 1

    def _log(self, kind: str, slot: Optional[int] = None, job: Optional[_Job] = None, detail: str = ""):
        if self.config.audit:
            node = self.nodes[slot].node_id if slot is not None else None
            self.audit.append(AuditEvent(self.now, kind, node, job.name if job else None, detail))

    def _advance(self, slot: int):
        node = self.nodes[slot]
        start, end = node.state_since, self.now
        elapsed = end - start
        if node.state in (NodeState.IDLE, NodeState.BUSY):
            node.up_hours += elapsed
            if node.state is NodeState.BUSY:
                node.busy_hours += elapsed
            day = int(start // HOURS_PER_DAY)
            while start < end and day < len(node.daily_up_hours):
                boundary = min(end, (day + 1) * HOURS_PER_DAY)
                node.daily_up_hours[day] += boundary - start
                start, day = boundary, day + 1
        elif node.state is NodeState.VALIDATING:
            node.validation_hours += elapsed
        else:
            node.down_hours += elapsed
        node.state_since = self.now

    def _set_state(self, slot: int, state: NodeState):
        self._advance(slot)
        self.nodes[slot].state = state

    # --- incident clocks ------------------------------------------------

    def _seed_incidents(self):
        if self.policy is SimPolicy.IDEAL:
            return

        if self.replay:
            trace_nodes = list(self.trace.node_ids)
            if len(trace_nodes) > self.cluster_size:
                logger.warning(f"⚠️ Trace names {len(trace_nodes)} nodes, replaying the first {self.cluster_size}")
            slots = {node: i for i, node in enumerate(trace_nodes[:self.cluster_size])}
            for event in self.trace.events:
                if event.node_id in slots:
                    at = (event.start_ts - self.origin) / SECONDS_PER_HOUR
                    if at >= 0:
                        self.trace_incidents[slots[event.node_id]].append((at, event.category))
            for queue in self.trace_incidents:
                ordered = sorted(queue)
                queue.clear()
                queue.extend(ordered)

        for slot in range(self.cluster_size):
            self._schedule_next_incident(slot, 0.0)

    def _schedule_next_incident(self, slot: int, after: float):
        node = self.nodes[slot]
        node.incident_token += 1
        node.next_incident = None

        if not self.replay:
            rng = self.node_rngs[slot]
            gap = self.model.sample_time(node.status(self.now), float(rng.random()))
            category = self.categories[int(rng.choice(len(self.categories), p=self.category_p))]
            if math.isinf(gap):
                return
            at = after + gap
        else:
            queue = self.trace_incidents[slot]
            if not queue:
                return
            at, category = queue.popleft()
            at = max(at, after)

        node.next_incident = (at, category)
        self._push(at, "incident", (slot, node.incident_token))

    def _count_incident(self, slot: int, category: str, caught: bool):
        node = self.nodes[slot]
        node.incidents += 1
        node.incident_counts[category] = node.incident_counts.get(category, 0) + 1
        node.last_incident_at = self.now
        if caught:
            node.caught_incidents += 1

    # --- scheduling -----------------------------------------------------

    def _dispatch(self):
        while self.job_queue and len(self.idle) >= self.jobs[self.job_queue[0]].request.node_count:
            job = self.jobs[self.job_queue.popleft()]
            slots = [self.idle.popleft() for _ in range(job.request.node_count)]
            self._begin_allocation(job, slots)

    def _plan_validation(self, job: _Job, slots: List[int]) -> Tuple[float, float]:
        if self.policy is SimPolicy.FULL_SET:
            return self.coverage.total_time(self.coverage.benchmark_ids) / SECONDS_PER_HOUR, 1.0

        if self.policy is SimPolicy.SELECTOR:
            statuses = [self.nodes[s].status(self.now) for s in slots]
            horizon = self.config.t0_hours or job.remaining
            outcome = select_benchmarks(statuses, self.coverage, self.model, self.config.p0, horizon)
            if outcome.skipped or not outcome.chosen:
                return 0.0, 0.0
            return outcome.total_time_s / SECONDS_PER_HOUR, outcome.coverage

        return 0.0, 0.0

    def _begin_allocation(self, job: _Job, slots: List[int]):
        job.nodes = slots
        hours, coverage = self._plan_validation(job, slots)
        if hours <= 0:
            self._start_job(job)
            return

        job.coverage = coverage
        job.token += 1
        for slot in slots:
            self._set_state(slot, NodeState.VALIDATING)
            self.nodes[slot].job = job.index
        self._push(self.now + hours, "validation_done", (job.index, job.token))
        self._log("validate", job=job, detail=f"{hours:.3f}h coverage {coverage:.3f}")

    def _start_job(self, job: _Job):
        job.started_at = self.now
        job.token += 1
        for slot in job.nodes:
            self._set_state(slot, NodeState.BUSY)
            self.nodes[slot].job = job.index
        self._push(self.now + job.remaining, "job_end", (job.index, job.token))
        self._log("start", job=job, detail=f"{job.remaining:.3f}h on {len(job.nodes)} nodes")

    def _release(self, job: _Job, keep_out: Sequence[int] = ()):
        """Return the job's nodes to the idle queue, except those going to repair"""
        for slot in job.nodes:
            self.nodes[slot].job = None
            if slot not in keep_out:
                self._set_state(slot, NodeState.IDLE)
                self.idle.append(slot)
        job.nodes = []

    def _requeue(self, job: _Job):
        job.token += 1
        job.started_at = None
        self.job_queue.append(job.index)

    def _enter_repair(self, slot: int):
        node = self.nodes[slot]
        self._set_state(slot, NodeState.REPAIR)
        node.job = None
        node.repair_token += 1
        self._push(self.now + self.config.repair_hours, "repair_done", (slot, node.repair_token))

    # --- handlers -------------------------------------------------------

    def _on_arrival(self, index: int):
        job = self.jobs[index]
        if job.request.node_count > self.cluster_size:
            self.skipped_requests += 1
            logger.warning(f"⚠️ Skipping {job.name}: requests {job.request.node_count} of {self.cluster_size} nodes")
            return
        self.job_queue.append(index)
        self._dispatch()

    def _on_validation_done(self, index: int, token: int):
        job = self.jobs[index]
        if token != job.token:
            return

        window_end = self.now + job.remaining
        caught = []
        for slot in job.nodes:
            pending = self.nodes[slot].next_incident
            if pending is not None and pending[0] < window_end and self.rng.random() < job.coverage:
                caught.append(slot)

        if not caught:
            self._start_job(job)
            return

        for slot in caught:
            at, category = self.nodes[slot].next_incident
            self._count_incident(slot, category, caught=True)
            self._log("caught", slot, job, category)
            self._schedule_next_incident(slot, at)

        self._release(job, keep_out=caught)
        for slot in caught:
            self._enter_repair(slot)
        self._requeue(job)
        self._dispatch()

    def _on_job_end(self, index: int, token: int):
        job = self.jobs[index]
        if token != job.token:
            return
        self._release(job)
        self.completed_jobs += 1
        self._log("end", job=job)
        self._dispatch()

    def _on_incident(self, slot: int, token: int):
        node = self.nodes[slot]
        if token != node.incident_token:
            return

        _, category = node.next_incident
        state = node.state
        job = self.jobs[node.job] if node.job is not None else None
        self._count_incident(slot, category, caught=False)
        self._log("incident", slot, job, f"{category} while {state.value}")
        self._schedule_next_incident(slot, self.now)

        if state is NodeState.IDLE:
            self.idle.remove(slot)
            self._enter_repair(slot)
        elif state is NodeState.REPAIR:
            self._enter_repair(slot)
        else:
            if state is NodeState.BUSY:
                job.remaining -= self.now - job.started_at
            self._release(job, keep_out=[slot])
            self._enter_repair(slot)
            if job.remaining > 1e-9:
                self._requeue(job)
            else:
                self.completed_jobs += 1
                job.token += 1
            self._dispatch()

    def _on_repair_done(self, slot: int, token: int):
        node = self.nodes[slot]
        if token != node.repair_token:
            return
        self._set_state(slot, NodeState.IDLE)
        self.idle.append(slot)
        self._log("repaired", slot)
        self._dispatch()

    # --- driver ---------------------------------------------------------

    def run(self) -> SimReport:
        logger.info(f"🚀 Simulating {self.policy.value} on {self.cluster_size} nodes for {self.config.horizon_hours}h "
                    f"(seed {self.config.seed})")

        for index, request in enumerate(self.allocations):
            self.jobs.append(_Job(index, request, request.duration_hours))
            at = max(0.0, (request.submit_ts - self.origin) / SECONDS_PER_HOUR)
            self._push(at, "arrival", (index,))
        self._seed_incidents()

        handlers = {
            "arrival": self._on_arrival,
            "validation_done": self._on_validation_done,
            "job_end": self._on_job_end,
            "incident": self._on_incident,
            "repair_done": self._on_repair_done,
        }
        horizon = self.config.horizon_hours
        while self.events and self.events[0][0] < horizon:
            time, _, kind, payload = heapq.heappop(self.events)
            self.now = time
            handlers[kind](*payload)

        self.now = horizon
        for slot in range(self.cluster_size):
            self._advance(slot)

        report = compute_metrics(self.nodes, horizon, self.completed_jobs, self.skipped_requests, self.config.echo())
        report.audit = self.audit
        logger.info(f"✅ {self.policy.value}: utilization {report.utilization:.4f}, "
                    f"validation {report.validation_hours:.2f}h, incidents {report.total_incidents}")
        return report


def run_simulation(
    config: SimConfig,
    allocations: Sequence[AllocationRequest],
    coverage: Optional[CoverageTable] = None,
    model: Optional[HazardModel] = None,
    trace: Optional[IncidentTrace] = None,
    category_weights: Optional[Dict[str, float]] = None,
) -> SimReport:
    """Simulate one policy over the horizon and aggregate its metrics"""
    return ClusterSimulator(config, allocations, coverage, model, trace, category_weights).run()
