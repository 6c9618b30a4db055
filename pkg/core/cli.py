"""
CLI - Batch commands over a fleetcheck workspace

Every command reads versioned datasets, runs one toolkit operation and
writes its document atomically. Summaries go to stdout as text or, with
--format records, as a line-delimited record stream.
"""

import argparse
import logging
import math
import os
import sys
from collections import defaultdict
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .config_manager import ConfigManager, SimulationPlan, is_url
from .dependency_check import DependencyChecker
from .errors import ConfigurationError, FitError, FleetCheckError, InfeasibleError, InvalidInputError
from .hazard_models import HazardVariant, extract_samples, fit_samples, model_accuracy
from .metricspace import MetricSample
from .netscan import FULL, QUICK, FatTreeTopology, plan_full_scan, plan_quick_scan, verify_schedule
from .parameter_search import search_parameters
from .records import (
    criteria_body,
    dumps_records,
    load_allocations,
    load_benchmark_times,
    load_coverage,
    load_criteria,
    load_incident_trace,
    load_model,
    load_samples,
    load_series,
    load_statuses,
    load_topology,
    load_validation_log,
    verdict_record,
    write_document,
    write_records,
)
from .selector import CoverageTable, select_benchmarks
from .simulator import SimConfig, SimPolicy
from .sweep_executor import SweepExecutor, SweepStatus
from .validator import DEFAULT_ALPHA, defect_rate, filter_defects, filter_defects_phased, iqr_criteria, kmeans_criteria, learn_criteria

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10
TEST_FRACTION = 0.2
DEFAULT_T0_HOURS = 24.0

LEARNERS: Dict[str, Callable] = {
    "similarity": lambda samples, alpha, seed: learn_criteria(samples, alpha),
    "iqr": lambda samples, alpha, seed: iqr_criteria(samples, alpha),
    "kmeans": lambda samples, alpha, seed: kmeans_criteria(samples, alpha, seed),
}


def configure_logging(debug: bool = False):
    """Log to stderr so record output on stdout stays parseable"""
    root = logging.getLogger()
    for existing in [h for h in root.handlers if getattr(h, "fleetcheck", False)]:
        root.removeHandler(existing)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler.fleetcheck = True
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if debug else logging.WARNING)


def _add_global_options(parser: argparse.ArgumentParser, suppress: bool):
    """Shared options; subcommands take them too, without overriding earlier values"""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument('--workspace', default=default("."), help='Workspace directory (default: current directory)')
    parser.add_argument('--format', choices=["text", "records"], default=default("text"), help='Output format')
    parser.add_argument('--alpha', type=float, default=default(DEFAULT_ALPHA), help='Similarity threshold (default: 0.95)')
    parser.add_argument('--p0', type=float, default=default(0.05), help='Incident probability threshold (default: 0.05)')
    parser.add_argument('--t0', type=float, default=default(None), help='Prediction horizon in hours')
    parser.add_argument('--seed', type=int, default=default(0), help='Random seed (default: 0)')
    parser.add_argument('--horizon-hours', type=float, default=default(720.0), help='Simulated hours (default: 720)')
    parser.add_argument('--debug', action='store_true', default=default(False), help='Enable debug output')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetcheck",
        description="Proactive validation toolkit for GPU fleets",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s --check-deps                       # Check dependencies and exit
  %(prog)s criteria-learn --alpha 0.95        # Learn criteria from samples.jsonl
  %(prog)s validate --results results.jsonl   # Flag defective nodes
  %(prog)s fit-model --variant cox-linear     # Fit the incident model
  %(prog)s scan-plan quick --topology topology.yaml
  %(prog)s simulate --config simulation.yaml --workers 4
        """
    )
    _add_global_options(parser, suppress=False)
    parser.add_argument('--check-deps', action='store_true', help='Check dependencies and exit')

    common = argparse.ArgumentParser(add_help=False)
    _add_global_options(common, suppress=True)
    commands = parser.add_subparsers(dest="command", metavar="command")

    learn = commands.add_parser("criteria-learn", parents=[common], help="Learn per-metric criteria from benchmark samples")
    learn.add_argument('--samples', help='Samples dataset (default: workspace samples)')
    learn.add_argument('--out', help='Criteria document to write (default: workspace criteria)')
    learn.add_argument('--method', choices=sorted(LEARNERS), default="similarity", help='Learning method')
    learn.set_defaults(handler=cmd_criteria_learn)

    validate = commands.add_parser("validate", parents=[common], help="Score validation results against the criteria")
    validate.add_argument('--results', nargs="+", help='Result datasets, one per validation phase')
    validate.add_argument('--criteria', help='Criteria document (default: workspace criteria)')
    validate.add_argument('--out', help='Also write the verdicts to this dataset')
    validate.set_defaults(handler=cmd_validate)

    fit = commands.add_parser("fit-model", parents=[common], help="Fit an incident probability model")
    fit.add_argument('--incidents', help='Incident trace (default: workspace incidents)')
    fit.add_argument('--variant', choices=[v.value for v in HazardVariant], default=HazardVariant.COX_LINEAR.value,
                     help='Model variant')
    fit.add_argument('--stride-hours', type=float,
                     help='Also sample node statuses on this stride; without it statuses are taken only '
                          'at the trace start and at incident ends, where hours since the last incident is 0')
    fit.add_argument('--out', help='Model document to write (default: workspace model)')
    fit.set_defaults(handler=cmd_fit_model)

    select = commands.add_parser("select", parents=[common], help="Choose benchmarks for a node set")
    select.add_argument('--statuses', help='Node status dataset (default: workspace statuses)')
    source = select.add_mutually_exclusive_group()
    source.add_argument('--coverage', help='Coverage table dataset')
    source.add_argument('--validation-log', help='Cumulative validation log (needs --benchmark-times)')
    select.add_argument('--benchmark-times', help='Benchmark running times document')
    select.add_argument('--model', help='Model document (default: workspace model)')
    select.add_argument('--out', help='Also write the selection document here')
    select.set_defaults(handler=cmd_select)

    scan = commands.add_parser("scan-plan", parents=[common], help="Plan a network scan")
    scan.add_argument('mode', choices=[FULL, QUICK], help='full pairs every NIC pair, quick covers every hop distance')
    scan.add_argument('--nodes', nargs="+", help='NIC ids for a full scan')
    scan.add_argument('--nodes-file', help='File with one NIC id per line')
    scan.add_argument('--topology', help='Topology document (default: workspace topology)')
    scan.add_argument('--out', help='Schedule document to write')
    scan.set_defaults(handler=cmd_scan_plan)

    search = commands.add_parser("search-params", parents=[common], help="Pick benchmark warmup and measurement steps")
    search.add_argument('--series', help='Per-step series dataset (default: workspace series)')
    search.add_argument('--similar-cycles', type=int, default=3, help='Cycles that must agree (default: 3)')
    search.set_defaults(handler=cmd_search_params)

    simulate = commands.add_parser("simulate", parents=[common], help="Compare validation policies in simulation")
    simulate.add_argument('--config', help='Simulation document')
    simulate.add_argument('--policies', nargs="+", choices=[p.value for p in SimPolicy], help='Policies to compare')
    simulate.add_argument('--seeds', nargs="+", type=int, help='Seeds to sweep (default: --seed)')
    simulate.add_argument('--workers', type=int, help='Worker threads (default: 1)')
    simulate.add_argument('--out', help='Report dataset (default: <reports>/simulation.jsonl)')
    simulate.set_defaults(handler=cmd_simulate)

    return parser


# --- helpers ------------------------------------------------------------------

def _output_path(manager: ConfigManager, key: str, override: Optional[str]) -> str:
    path = override or manager.layout.path(key)
    if is_url(path):
        raise ConfigurationError(f"Cannot write {key} to a URL: {path}")
    return path


def _optional_source(manager: ConfigManager, key: str, override: Optional[str] = None) -> Optional[str]:
    """Resolved source, or None for a local default that does not exist"""
    if override:
        return manager.resolve(override)
    path = manager.layout.path(key)
    if not is_url(path) and not os.path.exists(path):
        return None
    return manager.resolve(path)


def _emit_records(schema: str, records: Sequence[Dict[str, Any]], config: Dict[str, Any], **header: Any):
    sys.stdout.write(dumps_records(schema, records, {"config": config, **header}))


def _format_pairs(pairs: Sequence[Sequence[str]]) -> str:
    return ", ".join(f"{a}-{b}" for a, b in pairs) or "no pairs"


def _format_hours(value: float) -> str:
    return "∞" if math.isinf(value) else f"{value:.2f}"


def _group_by_metric(samples: Sequence[MetricSample]) -> Dict[str, List[MetricSample]]:
    grouped: Dict[str, List[MetricSample]] = defaultdict(list)
    for sample in samples:
        grouped[sample.metric_id].append(sample)
    return dict(sorted(grouped.items()))


# --- commands -----------------------------------------------------------------

def cmd_criteria_learn(args, manager: ConfigManager) -> int:
    samples = load_samples(manager.source("samples", args.samples))
    if not samples:
        raise InvalidInputError("Samples dataset holds no samples")
    out = _output_path(manager, "criteria", args.out)
    learner = LEARNERS[args.method]

    learned = {metric: learner(group, args.alpha, args.seed) for metric, group in _group_by_metric(samples).items()}
    body = criteria_body([result.criteria for result in learned.values()])
    body["defects"] = {metric: result.defect_nodes for metric, result in learned.items()}
    write_document(out, "criteria", body)

    config = {"alpha": args.alpha, "method": args.method, "seed": args.seed}
    if args.format == "records":
        _emit_records("criteria-summary", [
            {
                "metric_id": metric,
                "reference_node": result.criteria.reference_sample.node_id,
                "iterations": result.iterations,
                "defect_nodes": result.defect_nodes,
            }
            for metric, result in learned.items()
        ], config)
        return 0

    print(f"🔍 Learned criteria for {len(learned)} metrics (alpha {args.alpha}, {args.method})")
    for metric, result in learned.items():
        defects = ", ".join(result.defect_nodes) or "none"
        print(f"  {metric}: reference {result.criteria.reference_sample.node_id}, defects: {defects}")
    all_defects = sorted({node for result in learned.values() for node in result.defect_nodes})
    print(f"Defects: {len(all_defects)} nodes {', '.join(all_defects)}".rstrip())
    print(f"✅ Criteria written to {out}")
    return 0


def cmd_validate(args, manager: ConfigManager) -> int:
    criteria = load_criteria(manager.source("criteria", args.criteria))
    paths = args.results or [manager.layout.path("results")]
    phases = [load_samples(manager.resolve(path)) for path in paths]

    if len(phases) == 1:
        verdicts = filter_defects(phases[0], criteria)
    else:
        verdicts = filter_defects_phased(phases, criteria)

    records = [verdict_record(v) for v in verdicts]
    if args.out:
        write_records(_output_path(manager, "results", args.out), "verdicts", records)

    flagged = sum(1 for v in verdicts if v.defect)
    rate = defect_rate(verdicts)
    if args.format == "records":
        _emit_records("verdicts", records, {"alpha": {m: c.alpha for m, c in sorted(criteria.items())}})
        return 0

    for verdict in verdicts:
        if verdict.defect:
            print(f"❌ {verdict.node_id}: {', '.join(verdict.violating_metrics)}")
    print(f"Defects: {flagged} of {len(verdicts)} nodes (rate {rate:.4f})")
    return 0


def cmd_fit_model(args, manager: ConfigManager) -> int:
    trace = load_incident_trace(manager.source("incidents", args.incidents))
    out = _output_path(manager, "models", args.out) if args.out else manager.layout.model_path
    if args.stride_hours is None and HazardVariant.parse(args.variant) is HazardVariant.COX_LINEAR:
        logger.warning("⚠️ No --stride-hours: hours since the last incident is 0 in every sample and carries no weight")
    samples = extract_samples(trace, args.stride_hours)
    if len(samples) < MIN_FIT_SAMPLES:
        raise FitError(f"Need at least {MIN_FIT_SAMPLES} survival samples, trace yields {len(samples)}")

    order = np.random.default_rng(args.seed).permutation(len(samples))
    test_size = max(1, int(round(TEST_FRACTION * len(samples))))
    test = [samples[i] for i in sorted(order[:test_size])]
    train = [samples[i] for i in sorted(order[test_size:])]

    model = fit_samples(train, args.variant, trace.categories)
    try:
        accuracy: Optional[float] = model_accuracy(model, test)
    except InvalidInputError as e:
        logger.warning(f"⚠️ Held-out accuracy unavailable: {e}")
        accuracy = None

    body = model.to_document()
    body["training"] = {"seed": args.seed, "train_samples": len(train), "test_samples": len(test),
                        "stride_hours": args.stride_hours, "accuracy": accuracy}
    write_document(out, "model", body)

    config = {"variant": args.variant, "seed": args.seed, "stride_hours": args.stride_hours}
    if args.format == "records":
        _emit_records("fit-summary", [{"variant": args.variant, "train_samples": len(train),
                                       "test_samples": len(test), "accuracy": accuracy}], config)
        return 0

    print(f"🔍 Fitted {args.variant} on {len(train)} samples, held out {len(test)}")
    print(f"Accuracy: {'n/a' if accuracy is None else f'{accuracy:.4f}'}")
    print(f"✅ Model written to {out}")
    return 0


def _coverage_from_args(args, manager: ConfigManager) -> CoverageTable:
    if args.validation_log:
        if not args.benchmark_times:
            raise ConfigurationError("--validation-log needs --benchmark-times")
        entries = load_validation_log(manager.resolve(args.validation_log))
        return CoverageTable.from_validation_log(entries, load_benchmark_times(manager.resolve(args.benchmark_times)))
    return load_coverage(manager.source("coverage", args.coverage))


def cmd_select(args, manager: ConfigManager) -> int:
    model = load_model(manager.resolve(args.model) if args.model else manager.layout.model_path)
    statuses = load_statuses(manager.source("statuses", args.statuses))
    coverage = _coverage_from_args(args, manager)
    t0 = args.t0 if args.t0 is not None else DEFAULT_T0_HOURS

    outcome = select_benchmarks(statuses, coverage, model, args.p0, t0)
    config = {"p0": args.p0, "t0_hours": t0, "variant": model.variant.value}
    document = {
        "status": "skipped" if outcome.skipped else "selected",
        "chosen": list(outcome.chosen),
        "coverage": outcome.coverage,
        "residual_probability": outcome.residual,
        "initial_probability": outcome.initial_probability,
        "total_time_s": outcome.total_time_s,
        "nodes": len(statuses),
        "config": config,
    }
    if args.out:
        write_document(_output_path(manager, "reports", args.out), "selection", document)

    if args.format == "records":
        _emit_records("selection", [document], config)
        return 0

    if outcome.skipped:
        print(f"✅ Incident probability {outcome.initial_probability:.4f} <= p0 {args.p0}: validation skipped")
        return 0
    print(f"🔍 Incident probability {outcome.initial_probability:.4f} over {t0}h for {len(statuses)} nodes")
    print(f"Chosen: {', '.join(outcome.chosen)}")
    print(f"Coverage {outcome.coverage:.4f}, residual {outcome.residual:.4f}, time {outcome.total_time_s:.0f}s")
    return 0


def _scan_nodes(args) -> Optional[List[str]]:
    if args.nodes:
        return list(args.nodes)
    if args.nodes_file:
        try:
            with open(args.nodes_file, "r", encoding="utf-8") as f:
                return [line.strip() for line in f if line.strip()]
        except OSError as e:
            raise ConfigurationError(f"Cannot read {args.nodes_file}: {e.strerror}") from e
    return None


def cmd_scan_plan(args, manager: ConfigManager) -> int:
    nodes = _scan_nodes(args) if args.mode == FULL else None
    topology: Optional[FatTreeTopology] = None
    if args.mode == QUICK or nodes is None:
        try:
            topology = load_topology(manager.source("topology", args.topology))
        except InvalidInputError as e:
            raise InfeasibleError(f"Infeasible topology: {e}") from e

    if args.mode == FULL:
        schedule = plan_full_scan(nodes if nodes is not None else topology.nodes)
        report = verify_schedule(schedule, FULL)
    else:
        try:
            schedule = plan_quick_scan(topology)
        except InvalidInputError as e:
            raise InfeasibleError(f"Infeasible topology: {e}") from e
        report = verify_schedule(schedule, QUICK, topology)

    if not report.ok:
        details = "; ".join(f"{v.kind}: {v.message}" for v in report.violations)
        raise InfeasibleError(f"Schedule violates its guarantees: {details}")

    document = schedule.to_document()
    document["verification"] = {"ok": report.ok, "rounds": report.rounds, "pairs": report.pairs, "violations": []}
    if args.out:
        write_document(_output_path(manager, "reports", args.out), "scan-schedule", document)

    if args.format == "records":
        _emit_records("scan-rounds", document["rounds"], {"mode": args.mode, "nodes": len(schedule.nodes)},
                      verification=document["verification"])
        return 0

    print(f"🔍 {args.mode} scan over {len(schedule.nodes)} NICs: {report.rounds} rounds, {report.pairs} pairs")
    for entry in document["rounds"]:
        hop = f" ({entry['hop']} hops)" if "hop" in entry else ""
        print(f"  round {entry['round']}{hop}: {_format_pairs(entry['pairs'])}")
        if entry.get("extra_pairs"):
            print(f"    extra: {_format_pairs(entry['extra_pairs'])}")
    print(f"✅ Verification passed: {report.rounds} rounds, {report.pairs} pairs, no violations")
    return 0


def cmd_search_params(args, manager: ConfigManager) -> int:
    series = load_series(manager.source("series", args.series))
    result = search_parameters(series, args.alpha, args.similar_cycles)
    record = {"warmup": result.warmup, "measure": result.measure, "fallback": result.fallback,
              "score": result.score, "periods": result.periods}

    if args.format == "records":
        _emit_records("parameters", [record], {"alpha": args.alpha, "similar_cycles": args.similar_cycles})
        return 0
    if result.fallback:
        print(f"⚠️ No stable window; measure all {result.measure} steps")
    else:
        print(f"✅ Warmup {result.warmup} steps, measure {result.measure} steps (score {result.score:.4f})")
    return 0


def _plan_from_args(args, manager: ConfigManager) -> SimulationPlan:
    if args.config:
        plan = manager.load_simulation(args.config)
    else:
        base = SimConfig(horizon_hours=args.horizon_hours, p0=args.p0, t0_hours=args.t0, seed=args.seed)
        sources = {"allocations": manager.source("allocations")}
        for key in ("coverage", "incidents"):
            path = _optional_source(manager, key)
            if path:
                sources[key] = path
        if os.path.exists(manager.layout.model_path):
            sources["model"] = manager.layout.model_path
        plan = SimulationPlan(base, sources=sources)

    if args.policies:
        plan.policies = [SimPolicy.parse(p) for p in args.policies]
    if args.seeds:
        plan.seeds = list(args.seeds)
    if args.workers:
        plan.workers = args.workers
    return plan


def _comparison_table(rows: List[Dict[str, Any]]) -> List[str]:
    lines = [f"{'policy':<10} {'seed':>5} {'util':>8} {'valid_h':>10} {'down_h':>10} {'mtbi_h':>10} {'incidents':>9}"]
    for row in rows:
        mtbi = math.inf if row["mtbi_hours"] is None else row["mtbi_hours"]
        lines.append(
            f"{row['config']['policy']:<10} {row['config']['seed']:>5} {row['utilization']:>8.4f} "
            f"{row['validation_hours']:>10.2f} {row['down_hours']:>10.2f} {_format_hours(mtbi):>10} "
            f"{row['total_incidents']:>9}"
        )
    return lines


def cmd_simulate(args, manager: ConfigManager) -> int:
    plan = _plan_from_args(args, manager)
    out = _output_path(manager, "reports", args.out) if args.out else \
        os.path.join(_output_path(manager, "reports", None), "simulation.jsonl")

    allocations = load_allocations(plan.sources["allocations"])
    coverage = load_coverage(plan.sources["coverage"]) if "coverage" in plan.sources else None
    model = load_model(plan.sources["model"]) if "model" in plan.sources else None
    trace = load_incident_trace(plan.sources["incidents"]) if "incidents" in plan.sources else None

    def progress(value: int, message: str):
        if args.format == "text":
            print(f"  [{value:3d}%] {message}", file=sys.stderr)

    executor = SweepExecutor(allocations, coverage, model, trace, plan.workers, progress)
    results = executor.run(plan.base, plan.policies, plan.seeds)

    failed = [r for r in results if r.status is SweepStatus.FAILED]
    if failed:
        raise failed[0].error

    rows = [r.report.to_record() for r in results]
    write_records(out, "simulation-report", rows, {"horizon_hours": plan.base.horizon_hours})
    if plan.audit_path:
        audit = [
            {"policy": r.policy.value, "seed": r.seed, "time": e.time, "kind": e.kind,
             "node": e.node, "job": e.job, "detail": e.detail}
            for r in results for e in r.report.audit
        ]
        write_records(plan.audit_path, "audit", audit)

    if args.format == "records":
        _emit_records("simulation-report", rows, {"horizon_hours": plan.base.horizon_hours})
        return 0

    for line in _comparison_table(rows):
        print(line)
    print(f"✅ Report written to {out}")
    return 0


def check_dependencies() -> int:
    """Print the dependency report; 0 when every required package imports, else 2"""
    checker = DependencyChecker()
    required_status, optional_status = checker.check_dependencies()
    print("🔍 Dependency Check Mode")
    print("=" * 50)
    for line in checker.report_lines(required_status, optional_status)[1:]:
        print(line)

    missing = checker.get_missing_dependencies(required_status)
    print("\n📋 Dependency Check Summary:")
    print(f"  Python Dependencies: {'✅ OK' if not missing else '❌ Missing'}")
    print(f"  Benchmark Runners: {'✅ OK' if all(optional_status.values()) else '⚠️ Partial'}")
    if missing:
        print("\n📦 Install with: pip install -r requirements.txt")
        return 2
    print("✅ All required dependencies satisfied")
    return 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map toolkit errors to exit codes"""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.debug)

    if args.check_deps:
        return check_dependencies()

    if not args.command:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a command is required", file=sys.stderr)
        return 2

    try:
        manager = ConfigManager(args.workspace)
        return args.handler(args, manager)
    except FleetCheckError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


__all__ = ["build_parser", "check_dependencies", "configure_logging", "run"]
