"""
Network Scan - Collision-free pair schedules for network validation

Full scan covers every node pair in N-1 rounds (round-robin circle method).
Quick scan covers each fat-tree tier once: round h pairs nodes whose lowest
common switch sits at tier h, so the schedule has k rounds for k tiers.
"""

import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

FULL = "full"
QUICK = "quick"

Pair = Tuple[str, str]


@dataclass
class ScanRound:
    hop: Optional[int] = None
    pairs: List[Pair] = field(default_factory=list)
    extra_pairs: List[Pair] = field(default_factory=list)


@dataclass
class ScanSchedule:
    mode: str
    nodes: List[str]
    rounds: List[ScanRound] = field(default_factory=list)

    def to_document(self) -> Dict[str, Any]:
        rounds = []
        for index, scan_round in enumerate(self.rounds, start=1):
            entry: Dict[str, Any] = {"round": index, "pairs": [list(p) for p in scan_round.pairs]}
            if scan_round.hop is not None:
                entry["hop"] = scan_round.hop
            if scan_round.extra_pairs:
                entry["extra_pairs"] = [list(p) for p in scan_round.extra_pairs]
            rounds.append(entry)
        return {"mode": self.mode, "nodes": list(self.nodes), "rounds": rounds}


@dataclass
class Violation:
    kind: str
    message: str
    round_index: Optional[int] = None
    pair: Optional[Pair] = None


@dataclass
class VerificationReport:
    mode: str
    rounds: int = 0
    pairs: int = 0
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_ids(node_ids: Sequence[str]) -> List[str]:
    ids = [str(n) for n in node_ids]
    if len(ids) != len(set(ids)):
        duplicates = sorted({n for n in ids if ids.count(n) > 1})
        raise InvalidInputError(f"Duplicate node ids: {duplicates}")
    return ids


def plan_full_scan(nic_ids: Sequence[str]) -> ScanSchedule:
    """Round-robin circle method: fix the first id and rotate the rest.

    Odd counts get a bye slot; pairs with the bye are left out, so each round
    is a perfect matching of the real ids when N is even.
    """
    ids = _check_ids(nic_ids)
    if len(ids) < 2:
        raise InvalidInputError("Full scan needs at least two NICs")

    bye = object()
    arrangement: List[Any] = ids + ([bye] if len(ids) % 2 else [])
    size = len(arrangement)

    rounds = []
    for _ in range(size - 1):
        pairs = [
            (arrangement[i], arrangement[size - 1 - i])
            for i in range(size // 2)
            if arrangement[i] is not bye and arrangement[size - 1 - i] is not bye
        ]
        rounds.append(ScanRound(pairs=pairs))
        arrangement = [arrangement[0], arrangement[-1]] + arrangement[1:-1]

    logger.info(f"✅ Full scan over {len(ids)} NICs: {len(rounds)} rounds")
    return ScanSchedule(FULL, ids, rounds)


@dataclass(frozen=True)
class Switch:
    switch_id: str
    tier: int
    parent: Optional[str] = None


class FatTreeTopology:
    """k-tier switch tree with nodes attached to tier-1 (ToR) switches.

    The top tier is treated as one fully connected layer: nodes that share no
    switch below tier k meet at tier k.
    """

    def __init__(self, tiers: int, switches: Iterable[Switch], attachments: Dict[str, str]):
        self.tiers = int(tiers)
        self.switches: Dict[str, Switch] = {}
        for switch in switches:
            if switch.switch_id in self.switches:
                raise InvalidInputError(f"Duplicate switch id {switch.switch_id!r}")
            self.switches[switch.switch_id] = switch
        self.attachments = {str(node): str(tor) for node, tor in attachments.items()}
        self._validate()

    def _validate(self):
        if self.tiers < 1:
            raise InvalidInputError("Topology needs at least one tier")

        for switch in self.switches.values():
            if not 1 <= switch.tier <= self.tiers:
                raise InvalidInputError(f"Switch {switch.switch_id} has tier {switch.tier} outside 1..{self.tiers}")
            if switch.tier < self.tiers:
                parent = self.switches.get(switch.parent) if switch.parent else None
                if parent is None or parent.tier != switch.tier + 1:
                    raise InvalidInputError(f"Switch {switch.switch_id} needs a parent at tier {switch.tier + 1}")
            elif switch.parent is not None:
                raise InvalidInputError(f"Top-tier switch {switch.switch_id} cannot have a parent")

        for node, tor in self.attachments.items():
            switch = self.switches.get(tor)
            if switch is None or switch.tier != 1:
                raise InvalidInputError(f"Node {node} must attach to a tier-1 switch, not {tor!r}")

        tors = {tor for tor in self.attachments.values()}
        if self.tiers == 1 and len(tors) > 1:
            raise InvalidInputError("A one-tier topology has a single ToR")

    @classmethod
    def regular(cls, fanouts: Sequence[int], nodes_per_tor: int) -> "FatTreeTopology":
        """Balanced tree: one core switch, fanouts[i] children per switch going down"""
        tiers = len(fanouts) + 1
        switches = [Switch("t%d-0" % tiers, tiers)]
        level = [switches[0].switch_id]
        for depth, fanout in enumerate(fanouts):
            tier = tiers - depth - 1
            children = []
            for parent in level:
                for _ in range(fanout):
                    switch = Switch(f"t{tier}-{len(children)}", tier, parent)
                    switches.append(switch)
                    children.append(switch.switch_id)
            level = children

        attachments = {}
        for tor in level:
            for _ in range(nodes_per_tor):
                attachments[f"n{len(attachments):04d}"] = tor
        return cls(tiers, switches, attachments)

    @property
    def nodes(self) -> List[str]:
        return sorted(self.attachments)

    def ancestor(self, node: str, tier: int) -> str:
        switch_id = self.attachments[node]
        while self.switches[switch_id].tier < tier:
            switch_id = self.switches[switch_id].parent
        return switch_id

    def lca_tier(self, a: str, b: str) -> int:
        for tier in range(1, self.tiers):
            if self.ancestor(a, tier) == self.ancestor(b, tier):
                return tier
        return self.tiers

    def hop_distance(self, a: str, b: str) -> int:
        return 2 * self.lca_tier(a, b)

    def to_document(self) -> Dict[str, Any]:
        return {
            "tiers": self.tiers,
            "switches": [
                {"id": s.switch_id, "tier": s.tier, **({"parent": s.parent} if s.parent else {})}
                for s in sorted(self.switches.values(), key=lambda s: (-s.tier, s.switch_id))
            ],
            "nodes": {node: self.attachments[node] for node in self.nodes},
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "FatTreeTopology":
        try:
            switches = [Switch(str(s["id"]), int(s["tier"]), s.get("parent")) for s in document["switches"]]
            return cls(int(document["tiers"]), switches, dict(document["nodes"]))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"Malformed topology document: {e}") from e


def _group_children(topology: FatTreeTopology, tier: int) -> Dict[str, Dict[str, List[str]]]:
    """tier-h group -> child subtree -> sorted member nodes"""
    groups: Dict[str, Dict[str, List[str]]] = defaultdict(lambda: defaultdict(list))
    for node in topology.nodes:
        group = "fabric" if tier == topology.tiers else topology.ancestor(node, tier)
        child = node if tier == 1 else topology.ancestor(node, tier - 1)
        groups[group][child].append(node)
    return groups


def _pair_group(children: Dict[str, List[str]]) -> Tuple[List[Pair], List[Pair]]:
    keys = sorted(children)
    sizes = {len(children[k]) for k in keys}

    if len(keys) >= 2 and len(keys) % 2 == 0 and len(sizes) == 1:
        # zig-zag: first half against the reversed second half
        flat = [node for key in keys for node in children[key]]
        return [(flat[i], flat[len(flat) - 1 - i]) for i in range(len(flat) // 2)], []

    heap = [(-len(children[k]), k) for k in keys]
    heapq.heapify(heap)
    queues = {k: list(children[k]) for k in keys}
    used: List[Tuple[str, str]] = []
    pairs: List[Pair] = []

    while len(heap) >= 2:
        _, first = heapq.heappop(heap)
        _, second = heapq.heappop(heap)
        a, b = queues[first].pop(0), queues[second].pop(0)
        pairs.append((a, b))
        used.extend([(first, a), (second, b)])
        for key in (first, second):
            if queues[key]:
                heapq.heappush(heap, (-len(queues[key]), key))

    extra: List[Pair] = []
    if heap:
        _, leftover = heap[0]
        partners = [node for key, node in used if key != leftover]
        for index, node in enumerate(queues[leftover]):
            if partners:
                extra.append((node, partners[index % len(partners)]))
            else:
                logger.debug(f"🔍 Node {node} has no partner in its group")
    return pairs, extra


def plan_quick_scan(topology: FatTreeTopology) -> ScanSchedule:
    """One round per tier; round h only pairs nodes whose LCA is at tier h.

    Unbalanced groups leave nodes over; each is paired again with an already
    scheduled node from another subtree and recorded as an extra pair.
    """
    rounds = []
    for tier in range(1, topology.tiers + 1):
        scan_round = ScanRound(hop=2 * tier)
        groups = _group_children(topology, tier)
        for group in sorted(groups):
            pairs, extra = _pair_group(groups[group])
            scan_round.pairs.extend(pairs)
            scan_round.extra_pairs.extend(extra)
        rounds.append(scan_round)

    logger.info(
        f"✅ Quick scan over {len(topology.attachments)} nodes: {len(rounds)} rounds, "
        f"{sum(len(r.extra_pairs) for r in rounds)} extra pairs"
    )
    return ScanSchedule(QUICK, topology.nodes, rounds)


def _check_round_usage(report: VerificationReport, index: int, scan_round: ScanRound, known: set):
    seen = set()
    for pair in scan_round.pairs:
        a, b = pair
        if a == b:
            report.violations.append(Violation("self-pair", f"Round {index} pairs {a} with itself", index, pair))
        for node in (a, b):
            if node not in known:
                report.violations.append(Violation("unknown-node", f"Round {index} names unknown node {node}", index, pair))
            if node in seen:
                report.violations.append(Violation("node-reuse", f"Node {node} appears twice in round {index}", index, pair))
            seen.add(node)


def _verify_full(report: VerificationReport, schedule: ScanSchedule):
    nodes = list(schedule.nodes)
    padded = len(nodes) + len(nodes) % 2
    if len(schedule.rounds) != padded - 1:
        report.violations.append(Violation(
            "round-count", f"Expected {padded - 1} rounds for {len(nodes)} nodes, found {len(schedule.rounds)}"))

    first_round: Dict[frozenset, int] = {}
    for index, scan_round in enumerate(schedule.rounds, start=1):
        if len(scan_round.pairs) != len(nodes) // 2:
            report.violations.append(Violation(
                "matching-size", f"Round {index} has {len(scan_round.pairs)} pairs, expected {len(nodes) // 2}", index))
        for pair in scan_round.pairs:
            key = frozenset(pair)
            if key in first_round:
                report.violations.append(Violation(
                    "duplicate-pair", f"Pair {pair[0]}-{pair[1]} appears in rounds {first_round[key]} and {index}", index, pair))
            else:
                first_round[key] = index

    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if frozenset((a, b)) not in first_round:
                report.violations.append(Violation("missing-pair", f"Pair {a}-{b} is never scanned", pair=(a, b)))


def _verify_quick(report: VerificationReport, schedule: ScanSchedule, topology: FatTreeTopology):
    if len(schedule.rounds) != topology.tiers:
        report.violations.append(Violation(
            "round-count", f"Expected {topology.tiers} rounds for a {topology.tiers}-tier tree, found {len(schedule.rounds)}"))

    for index, scan_round in enumerate(schedule.rounds, start=1):
        tier = index
        for pair in scan_round.pairs + scan_round.extra_pairs:
            if pair[0] in topology.attachments and pair[1] in topology.attachments and pair[0] != pair[1]:
                hop = topology.hop_distance(*pair)
                if hop != 2 * tier:
                    report.violations.append(Violation(
                        "hop-distance", f"Pair {pair[0]}-{pair[1]} in round {index} is {hop} hops apart, expected {2 * tier}", index, pair))

        if tier > topology.tiers:
            continue
        covered = {node for pair in scan_round.pairs + scan_round.extra_pairs for node in pair}
        for children in _group_children(topology, tier).values():
            if len(children) < 2:
                continue
            for members in children.values():
                for node in members:
                    if node not in covered:
                        report.violations.append(Violation(
                            "incomplete", f"Node {node} can be paired at {2 * tier} hops but is missing from round {index}", index))


def verify_schedule(schedule: ScanSchedule, mode: Optional[str] = None,
                    topology: Optional[FatTreeTopology] = None) -> VerificationReport:
    """Check a schedule against its planner's guarantees; never raises on a bad schedule"""
    mode = mode or schedule.mode
    report = VerificationReport(mode, len(schedule.rounds), sum(len(r.pairs) for r in schedule.rounds))
    known = set(topology.attachments) if topology is not None else set(schedule.nodes)

    for index, scan_round in enumerate(schedule.rounds, start=1):
        _check_round_usage(report, index, scan_round, known)

    if mode == FULL:
        _verify_full(report, schedule)
    elif mode == QUICK:
        if topology is None:
            report.violations.append(Violation("no-topology", "Quick scan verification needs the topology"))
        else:
            _verify_quick(report, schedule, topology)
    else:
        report.violations.append(Violation("unknown-mode", f"Unknown scan mode {mode!r}"))

    if report.violations:
        logger.warning(f"⚠️ Schedule verification found {len(report.violations)} violations")
    return report
