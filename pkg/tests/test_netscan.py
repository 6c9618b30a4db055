"""Full and quick network scan planning and schedule verification"""

import numpy as np
import pytest

from core.errors import InvalidInputError
from core.netscan import (
    FatTreeTopology,
    ScanRound,
    Switch,
    plan_full_scan,
    plan_quick_scan,
    verify_schedule,
)


def _kinds(report):
    return {v.kind for v in report.violations}


def _random_tree(rng, tiers):
    """One core switch at the top tier, 1-3 children per switch, 0-4 nodes per ToR"""
    switches = [Switch(f"s{tiers}-0", tiers)]
    level = [switches[0].switch_id]
    for tier in range(tiers - 1, 0, -1):
        children = []
        for parent in level:
            for _ in range(int(rng.integers(1, 4))):
                switch = Switch(f"s{tier}-{len(children)}", tier, parent)
                switches.append(switch)
                children.append(switch.switch_id)
        level = children

    attachments = {}
    for tor in level:
        for _ in range(int(rng.integers(0, 5))):
            attachments[f"n{len(attachments):03d}"] = tor
    return FatTreeTopology(tiers, switches, attachments)


class TestFullScan:
    def test_four_nics(self):
        schedule = plan_full_scan(["a", "b", "c", "d"])
        assert [r.pairs for r in schedule.rounds] == [
            [("a", "d"), ("b", "c")],
            [("a", "c"), ("d", "b")],
            [("a", "b"), ("c", "d")],
        ]

    @pytest.mark.parametrize("count", range(2, 257, 2))
    def test_every_pair_once_in_perfect_matchings(self, count):
        nics = [f"nic{i:03d}" for i in range(count)]
        schedule = plan_full_scan(nics)
        assert len(schedule.rounds) == count - 1
        assert all(len(r.pairs) == count // 2 for r in schedule.rounds)

        report = verify_schedule(schedule)
        assert report.ok, report.violations
        assert report.pairs == count * (count - 1) // 2

    def test_odd_count_uses_a_bye(self):
        schedule = plan_full_scan(["a", "b", "c", "d", "e"])
        assert len(schedule.rounds) == 5
        assert all(len(r.pairs) == 2 for r in schedule.rounds)
        assert verify_schedule(schedule).ok

    def test_rejects_duplicates_and_tiny_inputs(self):
        with pytest.raises(InvalidInputError):
            plan_full_scan(["a", "a", "b"])
        with pytest.raises(InvalidInputError):
            plan_full_scan(["a"])

    def test_detects_repeated_pair(self):
        schedule = plan_full_scan(["a", "b", "c", "d"])
        schedule.rounds[2] = ScanRound(pairs=list(schedule.rounds[0].pairs))
        report = verify_schedule(schedule)
        assert not report.ok
        assert {"duplicate-pair", "missing-pair"} <= _kinds(report)
        assert any("rounds 1 and 3" in v.message for v in report.violations)

    def test_detects_node_reuse_and_self_pairs(self):
        schedule = plan_full_scan(["a", "b", "c", "d"])
        schedule.rounds[0] = ScanRound(pairs=[("a", "a"), ("a", "x")])
        kinds = _kinds(verify_schedule(schedule))
        assert {"self-pair", "node-reuse", "unknown-node"} <= kinds


class TestTopology:
    def test_regular_tree_hops(self):
        topology = FatTreeTopology.regular([2, 4], 4)
        assert topology.tiers == 3
        assert len(topology.nodes) == 32
        assert topology.hop_distance("n0000", "n0001") == 2
        assert topology.hop_distance("n0000", "n0004") == 4
        assert topology.hop_distance("n0000", "n0031") == 6

    def test_document_reload(self):
        topology = FatTreeTopology.regular([2, 2], 2)
        reloaded = FatTreeTopology.from_document(topology.to_document())
        assert reloaded.nodes == topology.nodes
        assert reloaded.hop_distance("n0000", "n0007") == topology.hop_distance("n0000", "n0007")

    def test_rejects_node_on_spine(self):
        switches = [Switch("core", 2), Switch("tor", 1, "core")]
        with pytest.raises(InvalidInputError):
            FatTreeTopology(2, switches, {"n0": "core"})

    def test_rejects_orphan_switch(self):
        with pytest.raises(InvalidInputError):
            FatTreeTopology(2, [Switch("core", 2), Switch("tor", 1)], {"n0": "tor"})

    def test_malformed_document(self):
        with pytest.raises(InvalidInputError):
            FatTreeTopology.from_document({"tiers": 2, "nodes": {}})


class TestQuickScan:
    def test_two_tier_tree(self):
        schedule = plan_quick_scan(FatTreeTopology.regular([2], 2))
        assert [r.hop for r in schedule.rounds] == [2, 4]
        assert schedule.rounds[0].pairs == [("n0000", "n0001"), ("n0002", "n0003")]
        assert schedule.rounds[1].pairs == [("n0000", "n0003"), ("n0001", "n0002")]

    def test_three_tier_tree(self):
        topology = FatTreeTopology.regular([2, 4], 4)
        schedule = plan_quick_scan(topology)
        assert len(schedule.rounds) == 3
        assert [len(r.pairs) for r in schedule.rounds] == [16, 16, 16]
        for tier, scan_round in enumerate(schedule.rounds, start=1):
            assert all(topology.hop_distance(*pair) == 2 * tier for pair in scan_round.pairs)
        assert verify_schedule(schedule, topology=topology).ok

    def test_unbalanced_tree_gets_extra_pairs(self):
        switches = [Switch("core", 2), Switch("tor-a", 1, "core"), Switch("tor-b", 1, "core")]
        nodes = {"a0": "tor-a", "a1": "tor-a", "a2": "tor-a", "b0": "tor-b"}
        topology = FatTreeTopology(2, switches, nodes)
        schedule = plan_quick_scan(topology)

        assert schedule.rounds[1].pairs == [("a0", "b0")]
        assert schedule.rounds[1].extra_pairs == [("a1", "b0"), ("a2", "b0")]
        assert schedule.rounds[0].extra_pairs
        assert verify_schedule(schedule, topology=topology).ok

    @pytest.mark.parametrize("seed", range(50))
    def test_random_trees_verify(self, seed):
        rng = np.random.default_rng(seed)
        tiers = 1 + seed % 4
        topology = _random_tree(rng, tiers)
        schedule = plan_quick_scan(topology)
        assert [r.hop for r in schedule.rounds] == [2 * t for t in range(1, tiers + 1)]
        report = verify_schedule(schedule, topology=topology)
        assert report.ok, report.violations

    def test_detects_pair_at_wrong_tier(self):
        topology = FatTreeTopology.regular([2], 2)
        schedule = plan_quick_scan(topology)
        schedule.rounds[0].pairs = [("n0000", "n0002"), ("n0001", "n0003")]
        report = verify_schedule(schedule, topology=topology)
        assert _kinds(report) == {"hop-distance"}

    def test_quick_verification_needs_topology(self):
        schedule = plan_quick_scan(FatTreeTopology.regular([2], 2))
        assert _kinds(verify_schedule(schedule)) == {"no-topology"}

    def test_unknown_mode(self):
        schedule = plan_full_scan(["a", "b"])
        assert "unknown-mode" in _kinds(verify_schedule(schedule, mode="partial"))
