"""Workspace layout, remote sources and simulation settings"""

import os
import time

import pytest
import requests

from core.config_manager import ConfigManager, WorkspaceLayout, is_url
from core.errors import ConfigurationError
from core.records import write_document
from core.simulator import SimPolicy

URL = "https://example.org/traces/allocations.jsonl"


class FakeResponse:
    def __init__(self, text, status=200):
        self.text = text
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status} error")


class TestLayout:
    def test_defaults(self, workspace):
        layout = ConfigManager(str(workspace)).layout
        assert layout.path("samples") == str(workspace / "samples.jsonl")
        assert layout.model_path == str(workspace / "models" / "model.yaml")
        assert layout.cache_dir == workspace / ".cache"

    def test_workspace_file_overrides(self, workspace):
        write_document(workspace / "workspace.yaml", "workspace",
                       {"paths": {"samples": "data/bench.jsonl", "incidents": "/srv/incidents.jsonl", "allocations": URL}})
        layout = ConfigManager(str(workspace)).layout
        assert layout.path("samples") == str(workspace / "data" / "bench.jsonl")
        assert layout.path("incidents") == "/srv/incidents.jsonl"
        assert layout.path("allocations") == URL

    def test_unknown_path_key(self, workspace):
        write_document(workspace / "workspace.yaml", "workspace", {"paths": {"sampels": "x.jsonl"}})
        with pytest.raises(ConfigurationError, match="sampels"):
            ConfigManager(str(workspace))

    def test_path_keys_cover_every_entry(self):
        fields = set(WorkspaceLayout.__dataclass_fields__) - {"root"}
        assert fields == set(WorkspaceLayout.PATH_KEYS)


class TestRemoteSources:
    def test_local_paths_pass_through(self, workspace):
        manager = ConfigManager(str(workspace))
        assert manager.resolve("local/file.jsonl") == "local/file.jsonl"
        assert not is_url("/abs/file.jsonl")

    def test_download_into_cache(self, workspace, monkeypatch):
        calls = []

        def fake_get(url, **kwargs):
            calls.append(url)
            return FakeResponse('{"schema": "fleetcheck/allocations", "version": 1}\n')

        monkeypatch.setattr("core.config_manager.requests.get", fake_get)
        manager = ConfigManager(str(workspace))

        local = manager.resolve(URL)
        assert local.startswith(str(workspace / ".cache"))
        assert local.endswith("allocations.jsonl")
        assert manager.resolve(URL) == local
        assert calls == [URL]

    def test_stale_cache_survives_outage(self, workspace, monkeypatch):
        manager = ConfigManager(str(workspace), cache_max_age_hours=1)
        cached = manager.cache_path(URL)
        cached.parent.mkdir(parents=True)
        cached.write_text("old copy\n")
        old = time.time() - 2 * 3600
        os.utime(cached, (old, old))

        def failing_get(url, **kwargs):
            raise requests.ConnectionError("network down")

        monkeypatch.setattr("core.config_manager.requests.get", failing_get)
        assert manager.resolve(URL) == str(cached)
        assert cached.read_text() == "old copy\n"

    def test_no_cache_and_no_network(self, workspace, monkeypatch):
        monkeypatch.setattr("core.config_manager.requests.get", lambda url, **kwargs: FakeResponse("", 503))
        with pytest.raises(ConfigurationError, match="Cannot fetch"):
            ConfigManager(str(workspace)).resolve(URL)


class TestSimulationDocument:
    def test_sources_resolve_against_document(self, workspace):
        config_dir = workspace / "configs"
        write_document(config_dir / "sim.yaml", "simulation", {
            "policies": ["absence", "selector"],
            "seeds": [3, 4],
            "p0": 0.1,
            "t0_hours": 12,
            "workers": 2,
            "audit_log": "audit.jsonl",
            "sources": {"allocations": "../allocations.jsonl", "coverage": "/srv/coverage.jsonl"},
        })

        plan = ConfigManager(str(workspace)).load_simulation(str(config_dir / "sim.yaml"))
        assert plan.policies == [SimPolicy.ABSENCE, SimPolicy.SELECTOR]
        assert plan.seeds == [3, 4]
        assert plan.base.p0 == 0.1
        assert plan.base.t0_hours == 12.0
        assert plan.base.audit
        assert plan.workers == 2
        assert os.path.normpath(plan.sources["allocations"]) == str(workspace / "allocations.jsonl")
        assert plan.sources["coverage"] == "/srv/coverage.jsonl"
        assert plan.audit_path == str(config_dir / "audit.jsonl")

    def test_defaults(self, workspace):
        write_document(workspace / "sim.yaml", "simulation", {"sources": {"allocations": "a.jsonl"}})
        plan = ConfigManager(str(workspace)).load_simulation(str(workspace / "sim.yaml"))
        assert plan.policies == list(SimPolicy)
        assert plan.seeds == [0]
        assert plan.base.horizon_hours == 720.0
        assert plan.audit_path is None

    def test_allocations_are_required(self, workspace):
        write_document(workspace / "sim.yaml", "simulation", {"sources": {"coverage": "c.jsonl"}})
        with pytest.raises(ConfigurationError, match="allocations"):
            ConfigManager(str(workspace)).load_simulation(str(workspace / "sim.yaml"))

    @pytest.mark.parametrize("body", [
        {"policies": ["sometimes"]},
        {"p0": 2.0},
        {"seeds": []},
    ])
    def test_rejects_bad_settings(self, workspace, body):
        write_document(workspace / "sim.yaml", "simulation", {**body, "sources": {"allocations": "a.jsonl"}})
        with pytest.raises(ConfigurationError):
            ConfigManager(str(workspace)).load_simulation(str(workspace / "sim.yaml"))
