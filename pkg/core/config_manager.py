"""
Configuration Manager - Workspace layout and simulation settings
Resolves workspace sources, downloading remote ones into a local cache
"""

import hashlib
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Optional

import requests

from .errors import ConfigurationError, FleetCheckError
from .records import atomic_write, read_document
from .simulator import SimConfig, SimPolicy

logger = logging.getLogger(__name__)

WORKSPACE_FILE = "workspace.yaml"
DEFAULT_SEEDS = [0]


@dataclass
class WorkspaceLayout:
    """Where each dataset and document of a workspace lives"""
    root: Path
    samples: str = "samples.jsonl"
    results: str = "results.jsonl"
    criteria: str = "criteria.yaml"
    incidents: str = "incidents.jsonl"
    allocations: str = "allocations.jsonl"
    coverage: str = "coverage.jsonl"
    validation_log: str = "validation_log.jsonl"
    benchmark_times: str = "benchmark_times.yaml"
    statuses: str = "statuses.jsonl"
    series: str = "series.jsonl"
    topology: str = "topology.yaml"
    models: str = "models"
    reports: str = "reports"

    PATH_KEYS = (
        "samples", "results", "criteria", "incidents", "allocations", "coverage", "validation_log",
        "benchmark_times", "statuses", "series", "topology", "models", "reports",
    )

    def path(self, key: str) -> str:
        """Workspace-relative entries resolve against the root; URLs and absolute paths pass through"""
        value = getattr(self, key)
        if is_url(value) or os.path.isabs(value):
            return value
        return str(self.root / value)

    @property
    def model_path(self) -> str:
        return str(Path(self.path("models")) / "model.yaml")

    @property
    def cache_dir(self) -> Path:
        return self.root / ".cache"


@dataclass
class SimulationPlan:
    """Policies and seeds to sweep plus the shared settings and sources"""
    base: SimConfig
    policies: List[SimPolicy] = field(default_factory=lambda: list(SimPolicy))
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    sources: Dict[str, str] = field(default_factory=dict)
    workers: int = 1
    audit_path: Optional[str] = None


def is_url(value: str) -> bool:
    return str(value).startswith(("http://", "https://"))


class ConfigManager:
    def __init__(self, workspace: str = ".", cache_max_age_hours: float = 24.0):
        self.workspace = Path(workspace).resolve()
        self.cache_max_age = timedelta(hours=cache_max_age_hours)
        self.layout = self.load_layout()

    def load_layout(self) -> WorkspaceLayout:
        """Read workspace.yaml if present; every key is optional"""
        layout = WorkspaceLayout(self.workspace)
        path = self.workspace / WORKSPACE_FILE
        if not path.exists():
            logger.debug(f"🔍 No {WORKSPACE_FILE} in {self.workspace}, using the default layout")
            return layout

        document = read_document(path, "workspace")
        paths = document.get("paths") or {}
        if not isinstance(paths, dict):
            raise ConfigurationError(f"{path}: 'paths' must be a mapping")
        unknown = set(paths) - set(WorkspaceLayout.PATH_KEYS)
        if unknown:
            raise ConfigurationError(f"{path}: unknown workspace paths {sorted(unknown)}")
        for key, value in paths.items():
            setattr(layout, key, str(value))
        return layout

    # --- remote sources ---------------------------------------------------

    def cache_path(self, url: str) -> Path:
        digest = hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]
        name = url.rstrip("/").rsplit("/", 1)[-1] or "source"
        return self.layout.cache_dir / f"{digest}-{name}"

    def is_cache_valid(self, cache_path: Path) -> bool:
        if not cache_path.exists():
            return False
        cache_mtime = datetime.fromtimestamp(cache_path.stat().st_mtime)
        return datetime.now() - cache_mtime < self.cache_max_age

    def download(self, url: str, cache_path: Path) -> bool:
        logger.info(f"📥 Downloading {url}")
        try:
            response = requests.get(url, headers={"User-Agent": "fleetcheck/1.0"}, timeout=30)
            response.raise_for_status()
            if not response.text.strip():
                raise ValueError("empty response")
            atomic_write(cache_path, response.text)
            logger.info(f"✅ Cached {url}")
            return True
        except (requests.RequestException, ValueError) as e:
            logger.error(f"❌ Download failed: {e}")
            return False

    def resolve(self, source: str, force_update: bool = False) -> str:
        """Local path for a source, fetching URLs into the cache"""
        if not is_url(source):
            return source

        cache_path = self.cache_path(source)
        if force_update or not self.is_cache_valid(cache_path):
            if not self.download(source, cache_path):
                if cache_path.exists():
                    logger.warning(f"⚠️ Using stale cache for {source}")
                else:
                    raise ConfigurationError(f"Cannot fetch {source} and no cached copy exists")
        return str(cache_path)

    def source(self, key: str, override: Optional[str] = None) -> str:
        """Resolved path for a layout entry, or for an explicit override"""
        return self.resolve(override if override else self.layout.path(key))

    # --- simulation settings ----------------------------------------------

    def load_simulation(self, path: str) -> SimulationPlan:
        """Parse a simulation document; relative sources resolve against its directory"""
        local = self.resolve(path)
        document = read_document(local, "simulation")
        base_dir = Path(local).resolve().parent if not is_url(path) else self.workspace

        try:
            policies = [SimPolicy.parse(p) for p in document.get("policies", [p.value for p in SimPolicy])]
            seeds = [int(s) for s in document.get("seeds", DEFAULT_SEEDS)]
            base = SimConfig(
                horizon_hours=float(document.get("horizon_hours", 720.0)),
                repair_hours_no_validation=float(document.get("repair_hours_no_validation", 36.0)),
                repair_hours_with_validation=float(document.get("repair_hours_with_validation", 1.0)),
                p0=float(document.get("p0", 0.05)),
                t0_hours=None if document.get("t0_hours") is None else float(document["t0_hours"]),
                seed=seeds[0] if seeds else 0,
                cluster_size=None if document.get("cluster_size") is None else int(document["cluster_size"]),
                stressed_replay=bool(document.get("stressed_replay", True)),
                trace_origin_ts=None if document.get("trace_origin_ts") is None else int(document["trace_origin_ts"]),
                audit=bool(document.get("audit_log")),
                incident_source=str(document.get("incident_source", "auto")),
            )
        except (TypeError, ValueError, FleetCheckError) as e:
            raise ConfigurationError(f"{path}: {e}") from e

        if not policies or not seeds:
            raise ConfigurationError(f"{path}: policies and seeds must not be empty")

        sources = {}
        for key, value in (document.get("sources") or {}).items():
            value = str(value)
            if not is_url(value) and not os.path.isabs(value):
                value = str(base_dir / value)
            sources[key] = self.resolve(value)
        if "allocations" not in sources:
            raise ConfigurationError(f"{path}: sources.allocations is required")

        audit_path = document.get("audit_log")
        if audit_path and not os.path.isabs(str(audit_path)):
            audit_path = str(base_dir / str(audit_path))

        return SimulationPlan(base, policies, seeds, sources, int(document.get("workers", 1)), audit_path)
