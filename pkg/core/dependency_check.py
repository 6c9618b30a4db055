"""
Dependency Checker - Python packages and optional benchmark runners
Verifies that the numeric stack imports and reports which scan runners are on PATH
"""

import importlib.util
import logging
import shutil
from typing import Dict, List, Tuple

logger = logging.getLogger(__name__)


class DependencyChecker:
    def __init__(self):
        # Required dependencies (import name -> description)
        self.required_packages = {
            'numpy': 'Numeric arrays',
            'yaml': 'PyYAML documents',
            'requests': 'Remote workspace sources',
            'sklearn': 'scikit-learn k-means baseline',
        }

        # Optional dependencies that consume emitted scan schedules
        self.optional_tools = {
            'ib_write_bw': 'InfiniBand bandwidth benchmark',
            'all_reduce_perf': 'NCCL all-reduce benchmark',
        }

    def check_package_exists(self, package: str) -> bool:
        return importlib.util.find_spec(package) is not None

    def check_command_exists(self, command: str) -> bool:
        return shutil.which(command) is not None

    def check_dependencies(self) -> Tuple[Dict[str, bool], Dict[str, bool]]:
        """Check if required packages and optional tools are available"""
        logger.debug("🔍 Checking dependencies...")
        required_status = {p: self.check_package_exists(p) for p in self.required_packages}
        optional_status = {t: self.check_command_exists(t) for t in self.optional_tools}
        return required_status, optional_status

    def get_missing_dependencies(self, status_dict: Dict[str, bool]) -> List[str]:
        return [name for name, exists in status_dict.items() if not exists]

    def report_lines(self, required_status: Dict[str, bool], optional_status: Dict[str, bool]) -> List[str]:
        lines = ["🔍 Checking dependencies..."]
        for package, exists in required_status.items():
            lines.append(f"  {'✅' if exists else '❌'} {package}: {self.required_packages[package]}")
        for tool, exists in optional_status.items():
            lines.append(f"  {'✅' if exists else '⚠️'} {tool}: {self.optional_tools[tool]}")
        return lines
