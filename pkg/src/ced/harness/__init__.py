"""Workload generation, scenario execution, metrics, and the ced CLI."""

from .workload import WorkloadConfig, generate
from .scenario import CostModel, QuerySpec, ScenarioConfig
from .metrics import MetricsReport, emit
from .runtime import Cluster

__all__ = [
    "WorkloadConfig",
    "generate",
    "CostModel",
    "QuerySpec",
    "ScenarioConfig",
    "MetricsReport",
    "emit",
    "Cluster",
]
