"""Shared helpers for scenario-level tests."""

import dataclasses
import itertools
import tempfile
from pathlib import Path

import pytest

from ced.harness.runtime import Cluster
from ced.harness.scenario import QuerySpec, ScenarioConfig
from ced.harness.workload import WorkloadConfig

Q1_SQL = "SELECT t1 FROM dev WHERE t1='v999'"
Q2_SQL = "SELECT t3 FROM dev WHERE t3=497.44467"
Q3_SQL = "SELECT t1, t3 FROM dev"
Q4_SQL = "SELECT count(t1) FROM dev GROUP BY 5m"
Q5_SQL = "SELECT max_value(t3) FROM dev GROUP BY 5m"

TABLE_II = {"Q1": Q1_SQL, "Q2": Q2_SQL, "Q3": Q3_SQL, "Q4": Q4_SQL, "Q5": Q5_SQL}

_counter = itertools.count()


def small_workload(total_rows=6000, chunk_rows=1000, sensors=3, interval_ms=1000, seed=0):
    return WorkloadConfig(
        sensor_count=sensors,
        sampling_interval_ms=interval_ms,
        total_rows=total_rows,
        chunk_target_rows=chunk_rows,
        seed=seed,
    )


def make_scenario(sql="SELECT t1 FROM dev WHERE t1='v999'", name="Q", **kw):
    defaults = dict(
        name=f"test-{next(_counter)}",
        mode="collaborative",
        queries=(QuerySpec(name, sql),),
        workload=small_workload(),
        warm_series=("t1", "t3"),
        monitor_enabled=False,
    )
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def make_cluster(scenario, tmp_path=None) -> Cluster:
    workdir = Path(tmp_path) if tmp_path else Path(tempfile.mkdtemp(prefix="ced-test-"))
    return Cluster(scenario, workdir / f"c{next(_counter)}")


def run(scenario, tmp_path=None):
    cluster = make_cluster(scenario, tmp_path)
    report = cluster.run()
    return cluster, report


def edge_baseline_checksum(sql, workload, tmp_path=None, name="Q"):
    scenario = make_scenario(sql, name=name, mode="edge_only", workload=workload, warm_series=())
    _, report = run(scenario, tmp_path)
    return report.queries[0].checksum
