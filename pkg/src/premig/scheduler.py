"""Baseline placement policy.

Running tasks stay where they are; each unplaced task goes to the host with
the lowest projected compute load, ties to the lowest index. Deterministic
by construction so the preemptive path can be compared against it
byte-for-byte.
"""

from __future__ import annotations

import numpy as np

from .cluster import Cluster, Task, one_hot_schedule
from .config import ExperimentConfig


def projected_load(tasks: list[Task], placements: list[int | None],
                   cfg: ExperimentConfig) -> np.ndarray:
    """Per-host compute pressure: sum of capped per-interval demand over
    assigned tasks, as a fraction of host capacity."""
    load = np.zeros(cfg.m, dtype=np.float64)
    for task, host in zip(tasks, placements):
        if host is None:
            continue
        cap = cfg.hosts[host].cpu_capacity  # compute units per interval
        want = min(task.cpu_rate_cap(cfg.interval_seconds, cfg.rate_headroom), cap)
        load[host] += want / cap
    return load


def baseline_placements(tasks: list[Task], cfg: ExperimentConfig) -> list[int]:
    """Fill in hosts for any unplaced tasks, least-loaded first."""
    placements: list[int | None] = [t.host for t in tasks]
    load = projected_load(tasks, placements, cfg)
    for idx, task in enumerate(tasks):
        if placements[idx] is not None:
            continue
        host = int(np.argmin(load))  # argmin takes the lowest index on ties
        placements[idx] = host
        cap = cfg.hosts[host].cpu_capacity  # compute units per interval
        want = min(task.cpu_rate_cap(cfg.interval_seconds, cfg.rate_headroom), cap)
        load[host] += want / cap
    return placements  # type: ignore[return-value]


def baseline_schedule(cluster: Cluster) -> np.ndarray:
    """One-hot schedule for the cluster's current task set."""
    tasks = cluster.active_tasks()
    placements = baseline_placements(tasks, cluster.cfg)
    return one_hot_schedule(placements, cluster.cfg.m)
