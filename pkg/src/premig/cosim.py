"""Snapshot-and-replay co-simulation for scoring candidate schedules.

The co-simulator replays the real engine on a deep copy of the cluster, so
its score for a schedule equals the score recomputed from the record the
live step would produce with identical inputs, bit for bit.
"""

from __future__ import annotations

import copy
from typing import Sequence

from .cluster import Cluster, IntervalRecord
from .config import ExperimentConfig
from .errors import ParameterError


def qos_score(records: Sequence[IntervalRecord], cfg: ExperimentConfig) -> float:
    """QoS of a simulated window: -(w * energy_norm + (1 - w) * slo_fraction).

    Energy is normalized by the maximum the cluster could draw over the
    window. The SLO fraction counts completions that missed their deadline
    plus still-running tasks that are already past it; tasks with slack left
    at the end of the window are not charged.
    """
    if not records:
        raise ParameterError("qos_score needs at least one interval record")
    horizon = len(records)
    max_energy = sum(h.power_max for h in cfg.hosts) * horizon * cfg.interval_seconds / 3600.0
    energy = sum(r.energy_wh for r in records)
    energy_norm = energy / max_energy
    completed = sum(len(r.completed) for r in records)
    late = sum(r.slo_violations for r in records) + records[-1].overdue_active
    denom = completed + records[-1].overdue_active
    slo_fraction = late / denom if denom else 0.0
    w = cfg.qos_weight_w
    return -(w * energy_norm + (1.0 - w) * slo_fraction)


def cosimulate(snapshot: Cluster, schedule, horizon: int = 1) -> float:
    """Replay `horizon` intervals of the snapshot under `schedule` and score.

    The first interval applies the candidate schedule (migrations included);
    later intervals keep whatever placements remain, with no new arrivals.
    The snapshot is copied, never mutated, so several candidates can be
    scored from the same snapshot.
    """
    if horizon < 1:
        raise ParameterError("co-simulation horizon must be at least 1")
    sim = copy.deepcopy(snapshot)
    records = []
    current = schedule
    for _ in range(horizon):
        records.append(sim.step(current))
        current = sim.placement_matrix()
    return qos_score(records, sim.cfg)
