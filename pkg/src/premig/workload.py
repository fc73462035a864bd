"""Random workload and fault-plan generation.

All randomness flows through the caller's Generator, so a fixed seed fixes
the whole run. Draw order inside each task is part of the determinism
contract: class, demand, ram, io, slack.
"""

from __future__ import annotations

import numpy as np

from .cluster import FaultEvent, FaultPlan, Task
from .config import APP_CLASSES, CPU_FAULT, ExperimentConfig, NET_FAULT, RAM_FAULT
from .errors import ParameterError


def generate_workloads(
    rng: np.random.Generator,
    lam: float,
    cfg: ExperimentConfig,
    arrival_interval: int,
    id_start: int,
) -> list[Task]:
    """Sample Poisson(lam) new tasks with per-class parameter distributions."""
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    count = int(rng.poisson(lam))
    tasks = []
    for i in range(count):
        cls = APP_CLASSES[int(rng.integers(0, len(APP_CLASSES)))]
        profile = cfg.workloads[cls]
        demand = float(rng.uniform(*profile.demand))
        ram = float(rng.uniform(*profile.ram))
        io = float(rng.uniform(*profile.io))
        slack = float(rng.uniform(*profile.slack))
        deadline = demand / cfg.cpu_reference * cfg.interval_seconds * slack
        tasks.append(Task(
            id=id_start + i,
            app_class=cls,
            total_demand=demand,
            ram_footprint=ram,
            io_intensity=io,
            arrival_interval=arrival_interval,
            deadline=deadline,
        ))
    return tasks


_SEVERITY_KEY = {CPU_FAULT: "cpu_severity", RAM_FAULT: "ram_severity", NET_FAULT: "net_severity"}


def generate_fault_plan(rng: np.random.Generator, cfg: ExperimentConfig, length: int) -> FaultPlan:
    """Sample a ground-truth fault plan covering `length` intervals."""
    if length < 0:
        raise ParameterError("fault plan length must be non-negative")
    rates = cfg.faults
    weights = np.asarray(rates.class_weights, dtype=np.float64)
    if weights.shape != (3,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ParameterError(f"fault class weights must be 3 non-negative values, got {rates.class_weights}")
    weights = weights / weights.sum()
    events = []
    for interval in range(length):
        for _ in range(int(rng.poisson(rates.rate))):
            host = int(rng.integers(0, cfg.m))
            fault_class = (CPU_FAULT, RAM_FAULT, NET_FAULT)[int(rng.choice(3, p=weights))]
            duration = int(rng.integers(rates.duration[0], rates.duration[1] + 1))
            lo, hi = getattr(rates, _SEVERITY_KEY[fault_class])
            severity = float(rng.uniform(lo, hi))
            events.append(FaultEvent(
                host=host,
                start_interval=interval,
                duration_intervals=duration,
                fault_class=fault_class,
                severity=severity,
            ))
    return FaultPlan(events=tuple(events)).validate(cfg.m)
