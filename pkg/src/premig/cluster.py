"""Deterministic interval-driven cluster simulator.

Each interval advances the cluster by interval_seconds using a fixed subtick
grid (default 15 s). Hosts share compute equally among resident containers,
capped per task by the rate implied by its deadline; fault events degrade
capacity or bandwidth or leak RAM while active. Ground-truth fault labels are
emitted from observable conditions sustained for at least LABEL_SUSTAIN_S
within the interval, with priority cpu > ram > net on ties. Interval features
report each metric's sustained peak across subticks (see sustained_peak).

The engine consumes no randomness inside step(), so a deep copy replays
bit-identically; that property is what the co-simulator relies on.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .config import CPU_FAULT, ExperimentConfig, NET_FAULT, RAM_FAULT
from .errors import ConfigError, ScheduleError

LABEL_SUSTAIN_S = 60.0
RAM_LEAK_MB_PER_S = 1.0 / 3.0  # 1 MB every 3 s at severity 1.0
UTIL_THRESHOLD = 0.9
SUSTAIN_QUANTILE = 0.8


def sustained_peak(samples: np.ndarray) -> np.ndarray:
    """Per-host sustained-peak statistic over one interval's subticks: the
    level exceeded in at most 20% of subticks. Brief single-subtick spikes
    are filtered out while any condition lasting a meaningful fraction of
    the interval reports its plateau, which keeps interval features aligned
    with the sustained-condition label rule."""
    n_sub = samples.shape[1]
    k = max(0, int(np.ceil(SUSTAIN_QUANTILE * n_sub)) - 1)
    return np.sort(samples, axis=1)[:, k]


@dataclass
class Task:
    """One container. Progress is in compute units; deadline is seconds from
    the start of the arrival interval."""

    id: int
    app_class: str
    total_demand: float
    ram_footprint: float
    io_intensity: float
    arrival_interval: int
    deadline: float
    progress: float = 0.0
    host: int | None = None
    blocked_s: float = 0.0  # migration downtime still to serve

    def __post_init__(self):
        if self.total_demand <= 0 or self.deadline <= 0:
            raise ConfigError("task demand and deadline must be positive")
        if not 0.0 <= self.io_intensity <= 1.0:
            raise ConfigError("io_intensity must lie in [0, 1]")

    @property
    def remaining(self) -> float:
        return self.total_demand - self.progress

    def cpu_rate_cap(self, interval_seconds: float, headroom: float) -> float:
        """Max compute units per interval this container will draw.

        Derived from the rate needed to finish exactly at the deadline, with
        fixed headroom so an unshared task finishes early."""
        return headroom * self.total_demand * interval_seconds / self.deadline


@dataclass(frozen=True)
class CompletedTask:
    id: int
    app_class: str
    response_time_s: float
    violated: bool


@dataclass(frozen=True)
class FaultEvent:
    host: int
    start_interval: int
    duration_intervals: int
    fault_class: int  # CPU_FAULT / RAM_FAULT / NET_FAULT
    severity: float

    def __post_init__(self):
        if self.duration_intervals < 1:
            raise ConfigError("fault duration must be at least one interval")
        if not 0.0 < self.severity <= 1.0:
            raise ConfigError("fault severity must lie in (0, 1]")
        if self.fault_class not in (CPU_FAULT, RAM_FAULT, NET_FAULT):
            raise ConfigError(f"unknown fault class {self.fault_class}")

    def active(self, interval: int) -> bool:
        return self.start_interval <= interval < self.start_interval + self.duration_intervals


@dataclass(frozen=True)
class FaultPlan:
    events: tuple[FaultEvent, ...] = ()

    def validate(self, m: int) -> "FaultPlan":
        for ev in self.events:
            if not 0 <= ev.host < m:
                raise ConfigError(f"fault event targets host {ev.host} outside 0..{m - 1}")
        return self

    def active_events(self, host: int, interval: int, fault_class: int) -> list[FaultEvent]:
        return [
            ev for ev in self.events
            if ev.host == host and ev.fault_class == fault_class and ev.active(interval)
        ]


@dataclass
class IntervalRecord:
    """Everything observable about one executed interval."""

    interval: int
    raw: np.ndarray  # (m, n) pre-normalization features
    labels: np.ndarray  # (m,) int fault labels, 0 = none
    energy_wh: float
    completed: list[CompletedTask] = field(default_factory=list)
    migration_count: int = 0
    migration_time_s: float = 0.0
    overdue_active: int = 0  # still-running tasks already past deadline

    @property
    def slo_violations(self) -> int:
        return sum(1 for t in self.completed if t.violated)


def one_hot_schedule(placements, m: int) -> np.ndarray:
    mat = np.zeros((len(placements), m), dtype=np.float64)
    for row, host in enumerate(placements):
        mat[row, int(host)] = 1.0
    return mat


def validate_schedule(schedule: np.ndarray, p: int, m: int) -> np.ndarray:
    sched = np.asarray(schedule, dtype=np.float64)
    if sched.shape != (p, m):
        raise ScheduleError(f"schedule shape {sched.shape} does not match ({p}, {m})")
    if p and not np.all((sched == 0.0) | (sched == 1.0)):
        raise ScheduleError("schedule entries must be 0 or 1")
    if p and not np.all(sched.sum(axis=1) == 1.0):
        raise ScheduleError("each schedule row must place its task on exactly one host")
    return sched


class Cluster:
    """Cluster state plus the interval stepper.

    Mutable state: active tasks, per-host leaked RAM, interval index, RNG.
    snapshot() deep-copies all of it (RNG included) so replays are exact.
    """

    def __init__(self, cfg: ExperimentConfig, fault_plan: FaultPlan | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.hosts = cfg.hosts
        self.fault_plan = (fault_plan or FaultPlan()).validate(cfg.m)
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.tasks: list[Task] = []
        self.leaked_ram = np.zeros(cfg.m, dtype=np.float64)
        self.interval_index = 0
        self.next_task_id = 0

    # ------------------------------------------------------------------
    def admit(self, tasks: list[Task]) -> None:
        for t in tasks:
            self.tasks.append(t)
        self.next_task_id = max([self.next_task_id] + [t.id + 1 for t in self.tasks])

    def active_tasks(self) -> list[Task]:
        return sorted(self.tasks, key=lambda t: t.id)

    def current_placements(self) -> list[int | None]:
        return [t.host for t in self.active_tasks()]

    def placement_matrix(self) -> np.ndarray:
        """One-hot matrix of current placements (all tasks must be placed)."""
        tasks = self.active_tasks()
        return one_hot_schedule([t.host for t in tasks], self.cfg.m)

    def snapshot(self) -> "Cluster":
        return copy.deepcopy(self)

    # ------------------------------------------------------------------
    def step(self, schedule: np.ndarray) -> IntervalRecord:
        """Execute one interval under the given placement matrix."""
        cfg = self.cfg
        m = cfg.m
        tasks = self.active_tasks()
        sched = validate_schedule(schedule, len(tasks), m)
        interval = self.interval_index
        dt = cfg.subtick_seconds
        dtf = 1.0 / cfg.subticks

        migration_count = 0
        migration_time = 0.0
        migration_tx = np.zeros(m)
        migration_rx = np.zeros(m)
        for row, task in enumerate(tasks):
            target = int(np.argmax(sched[row]))
            if task.host is None:
                task.host = target
            elif task.host != target:
                src, dst = task.host, target
                bw = min(self.hosts[src].net_bandwidth, self.hosts[dst].net_bandwidth)
                downtime = task.ram_footprint / bw
                task.blocked_s += downtime
                task.host = dst
                migration_count += 1
                migration_time += downtime
                migration_tx[src] += task.ram_footprint
                migration_rx[dst] += task.ram_footprint

        # hosts with no active RAM fault recover their leaked memory
        for h in range(m):
            if not self.fault_plan.active_events(h, interval, RAM_FAULT):
                self.leaked_ram[h] = 0.0

        eff_cpu = np.empty(m)
        eff_net = np.empty(m)
        ram_leak_rate = np.zeros(m)
        ram_fault_on = np.zeros(m, dtype=bool)
        for h in range(m):
            cap = self.hosts[h].cpu_capacity
            for ev in self.fault_plan.active_events(h, interval, CPU_FAULT):
                cap *= 1.0 - ev.severity
            eff_cpu[h] = cap
            bw = self.hosts[h].net_bandwidth
            for ev in self.fault_plan.active_events(h, interval, NET_FAULT):
                bw *= 1.0 - ev.severity
            eff_net[h] = bw
            for ev in self.fault_plan.active_events(h, interval, RAM_FAULT):
                ram_leak_rate[h] += ev.severity * RAM_LEAK_MB_PER_S
                ram_fault_on[h] = True

        blocked_until = {t.id: t.blocked_s for t in tasks}
        by_host: list[list[Task]] = [[] for _ in range(m)]
        for t in tasks:
            by_host[t.host].append(t)

        headroom = cfg.rate_headroom
        caps = {t.id: t.cpu_rate_cap(cfg.interval_seconds, headroom) for t in tasks}

        n_sub = cfg.subticks
        cpu_rate = np.zeros((m, n_sub))  # compute units per interval
        power_w = np.zeros((m, n_sub))
        ram_mb = np.zeros((m, n_sub))
        disk_read_rate = np.zeros((m, n_sub))  # MB/s per direction
        disk_write_rate = np.zeros((m, n_sub))
        net_tx_rate = np.zeros((m, n_sub))
        net_rx_rate = np.zeros((m, n_sub))
        containers = np.zeros((m, n_sub))
        cond = np.zeros((3, m, cfg.subticks), dtype=bool)  # cpu, ram, net
        completed: list[CompletedTask] = []

        for s in range(cfg.subticks):
            t0 = s * dt
            t1 = t0 + dt
            for h in range(m):
                residents = [t for t in by_host[h] if t.remaining > 0]
                containers[h, s] = len(residents)
                cap_sub = eff_cpu[h] * dtf
                used = 0.0
                io_weight = 0.0
                if residents:
                    share = cap_sub / len(residents)
                    for t in residents:
                        start = max(t0, blocked_until[t.id])
                        exec_s = max(0.0, t1 - start)
                        if exec_s <= 0.0:
                            continue
                        rate = min(share, caps[t.id] * dtf)
                        if rate <= 0.0:
                            continue
                        rate_per_s = rate / dt
                        gain = rate_per_s * exec_s
                        if gain >= t.remaining:
                            done_at = start + t.remaining / rate_per_s
                            used += t.remaining
                            io_weight += t.io_intensity * (done_at - start) / dt
                            t.progress = t.total_demand
                            response = (interval - t.arrival_interval) * cfg.interval_seconds + done_at
                            completed.append(CompletedTask(
                                id=t.id, app_class=t.app_class,
                                response_time_s=response,
                                violated=response > t.deadline,
                            ))
                        else:
                            used += gain
                            io_weight += t.io_intensity * exec_s / dt
                            t.progress += gain
                # all resident footprints count, including containers that
                # completed earlier in the interval; reaping happens at the end
                ram_used = sum(t.ram_footprint for t in by_host[h])
                self.leaked_ram[h] += ram_leak_rate[h] * dt
                ram_used += self.leaked_ram[h]

                cpu_rate[h, s] = used / dtf
                util_nom = used / (self.hosts[h].cpu_capacity * dtf)
                spec = self.hosts[h]
                power_w[h, s] = spec.power_idle + (spec.power_max - spec.power_idle) * util_nom
                ram_mb[h, s] = ram_used

                disk_demand = io_weight * cfg.disk_io_rate
                disk_thr = min(disk_demand, spec.disk_bandwidth)
                disk_read_rate[h, s] = 0.5 * disk_thr
                disk_write_rate[h, s] = 0.5 * disk_thr
                net_demand = io_weight * cfg.net_io_rate
                net_thr = min(net_demand, eff_net[h])
                net_tx_rate[h, s] = 0.5 * net_thr
                net_rx_rate[h, s] = 0.5 * net_thr

                if cap_sub <= 0.0:
                    cpu_hot = any(
                        t.remaining > 0 and blocked_until[t.id] < t1 for t in residents
                    )
                else:
                    cpu_hot = used / cap_sub > UTIL_THRESHOLD
                ram_hot = ram_fault_on[h] or ram_used / spec.ram_capacity > UTIL_THRESHOLD
                if eff_net[h] <= 0.0:
                    net_hot = net_demand > 0.0
                else:
                    net_hot = net_demand / eff_net[h] > UTIL_THRESHOLD
                cond[0, h, s] = cpu_hot
                cond[1, h, s] = ram_hot
                cond[2, h, s] = net_hot

        labels = self._labels_from_conditions(cond)

        done_ids = {c.id for c in completed}
        self.tasks = [t for t in self.tasks if t.id not in done_ids]
        for t in self.tasks:
            t.blocked_s = max(0.0, t.blocked_s - cfg.interval_seconds)

        end_abs = (interval + 1) * cfg.interval_seconds
        overdue = sum(
            1 for t in self.tasks
            if end_abs - t.arrival_interval * cfg.interval_seconds > t.deadline
        )

        power_avg = power_w.mean(axis=1)
        energy_wh = float(np.sum(power_avg) * cfg.interval_seconds / 3600.0)
        # migration traffic enters the net features as an interval-spread rate
        net_tx_rate += (migration_tx / cfg.interval_seconds)[:, None]
        net_rx_rate += (migration_rx / cfg.interval_seconds)[:, None]
        raw = np.column_stack([
            sustained_peak(cpu_rate),
            sustained_peak(ram_mb),
            sustained_peak(disk_read_rate),
            sustained_peak(disk_write_rate),
            sustained_peak(net_tx_rate),
            sustained_peak(net_rx_rate),
            sustained_peak(containers),
            sustained_peak(power_w),
        ])

        self.interval_index += 1
        return IntervalRecord(
            interval=interval,
            raw=raw,
            labels=labels,
            energy_wh=energy_wh,
            completed=completed,
            migration_count=migration_count,
            migration_time_s=migration_time,
            overdue_active=overdue,
        )

    def _labels_from_conditions(self, cond: np.ndarray) -> np.ndarray:
        """Label rule: a class fires when its condition holds for a run of at
        least LABEL_SUSTAIN_S; ties resolve cpu > ram > net."""
        cfg = self.cfg
        need = int(np.ceil(LABEL_SUSTAIN_S / cfg.subtick_seconds))
        labels = np.zeros(cfg.m, dtype=np.int64)
        order = ((0, CPU_FAULT), (1, RAM_FAULT), (2, NET_FAULT))
        for h in range(cfg.m):
            for row, label in order:
                if _longest_run(cond[row, h]) >= need:
                    labels[h] = label
                    break
        return labels


def _longest_run(flags: np.ndarray) -> int:
    best = run = 0
    for f in flags:
        run = run + 1 if f else 0
        best = max(best, run)
    return best
