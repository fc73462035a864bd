"""Control loops tying the cluster, the models, and the replay simulator
together: plain simulation, dataset collection, online adversarial
training, and the closed preemptive-migration loop.

Random streams are split once per run (workload arrivals, fault plan,
model init), so arrivals and faults are identical across policies under
the same seed and traces stay byte-comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad
from .checkpoint import carry_for
from .cluster import Cluster, IntervalRecord
from .config import ExperimentConfig
from .cosim import cosimulate
from .encoder import FaultEncoder, migration_edges
from .errors import DataError
from .gan import (DecisionRecord, GanStepStats, MigrationGenerator,
                  ScheduleDiscriminator, compose_schedule, gan_training_step,
                  select_schedule)
from .metrics import (RunReport, detection_metrics, improvement_ratio,
                      qos_summary, ranking_metrics)
from .prototypes import PrototypeSet
from .scheduler import baseline_schedule
from .trace import interval_record_from_row, record_row, trace_row
from .training import TrainRecord, detection_flags
from .window import WindowBuffer
from .workload import generate_fault_plan, generate_workloads


def run_streams(cfg: ExperimentConfig) -> dict[str, np.random.Generator]:
    """Independent per-purpose generators derived from the run seed."""
    children = np.random.SeedSequence(cfg.seed).spawn(3)
    return {
        "workload": np.random.default_rng(children[0]),
        "faults": np.random.default_rng(children[1]),
        "model": np.random.default_rng(children[2]),
    }


@dataclass
class PipelineModels:
    """Everything the preemptive path needs at decision time."""

    encoder: FaultEncoder
    prototypes: PrototypeSet
    generator: MigrationGenerator | None = None
    discriminator: ScheduleDiscriminator | None = None


@dataclass
class RunOutputs:
    records: list[IntervalRecord] = field(default_factory=list)
    trace_rows: list[dict] = field(default_factory=list)
    record_rows: list[dict] = field(default_factory=list)
    decisions: list[DecisionRecord] = field(default_factory=list)
    attention: list[tuple[int, np.ndarray]] = field(default_factory=list)
    gan_stats: list[GanStepStats] = field(default_factory=list)
    model_seconds: float = 0.0
    scheduler_seconds: float = 0.0


def run_loop(cfg: ExperimentConfig, intervals: int,
             models: PipelineModels | None = None, *,
             execute_selected: bool = True,
             online_gan_train: bool = False,
             measure_sim: bool = False,
             horizon: int = 1) -> RunOutputs:
    """Drive the cluster for a fixed number of intervals.

    Without models this is the plain baseline. With models, each interval
    past the warmup window runs fault detection; when a fault is predicted
    and a generator is present, a replacement schedule is proposed and the
    critic picks between it and the incumbent. During online adversarial
    training the incumbent is always the one executed, so the training
    stream stays on the baseline's state distribution; replay scores from
    the snapshot simulator supervise the critic."""
    streams = run_streams(cfg)
    plan = generate_fault_plan(streams["faults"], cfg, intervals + horizon)
    cluster = Cluster(cfg, plan)
    buffer = WindowBuffer(cfg)
    out = RunOutputs()
    train_cfg = cfg.training

    carry = None
    if models is not None:
        carry = carry_for(models.encoder, cfg.m)
    edges: list[tuple[int, int]] = []

    for t in range(intervals):
        arrivals = generate_workloads(streams["workload"], cfg.lam, cfg,
                                      arrival_interval=t,
                                      id_start=cluster.next_task_id)
        cluster.admit(arrivals)

        t0 = time.perf_counter()
        incumbent = baseline_schedule(cluster)
        out.scheduler_seconds += time.perf_counter() - t0

        chosen = incumbent
        detect = None
        classes = None
        decision = None

        if models is not None and buffer.full:
            t0 = time.perf_counter()
            with no_grad():
                enc = models.encoder.forward(buffer.window(), incumbent,
                                             carry, edges=edges)
            carry = enc.carry
            detect = np.array(enc.detect.data, copy=True)
            flags = detection_flags(detect)
            classes = [
                models.prototypes.classify(enc.embed.data[i]) if flags[i] else 0
                for i in range(cfg.m)
            ]
            out.attention.append((t, enc.attention))
            fault_predicted = bool(enc.fault_mask.any())
            has_tasks = incumbent.shape[0] > 0

            if (models.generator is not None and models.discriminator is not None
                    and fault_predicted and has_tasks):
                with no_grad():
                    scores, _ = models.generator.forward(
                        incumbent, Tensor(enc.fault_embedding.data))
                    proposal = compose_schedule(scores.data, incumbent)
                    d_out = models.discriminator.forward(incumbent, scores)
                d_values = np.array(d_out.data, copy=True).reshape(-1)
                selected, chose_new = select_schedule(incumbent, proposal, d_values)
                moved = int(np.sum(np.argmax(proposal, axis=1)
                                   != np.argmax(incumbent, axis=1)))
                decision = DecisionRecord(
                    interval=t, fault_predicted=True,
                    d=(float(d_values[0]), float(d_values[1])),
                    chose_new=chose_new, migrations=moved)

                if online_gan_train or measure_sim:
                    snap = cluster.snapshot()
                    decision.sim_current = cosimulate(snap, incumbent, horizon)
                    decision.sim_proposed = cosimulate(snap, proposal, horizon)
                if online_gan_train:
                    out.gan_stats.append(gan_training_step(
                        models.generator, models.discriminator, incumbent,
                        enc.fault_embedding.data,
                        decision.sim_current, decision.sim_proposed, train_cfg))
                if execute_selected and not online_gan_train:
                    chosen = selected
            else:
                decision = DecisionRecord(interval=t,
                                          fault_predicted=fault_predicted,
                                          d=None, chose_new=False)
            out.model_seconds += time.perf_counter() - t0

        placements_before = cluster.current_placements()
        record = cluster.step(chosen)
        edges = migration_edges(placements_before, chosen)
        buffer.push_raw(record.raw)

        out.records.append(record)
        out.trace_rows.append(trace_row(record, chosen))
        out.record_rows.append(record_row(record, chosen, detect, classes))
        if decision is not None:
            out.decisions.append(decision)

    if models is not None:
        models.encoder.carry = carry
    return out


# -- dataset collection ------------------------------------------------


def windows_from_raw(raw_rows: list[np.ndarray], schedules: list[np.ndarray],
                     labels: list[np.ndarray], cfg: ExperimentConfig
                     ) -> list[TrainRecord]:
    """Sliding normalized windows over a chronological raw-metric stream.

    Record t covers intervals [t-k+1 .. t] and carries interval t's labels
    and schedule, so the first k-1 intervals only prime the window."""
    if not (len(raw_rows) == len(schedules) == len(labels)):
        raise DataError("raw rows, schedules, and labels must align")
    buffer = WindowBuffer(cfg)
    records = []
    for raw, sched, lab in zip(raw_rows, schedules, labels):
        buffer.push_raw(raw)
        if buffer.full:
            records.append(TrainRecord(
                window=buffer.window(),
                schedule=np.asarray(sched, dtype=np.float64),
                labels=np.asarray(lab, dtype=int),
            ))
    return records


def collect_dataset(cfg: ExperimentConfig, n_records: int
                    ) -> tuple[list[TrainRecord], RunOutputs]:
    """Baseline run long enough to yield exactly n_records full windows."""
    intervals = n_records + cfg.k - 1
    outputs = run_loop(cfg, intervals, models=None)
    schedules = []
    for row in outputs.trace_rows:
        placed = np.asarray(row["schedule"], dtype=np.float64)
        schedules.append(placed.reshape(-1, cfg.m) if placed.size
                         else np.zeros((0, cfg.m), dtype=np.float64))
    records = windows_from_raw(
        [r.raw for r in outputs.records],
        schedules,
        [r.labels for r in outputs.records],
        cfg,
    )
    if len(records) != n_records:
        raise DataError(
            f"expected {n_records} dataset records, built {len(records)}")
    return records, outputs


def dataset_row(index: int, record: TrainRecord) -> dict:
    return {
        "index": index,
        "window": [[[float(v) for v in feat] for feat in host_step]
                   for host_step in record.window],
        "schedule": [[int(round(v)) for v in row] for row in record.schedule],
        "labels": [int(v) for v in record.labels],
    }


def dataset_from_rows(rows: list[dict]) -> list[TrainRecord]:
    records = []
    for row in rows:
        try:
            window = np.asarray(row["window"], dtype=np.float32)
            schedule = np.asarray(row["schedule"], dtype=np.float64)
            if schedule.size == 0:
                # JSON keeps no column count for an empty matrix; restore the
                # host axis so downstream shape checks hold.
                schedule = schedule.reshape(0, window.shape[1])
            records.append(TrainRecord(
                window=window,
                schedule=schedule,
                labels=np.asarray(row["labels"], dtype=int),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed dataset record: {exc}") from None
    return records


# -- reporting -----------------------------------------------------------


def report_from_artifacts(record_rows: list[dict], decision_rows: list[dict],
                          cfg: ExperimentConfig,
                          model_seconds: float | None = None,
                          scheduler_seconds: float | None = None) -> RunReport:
    """Score a finished run from its trace artifacts alone."""
    if not record_rows:
        raise DataError("no interval records to score")
    records = [interval_record_from_row(row) for row in record_rows]
    decisions = [DecisionRecord.from_dict(row) for row in decision_rows]

    detection = None
    hitrate = ndcg = None
    scored = [row for row in record_rows if row.get("detect") is not None]
    notes = []
    if scored:
        predicted = []
        actual = []
        scores = []
        truths = []
        for row in scored:
            det = np.asarray(row["detect"], dtype=np.float64)
            lab = np.asarray(row["labels"], dtype=int)
            predicted.append(bool(np.any(detection_flags(det))))
            actual.append(bool(np.any(lab > 0)))
            scores.append(det[:, 1])
            truths.append(lab > 0)
        detection = detection_metrics(predicted, actual)
        hitrate, ndcg = ranking_metrics(scores, truths)
    else:
        notes.append("no model outputs in trace; detection metrics skipped")

    overhead = None
    if model_seconds is not None and scheduler_seconds and scheduler_seconds > 0:
        overhead = model_seconds / scheduler_seconds

    return RunReport(
        intervals=len(records),
        detection=detection,
        hitrate=hitrate,
        ndcg=ndcg,
        improvement=improvement_ratio(decisions),
        qos=qos_summary(records, cfg),
        overhead_ratio=overhead,
        notes=notes,
    )


def report_from_outputs(outputs: RunOutputs, cfg: ExperimentConfig) -> RunReport:
    return report_from_artifacts(
        outputs.record_rows,
        [d.to_dict() for d in outputs.decisions],
        cfg,
    )
