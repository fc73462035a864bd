"""Rendering for the report path: a delimited per-interval table plus a
set of figures summarizing a finished run. Only the CLI imports this; the
library core never touches matplotlib."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .config import APP_CLASSES, ExperimentConfig  # noqa: E402
from .errors import DataError  # noqa: E402

TABLE_NAME = "intervals.csv"
_PNG_META = {"Software": None}  # keep the files byte-stable across installs


def _columns(record_rows: list[dict], cfg: ExperimentConfig) -> dict:
    if not record_rows:
        raise DataError("no interval records to render")
    caps = np.array([h.cpu_capacity for h in cfg.hosts], dtype=np.float64)
    powers = []
    utils = []
    for row in record_rows:
        raw = np.asarray(row["raw_features"], dtype=np.float64)
        utils.append(raw[:, 0] / caps)
        powers.append(raw[:, 7].mean())
    completed = [len(row["completed"]) for row in record_rows]
    violations = [sum(1 for t in row["completed"] if t["violated"])
                  for row in record_rows]
    responses = [
        float(np.mean([t["response_time_s"] for t in row["completed"]]))
        if row["completed"] else None
        for row in record_rows
    ]
    return {
        "interval": [row["interval"] for row in record_rows],
        "energy_wh": [row["energy_wh"] for row in record_rows],
        "completed": completed,
        "violations": violations,
        "overdue_active": [row["overdue_active"] for row in record_rows],
        "migrations": [row["migrations"] for row in record_rows],
        "migration_time_s": [row["migration_time_s"] for row in record_rows],
        "mean_cpu_util": [float(u.mean()) for u in utils],
        "mean_power_w": powers,
        "mean_response_s": responses,
        "faulty_hosts": [int(np.sum(np.asarray(row["labels"]) > 0))
                         for row in record_rows],
        "util_matrix": np.stack(utils, axis=1),  # hosts x intervals
    }


def write_interval_table(path: str | Path, record_rows: list[dict],
                         cfg: ExperimentConfig) -> None:
    cols = _columns(record_rows, cfg)
    names = ["interval", "energy_wh", "completed", "violations",
             "overdue_active", "migrations", "migration_time_s",
             "mean_cpu_util", "mean_power_w", "mean_response_s",
             "faulty_hosts"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(len(cols["interval"])):
            writer.writerow([
                "" if cols[name][i] is None else repr(cols[name][i])
                if isinstance(cols[name][i], float) else cols[name][i]
                for name in names
            ])


def render_figures(out_dir: str | Path, record_rows: list[dict],
                   cfg: ExperimentConfig) -> list[str]:
    """Write the summary figures; returns the created file names."""
    out_dir = Path(out_dir)
    cols = _columns(record_rows, cfg)
    x = cols["interval"]
    created = []

    def save(fig, name):
        fig.tight_layout()
        fig.savefig(out_dir / name, dpi=110, metadata=_PNG_META)
        plt.close(fig)
        created.append(name)

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(x, cols["energy_wh"], lw=1.2, color="#b5651d")
    ax.set_xlabel("interval")
    ax.set_ylabel("energy (Wh)")
    ax.set_title("Cluster energy per interval")
    save(fig, "energy.png")

    fig, ax = plt.subplots(figsize=(7, 3))
    xs = [xi for xi, r in zip(x, cols["mean_response_s"]) if r is not None]
    ys = [r for r in cols["mean_response_s"] if r is not None]
    ax.plot(xs, ys, lw=1.0, color="#2a6f97")
    ax.set_xlabel("interval")
    ax.set_ylabel("mean response (s)")
    ax.set_title("Completed-task response time")
    save(fig, "response_time.png")

    fig, ax = plt.subplots(figsize=(7, 3.4))
    im = ax.imshow(cols["util_matrix"], aspect="auto", origin="lower",
                   cmap="magma", vmin=0.0, vmax=1.0,
                   extent=(min(x), max(x), -0.5, cfg.m - 0.5))
    ax.set_xlabel("interval")
    ax.set_ylabel("host")
    ax.set_title("CPU utilization")
    fig.colorbar(im, ax=ax, label="fraction of capacity")
    save(fig, "utilization.png")

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.bar(x, cols["migrations"], width=1.0, color="#4a7c59")
    ax.set_xlabel("interval")
    ax.set_ylabel("migrations")
    ax.set_title("Migrations per interval")
    save(fig, "migrations.png")

    per_class = {c: [0, 0] for c in APP_CLASSES}  # violated, completed
    for row in record_rows:
        for t in row["completed"]:
            bucket = per_class.setdefault(t["app_class"], [0, 0])
            bucket[1] += 1
            if t["violated"]:
                bucket[0] += 1
    labels = sorted(per_class)
    fracs = [per_class[c][0] / per_class[c][1] if per_class[c][1] else 0.0
             for c in labels]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(labels, fracs, color="#9b2226")
    ax.set_xlabel("application class")
    ax.set_ylabel("violation fraction")
    ax.set_title("Deadline violations by class")
    ax.set_ylim(0, max(0.05, max(fracs) * 1.25))
    save(fig, "slo_by_class.png")

    return created
