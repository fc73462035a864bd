"""Run artifacts: line-delimited trace records and companion tables.

Three streams per run:
  trace.jsonl     - compact per-interval record (metrics, schedule, labels, qos)
  records.jsonl   - everything needed to score a run offline, including
                    model outputs and completed-task response times
  decisions.jsonl - migration decisions as seen at decision time

All writers use sorted keys, fixed separators, and repr-exact floats, so a
run's artifacts are byte-stable under identical config and seed.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cluster import CompletedTask, IntervalRecord
from .errors import DataError

TRACE_NAME = "trace.jsonl"
RECORDS_NAME = "records.jsonl"
DECISIONS_NAME = "decisions.jsonl"
ATTENTION_NAME = "attention.tsv"


def dump_row(row: dict) -> str:
    try:
        return json.dumps(row, sort_keys=True, separators=(",", ":"),
                          allow_nan=False)
    except ValueError as exc:
        raise DataError(f"row is not JSON-serializable: {exc}") from None


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    text = "".join(dump_row(row) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_jsonl(path: str | Path) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"trace file not found: {path}") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: bad record ({exc})") from None
    return rows


def _matrix(a: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(a)]


def _int_matrix(a: np.ndarray) -> list[list[int]]:
    return [[int(round(v)) for v in row] for row in np.asarray(a)]


def trace_row(record: IntervalRecord, schedule: np.ndarray) -> dict:
    """Compact per-interval record."""
    return {
        "interval": record.interval,
        "raw_features": _matrix(record.raw),
        "schedule": _int_matrix(schedule),
        "labels": [int(v) for v in record.labels],
        "qos": {
            "energy_wh": float(record.energy_wh),
            "slo_violations": int(record.slo_violations),
            "migrations": int(record.migration_count),
        },
    }


def record_row(record: IntervalRecord, schedule: np.ndarray,
               detect: np.ndarray | None = None,
               classes: Sequence[int] | None = None) -> dict:
    """Full per-interval record for offline scoring."""
    return {
        "interval": record.interval,
        "raw_features": _matrix(record.raw),
        "schedule": _int_matrix(schedule),
        "labels": [int(v) for v in record.labels],
        "energy_wh": float(record.energy_wh),
        "migrations": int(record.migration_count),
        "migration_time_s": float(record.migration_time_s),
        "overdue_active": int(record.overdue_active),
        "completed": [
            {
                "id": t.id,
                "app_class": t.app_class,
                "response_time_s": float(t.response_time_s),
                "violated": bool(t.violated),
            }
            for t in record.completed
        ],
        "detect": None if detect is None else _matrix(detect),
        "classes": None if classes is None else [int(v) for v in classes],
    }


def interval_record_from_row(row: dict) -> IntervalRecord:
    """Rebuild the in-memory interval record from a full trace row."""
    try:
        completed = [
            CompletedTask(
                id=int(t["id"]), app_class=str(t["app_class"]),
                response_time_s=float(t["response_time_s"]),
                violated=bool(t["violated"]),
            )
            for t in row["completed"]
        ]
        return IntervalRecord(
            interval=int(row["interval"]),
            raw=np.asarray(row["raw_features"], dtype=np.float64),
            labels=np.asarray(row["labels"], dtype=int),
            energy_wh=float(row["energy_wh"]),
            completed=completed,
            migration_count=int(row["migrations"]),
            migration_time_s=float(row["migration_time_s"]),
            overdue_active=int(row["overdue_active"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed trace record: {exc}") from None


def write_attention_table(path: str | Path,
                          per_interval: Sequence[tuple[int, np.ndarray]]) -> None:
    """Per-window host attention scores as a tab-separated long table."""
    lines = ["interval\tsrc_host\tdst_host\tscore"]
    for interval, matrix in per_interval:
        arr = np.asarray(matrix)
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                lines.append(f"{interval}\t{i}\t{j}\t{float(arr[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
