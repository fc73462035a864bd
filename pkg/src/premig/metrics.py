"""Evaluation metrics: detection quality, fault ranking, migration decision
quality, and end-to-end QoS summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import IntervalRecord
from .config import ExperimentConfig
from .cosim import qos_score
from .errors import DataError, ParameterError
from .gan import DecisionRecord

RANK_CUTOFF = 100


@dataclass
class DetectionMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
        }


def detection_metrics(predicted: Sequence[bool], actual: Sequence[bool]) -> DetectionMetrics:
    """Binary detection scores; any zero-denominator rate is reported as 0."""
    if len(predicted) != len(actual):
        raise DataError(
            f"predicted has {len(predicted)} entries, actual has {len(actual)}")
    if not predicted:
        raise ParameterError("cannot score an empty prediction sequence")
    pred = np.asarray(predicted, dtype=bool)
    act = np.asarray(actual, dtype=bool)
    tp = int(np.sum(pred & act))
    fp = int(np.sum(pred & ~act))
    tn = int(np.sum(~pred & ~act))
    fn = int(np.sum(~pred & act))
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return DetectionMetrics(
        accuracy=(tp + tn) / len(pred), precision=precision, recall=recall,
        f1=f1, tp=tp, fp=fp, tn=tn, fn=fn)


def rank_hosts(scores: np.ndarray) -> np.ndarray:
    """Host indices from highest to lowest score; ties break toward the
    lower index so rankings are reproducible."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = sorted(range(scores.size), key=lambda i: (-scores[i], i))
    return np.asarray(order, dtype=int)


def hitrate_at_cutoff(scores: np.ndarray, faulty: np.ndarray,
                      cutoff: int = RANK_CUTOFF) -> float | None:
    """Fraction of truly faulty hosts inside the top of the ranking.

    The window is min(cutoff, #faulty) so the score stays informative when
    the cluster is far smaller than the cutoff. Intervals with no faulty
    host carry no signal and return None."""
    faulty = np.asarray(faulty, dtype=bool).reshape(-1)
    total = int(faulty.sum())
    if total == 0:
        return None
    depth = min(cutoff, total)
    top = rank_hosts(scores)[:depth]
    return float(np.sum(faulty[top])) / total


def ndcg_at_cutoff(scores: np.ndarray, faulty: np.ndarray,
                   cutoff: int = RANK_CUTOFF) -> float | None:
    """Discounted-gain ranking quality with binary relevance, normalized by
    the ideal ordering, using the same truncation as the hit rate."""
    faulty = np.asarray(faulty, dtype=bool).reshape(-1)
    total = int(faulty.sum())
    if total == 0:
        return None
    depth = min(cutoff, total)
    top = rank_hosts(scores)[:depth]
    dcg = sum(1.0 / math.log2(i + 2) for i, h in enumerate(top) if faulty[h])
    ideal = sum(1.0 / math.log2(i + 2) for i in range(depth))
    return dcg / ideal


def ranking_metrics(per_interval_scores: Sequence[np.ndarray],
                    per_interval_faulty: Sequence[np.ndarray],
                    cutoff: int = RANK_CUTOFF) -> tuple[float | None, float | None]:
    """Mean hit rate and mean discounted gain over intervals that contain
    at least one faulty host; (None, None) when no interval does."""
    if len(per_interval_scores) != len(per_interval_faulty):
        raise DataError("scores and fault masks must align one-to-one")
    hits, gains = [], []
    for scores, faulty in zip(per_interval_scores, per_interval_faulty):
        hr = hitrate_at_cutoff(scores, faulty, cutoff)
        if hr is None:
            continue
        hits.append(hr)
        gains.append(ndcg_at_cutoff(scores, faulty, cutoff))
    if not hits:
        return None, None
    return float(np.mean(hits)), float(np.mean(gains))


def improvement_ratio(decisions: Sequence[DecisionRecord]) -> float | None:
    """Among intervals where a fault was predicted (so a proposal existed),
    the fraction whose critic strictly favored the proposal. None when no
    proposal was ever made."""
    candidates = [d for d in decisions if d.fault_predicted and d.d is not None]
    if not candidates:
        return None
    wins = sum(1 for d in candidates if d.d[1] > d.d[0])
    return wins / len(candidates)


def overhead_ratio(model_seconds: float, scheduler_seconds: float) -> float:
    """Wall-clock cost of the fault-tolerance models relative to the
    underlying placement scheduler."""
    if scheduler_seconds <= 0:
        raise ParameterError(
            f"scheduler_seconds must be positive, got {scheduler_seconds}")
    if model_seconds < 0:
        raise ParameterError(
            f"model_seconds must be non-negative, got {model_seconds}")
    return model_seconds / scheduler_seconds


def format_ratio(numerator: float, denominator: float) -> str:
    """Fixed 4-decimal rendering used for reported rates."""
    if denominator == 0:
        raise ParameterError("cannot format a ratio with denominator 0")
    return f"{numerator / denominator:.4f}"


def qos_summary(records: Sequence[IntervalRecord], cfg: ExperimentConfig) -> dict:
    """Aggregate service quality over one run."""
    if not records:
        raise ParameterError("cannot summarize an empty run")
    completed = [t for r in records for t in r.completed]
    violations = sum(r.slo_violations for r in records)
    overdue = records[-1].overdue_active
    finished = len(completed)
    denom = finished + overdue
    energy = float(sum(r.energy_wh for r in records))
    responses = [t.response_time_s for t in completed]
    return {
        "intervals": len(records),
        "energy_wh": energy,
        "energy_wh_per_interval": energy / len(records),
        "completed_tasks": finished,
        "slo_violations": int(violations),
        "overdue_at_end": int(overdue),
        "slo_fraction": ((violations + overdue) / denom) if denom else 0.0,
        "mean_response_time_s": float(np.mean(responses)) if responses else None,
        "migrations": int(sum(r.migration_count for r in records)),
        "migration_time_s": float(sum(r.migration_time_s for r in records)),
        "qos": qos_score(list(records), cfg),
    }


@dataclass
class RunReport:
    """Everything `evaluate` derives from a finished run's artifacts."""

    intervals: int
    detection: DetectionMetrics | None
    hitrate: float | None
    ndcg: float | None
    improvement: float | None
    qos: dict
    overhead_ratio: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "intervals": self.intervals,
            "detection": None if self.detection is None else self.detection.to_dict(),
            "hitrate_at_100": self.hitrate,
            "ndcg_at_100": self.ndcg,
            "improvement_ratio": self.improvement,
            "qos": self.qos,
            "overhead_ratio": self.overhead_ratio,
            "notes": list(self.notes),
        }
