"""Supervised training for the fault encoder and its class prototypes.

The trainer consumes a record stream (window, schedule, per-host labels),
takes one optimizer step per record in a freshly shuffled order each epoch,
applies conditional prototype updates after each step, decays the prototype
step size once per epoch, and early-stops when the validation loss stops
improving. Each record is encoded from a zero recurrent state: the window
already carries the recent history, and shuffling would otherwise tear the
carry chain. The live control loop, by contrast, chains the carry across
intervals.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .config import ExperimentConfig
from .encoder import FaultEncoder
from .errors import DataError, ParameterError
from .optim import adamw_step, zero_grads
from .prototypes import DIST_EPS, PrototypeSet

LOG_EPS = 1e-12
MAX_OVERSAMPLE = 5


@dataclass
class TrainRecord:
    window: np.ndarray  # (k, m, n) normalized metrics, oldest first
    schedule: np.ndarray  # (p, m) placement one-hot in force for the last step
    labels: np.ndarray  # (m,) int fault class per host, 0 = healthy


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    val_class_accuracy: float
    alpha: float


@dataclass
class EvalResult:
    f1: float
    precision: float
    recall: float
    class_accuracy: float
    faulty_hosts: int
    records: int
    mean_loss: float = 0.0


@dataclass
class TrainResult:
    encoder: FaultEncoder
    prototypes: PrototypeSet
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def detection_loss(detect: Tensor, labels: np.ndarray) -> Tensor:
    """Negative log-likelihood of the binary fault indicator under the
    2-way softmax rows."""
    labels = np.asarray(labels)
    m = detect.shape[0]
    if labels.shape != (m,):
        raise DataError(f"labels shape {labels.shape} does not match {m} hosts")
    sel = np.zeros((m, 2), dtype=np.float32)
    sel[np.arange(m), (labels > 0).astype(int)] = 1.0
    logp = ad.log(ad.add_const(detect, LOG_EPS))
    return ad.neg(ad.tsum(ad.mul(logp, Tensor(sel))))


def prototype_loss(embed: Tensor, labels: np.ndarray, protos: PrototypeSet) -> Tensor:
    """Pull faulty-host embeddings toward their class prototype and push
    them from the other class prototypes. Healthy hosts contribute nothing.

    Implemented as one signed-coefficient pass per class: +1 for the row's
    own class, -1 for the other classes of faulty rows, 0 elsewhere."""
    labels = np.asarray(labels)
    m = embed.shape[0]
    if labels.shape != (m,):
        raise DataError(f"labels shape {labels.shape} does not match {m} hosts")
    total: Tensor | None = None
    faulty = labels > 0
    for j in range(1, protos.c + 1):
        coef = np.where(labels == j, 1.0, np.where(faulty, -1.0, 0.0)).astype(np.float32)
        if not coef.any():
            continue
        proto_j = Tensor(protos.values[j][None, :].astype(np.float32))
        diff = ad.sub(embed, proto_j)
        sq = ad.tsum(ad.mul(diff, diff), axis=1, keepdims=True)
        dist = ad.sqrt(ad.add_const(sq, DIST_EPS))
        term = ad.tsum(ad.mul(Tensor(coef[:, None]), dist))
        total = term if total is None else ad.add(total, term)
    if total is None:
        return Tensor(np.zeros((), dtype=np.float32))
    return total


def combined_loss(detect: Tensor, embed: Tensor, labels: np.ndarray,
                  protos: PrototypeSet) -> Tensor:
    return ad.add(detection_loss(detect, labels), prototype_loss(embed, labels, protos))


def detection_flags(detect_rows: np.ndarray) -> np.ndarray:
    """Reported per-host fault flags: the fault column strictly wins."""
    return detect_rows[:, 1] > detect_rows[:, 0]


def evaluate_fault_model(encoder: FaultEncoder, protos: PrototypeSet,
                         records: list[TrainRecord]) -> EvalResult:
    """Host-level detection F1 and fault classification accuracy over a
    record stream, each record encoded independently from a zero recurrent
    state (matching how the trainer sees records). Classification accuracy
    is measured on truly faulty hosts regardless of the detection flag."""
    if not records:
        raise ParameterError("cannot evaluate on an empty record list")
    tp = fp = fn = 0
    class_hits = 0
    faulty_hosts = 0
    loss_total = 0.0
    with no_grad():
        for rec in records:
            out = encoder.forward(rec.window, rec.schedule)
            loss_total += float(
                combined_loss(out.detect, out.embed, rec.labels, protos).data)
            flags = detection_flags(out.detect.data)
            truth = np.asarray(rec.labels) > 0
            tp += int(np.sum(flags & truth))
            fp += int(np.sum(flags & ~truth))
            fn += int(np.sum(~flags & truth))
            for i in np.nonzero(truth)[0]:
                faulty_hosts += 1
                if protos.classify(out.embed.data[i]) == int(rec.labels[i]):
                    class_hits += 1
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    class_acc = class_hits / faulty_hosts if faulty_hosts else 0.0
    return EvalResult(f1=f1, precision=precision, recall=recall,
                      class_accuracy=class_acc, faulty_hosts=faulty_hosts,
                      records=len(records), mean_loss=loss_total / len(records))


def split_records(records: list[TrainRecord], train_fraction: float = 0.8
                  ) -> tuple[list[TrainRecord], list[TrainRecord]]:
    """Chronological split; the validation tail is never shuffled into
    training."""
    if len(records) < 2:
        raise DataError(f"need at least 2 records to split, got {len(records)}")
    cut = int(len(records) * train_fraction)
    cut = min(max(cut, 1), len(records) - 1)
    return records[:cut], records[cut:]


def record_multiplicities(records: list[TrainRecord], c: int) -> np.ndarray:
    """Visits per record in one epoch, repeating records that contain
    under-represented fault classes so per-class gradient mass is roughly
    even. A record's multiplicity is the size ratio between the largest
    fault class and the rarest fault class present in it, capped so one
    record cannot dominate an epoch."""
    counts = np.zeros(c + 1, dtype=np.int64)
    for rec in records:
        counts += np.bincount(np.asarray(rec.labels, dtype=int), minlength=c + 1)
    fault_counts = counts[1:]
    mult = np.ones(len(records), dtype=np.int64)
    if not fault_counts.any():
        return mult
    largest = fault_counts.max()
    for r, rec in enumerate(records):
        present = [int(lab) for lab in np.asarray(rec.labels) if lab > 0]
        if present:
            rarest = min(fault_counts[j - 1] for j in present)
            mult[r] = int(np.clip(round(largest / rarest), 1, MAX_OVERSAMPLE))
    return mult


def train_fault_model(records: list[TrainRecord], cfg: ExperimentConfig,
                      rng: np.random.Generator, log=None) -> TrainResult:
    if not records:
        raise DataError("cannot train on an empty record list")
    tcfg = cfg.training
    encoder = FaultEncoder(cfg.n, cfg.k, cfg.model, rng)
    protos = PrototypeSet(cfg.c, cfg.model.embed, rng,
                          alpha=tcfg.alpha, alpha_decay=tcfg.alpha_decay)
    train_recs, val_recs = split_records(records)
    if tcfg.rebalance_classes:
        mult = record_multiplicities(train_recs, cfg.c)
    else:
        mult = np.ones(len(train_recs), dtype=np.int64)
    visit = np.repeat(np.arange(len(train_recs)), mult)

    best_loss = np.inf
    best_state = None
    best_epoch = 0
    epochs_since_best = 0
    history: list[EpochStats] = []
    stopped_early = False

    for epoch in range(1, tcfg.max_epochs + 1):
        loss_total = 0.0
        for j in rng.permutation(visit):
            rec = train_recs[j]
            out = encoder.forward(rec.window, rec.schedule)
            loss = combined_loss(out.detect, out.embed, rec.labels, protos)
            zero_grads(encoder.params)
            ad.backward(loss)
            adamw_step(encoder.params, lr=tcfg.lr, beta1=tcfg.beta1,
                       beta2=tcfg.beta2, eps=tcfg.eps,
                       weight_decay=tcfg.weight_decay)
            loss_total += float(loss.data)
            for i in np.nonzero(np.asarray(rec.labels) > 0)[0]:
                protos.update(out.embed.data[i], int(rec.labels[i]))
        protos.decay_alpha()

        stats_val = evaluate_fault_model(encoder, protos, val_recs)
        history.append(EpochStats(
            epoch=epoch,
            train_loss=loss_total / len(visit),
            val_loss=stats_val.mean_loss,
            val_f1=stats_val.f1,
            val_class_accuracy=stats_val.class_accuracy,
            alpha=protos.alpha,
        ))
        if log is not None:
            log(f"epoch {epoch:3d}  loss {history[-1].train_loss:9.4f}  "
                f"val_loss {stats_val.mean_loss:9.4f}  "
                f"val_f1 {stats_val.f1:.4f}  val_class_acc {stats_val.class_accuracy:.4f}")
        if stats_val.mean_loss < best_loss:
            best_loss = stats_val.mean_loss
            best_epoch = epoch
            best_state = (
                [p.data.copy() for p in encoder.params],
                copy.deepcopy(protos),
            )
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= tcfg.patience:
                stopped_early = True
                break

    if best_state is not None:
        datas, protos = best_state
        for p, data in zip(encoder.params, datas):
            p.tensor.data = data
    return TrainResult(encoder=encoder, prototypes=protos, history=history,
                       best_epoch=best_epoch, stopped_early=stopped_early)
