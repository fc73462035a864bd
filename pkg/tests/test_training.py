"""Fault-model training loop: learnability on separable synthetic data,
chronological splitting, class rebalancing, early stopping, determinism."""

from dataclasses import replace

import numpy as np
import pytest

from premig.config import ExperimentConfig, HostSpec, TrainingConfig
from premig.errors import DataError, ParameterError
from premig.training import (TrainRecord, detection_flags, evaluate_fault_model,
                             record_multiplicities, split_records,
                             train_fault_model)

M, K, N = 4, 5, 8


def synthetic_records(count, seed=0, fault_p=0.45, m=M):
    """Windows with an unambiguous per-class signature: class 1 saturates
    feature 0, class 2 feature 1, class 3 features 4 and 5."""
    rng = np.random.default_rng(seed)
    schedule = np.zeros((2 * m, m))
    schedule[np.arange(2 * m), np.arange(2 * m) % m] = 1.0
    records = []
    for _ in range(count):
        labels = np.where(rng.random(m) < fault_p, rng.integers(1, 4, size=m), 0)
        window = rng.uniform(0.05, 0.30, size=(K, m, N))
        for i, lab in enumerate(labels):
            if lab == 1:
                window[:, i, 0] = rng.uniform(0.85, 1.0, K)
            elif lab == 2:
                window[:, i, 1] = rng.uniform(0.85, 1.0, K)
            elif lab == 3:
                window[:, i, 4] = rng.uniform(0.85, 1.0, K)
                window[:, i, 5] = rng.uniform(0.85, 1.0, K)
        records.append(TrainRecord(window.astype(np.float32), schedule, labels))
    return records


def cfg_for(m=M, **training_kw):
    cfg = ExperimentConfig(m=m, hosts=tuple(HostSpec() for _ in range(m)))
    if training_kw:
        cfg = replace(cfg, training=replace(cfg.training, **training_kw))
    return cfg


# -- learnability on separable data -----------------------------------------

@pytest.fixture(scope="module")
def separable_run():
    records = synthetic_records(500, seed=42)
    result = train_fault_model(records, cfg_for(), np.random.default_rng(7))
    _, val = split_records(records)
    return result, evaluate_fault_model(result.encoder, result.prototypes, val)


def test_separable_data_detection_f1(separable_run):
    _, final = separable_run
    assert final.f1 >= 0.90, f"detection F1 {final.f1:.4f}"


def test_separable_data_classification_accuracy(separable_run):
    _, final = separable_run
    assert final.class_accuracy >= 0.90, f"class accuracy {final.class_accuracy:.4f}"


def test_training_history_is_recorded(separable_run):
    result, _ = separable_run
    assert result.history, "no epochs recorded"
    assert [s.epoch for s in result.history] == list(range(1, len(result.history) + 1))
    assert all(s.val_loss >= 0.0 for s in result.history)
    # prototype step size decays monotonically across epochs
    alphas = [s.alpha for s in result.history]
    assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_best_epoch_has_minimal_validation_loss(separable_run):
    result, _ = separable_run
    losses = [s.val_loss for s in result.history]
    assert result.best_epoch == int(np.argmin(losses)) + 1


# -- splitting ----------------------------------------------------------------

def test_split_is_chronological_80_20():
    records = synthetic_records(10, seed=1)
    train, val = split_records(records)
    assert len(train) == 8 and len(val) == 2
    assert train == records[:8] and val == records[8:]


def test_split_needs_two_records():
    with pytest.raises(DataError):
        split_records(synthetic_records(1))


def test_split_always_keeps_one_on_each_side():
    records = synthetic_records(3)
    train, val = split_records(records, train_fraction=0.0)
    assert len(train) == 1 and len(val) == 2
    train, val = split_records(records, train_fraction=1.0)
    assert len(train) == 2 and len(val) == 1


# -- class rebalancing --------------------------------------------------------

def one_label_record(labels):
    rng = np.random.default_rng(0)
    return TrainRecord(rng.uniform(0, 1, size=(K, M, N)).astype(np.float32),
                       np.zeros((0, M)), np.asarray(labels))


def test_multiplicities_uniform_when_balanced():
    records = [one_label_record([1, 0, 0, 0]), one_label_record([2, 0, 0, 0]),
               one_label_record([3, 0, 0, 0])]
    assert record_multiplicities(records, 3).tolist() == [1, 1, 1]


def test_multiplicities_boost_rare_class():
    records = [one_label_record([1, 1, 0, 0]) for _ in range(6)]
    records.append(one_label_record([3, 0, 0, 0]))
    mult = record_multiplicities(records, 3)
    assert mult[:6].tolist() == [1] * 6
    assert mult[6] == 5  # 12 class-1 hosts vs 1 class-3 host, capped at 5


def test_multiplicities_all_ones_without_faults():
    records = [one_label_record([0, 0, 0, 0]) for _ in range(4)]
    assert record_multiplicities(records, 3).tolist() == [1, 1, 1, 1]


# -- loop mechanics -----------------------------------------------------------

def test_training_is_deterministic_for_a_seed():
    records = synthetic_records(40, seed=3)
    cfg = cfg_for(max_epochs=3)
    a = train_fault_model(records, cfg, np.random.default_rng(5))
    b = train_fault_model(records, cfg, np.random.default_rng(5))
    assert [(s.train_loss, s.val_loss) for s in a.history] == \
           [(s.train_loss, s.val_loss) for s in b.history]
    assert np.array_equal(a.prototypes.values, b.prototypes.values)


def test_early_stop_triggers_before_epoch_cap():
    records = synthetic_records(60, seed=9)
    cfg = cfg_for(max_epochs=100, patience=3)
    result = train_fault_model(records, cfg, np.random.default_rng(2))
    assert result.stopped_early
    assert len(result.history) == result.best_epoch + 3
    assert len(result.history) < 100


def test_epoch_cap_reports_no_early_stop():
    records = synthetic_records(12, seed=4)
    cfg = cfg_for(max_epochs=2)
    result = train_fault_model(records, cfg, np.random.default_rng(6))
    assert len(result.history) == 2
    assert not result.stopped_early


def test_train_rejects_empty_dataset():
    with pytest.raises(DataError):
        train_fault_model([], cfg_for(), np.random.default_rng(0))


def test_detection_flags_require_strict_win():
    rows = np.array([[0.6, 0.4], [0.4, 0.6], [0.5, 0.5]])
    assert detection_flags(rows).tolist() == [False, True, False]


def test_evaluate_rejects_empty_record_list():
    result = train_fault_model(synthetic_records(12), cfg_for(max_epochs=1),
                               np.random.default_rng(0))
    with pytest.raises(ParameterError):
        evaluate_fault_model(result.encoder, result.prototypes, [])
