"""End-to-end plumbing: dataset collection, artifacts, checkpoints, the
baseline scheduler's tie rules, and CLI behavior/exit codes."""

import json

import numpy as np
import pytest

from premig import cli
from premig.checkpoint import (load_fault_model, load_migration_model,
                               save_fault_model, save_migration_model)
from premig.cluster import Task
from premig.config import (ExperimentConfig, FaultRates, HostSpec, ModelDims,
                           config_to_dict, load_config, save_config)
from premig.encoder import FaultEncoder
from premig.errors import CheckpointError
from premig.gan import MigrationGenerator, ScheduleDiscriminator
from premig.prototypes import PrototypeSet
from premig.runner import (collect_dataset, dataset_from_rows, dataset_row,
                           run_loop)
from premig.scheduler import baseline_placements
from premig.trace import interval_record_from_row


def tiny_cfg(**kw):
    base = dict(
        m=4, lam=1.0, seed=11,
        hosts=tuple(HostSpec() for _ in range(4)),
        faults=FaultRates(rate=0.3, duration=(1, 2)),
        eval_intervals=8,
        fpe_trace_len=10,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- dataset collection ----------------------------------------------------

def test_collect_returns_exact_record_count():
    cfg = tiny_cfg()
    records, outputs = collect_dataset(cfg, 12)
    assert len(records) == 12
    assert len(outputs.records) == 12 + cfg.k - 1  # warmup intervals
    for rec in records:
        assert rec.window.shape == (cfg.k, cfg.m, cfg.n)
        assert rec.schedule.shape[1] == cfg.m
        assert rec.labels.shape == (cfg.m,)
        assert np.all(rec.window >= 0.0) and np.all(rec.window <= 1.0)


def test_collect_without_faults_has_no_labels():
    cfg = tiny_cfg(lam=0.5, faults=FaultRates(rate=0.0))
    records, _ = collect_dataset(cfg, 15)
    assert all(not np.any(rec.labels > 0) for rec in records)


def test_dataset_rows_round_trip():
    cfg = tiny_cfg()
    records, _ = collect_dataset(cfg, 5)
    rows = [dataset_row(i, rec) for i, rec in enumerate(records)]
    rebuilt = dataset_from_rows([json.loads(json.dumps(r)) for r in rows])
    for a, b in zip(records, rebuilt):
        assert np.allclose(a.window, b.window, atol=1e-7)
        assert np.array_equal(a.schedule, b.schedule)
        assert np.array_equal(a.labels, b.labels)


def test_record_row_round_trip():
    cfg = tiny_cfg()
    outputs = run_loop(cfg, 6)
    for record, row in zip(outputs.records, outputs.record_rows):
        clone = interval_record_from_row(json.loads(json.dumps(row)))
        assert clone.interval == record.interval
        assert np.allclose(clone.raw, record.raw)
        assert np.array_equal(clone.labels, record.labels)
        assert clone.energy_wh == pytest.approx(record.energy_wh)
        assert clone.slo_violations == record.slo_violations
        assert clone.overdue_active == record.overdue_active
        assert [t.id for t in clone.completed] == [t.id for t in record.completed]


def test_run_loop_replay_is_identical():
    cfg = tiny_cfg()
    a = run_loop(cfg, 10)
    b = run_loop(cfg, 10)
    assert [json.dumps(r, sort_keys=True) for r in a.trace_rows] == \
           [json.dumps(r, sort_keys=True) for r in b.trace_rows]
    assert [json.dumps(r, sort_keys=True) for r in a.record_rows] == \
           [json.dumps(r, sort_keys=True) for r in b.record_rows]


# -- baseline scheduler ------------------------------------------------------

def make_task(tid, demand=100.0, host=None):
    t = Task(id=tid, app_class="A", total_demand=demand, ram_footprint=64.0,
             io_intensity=0.2, arrival_interval=0, deadline=600.0)
    t.host = host
    return t


def test_scheduler_keeps_running_tasks_in_place():
    cfg = tiny_cfg()
    tasks = [make_task(0, host=2), make_task(1, host=3)]
    assert baseline_placements(tasks, cfg) == [2, 3]


def test_scheduler_fills_least_loaded_then_lowest_index():
    cfg = tiny_cfg()
    # all hosts empty: first unplaced task goes to host 0, the next to host 1
    tasks = [make_task(0), make_task(1)]
    assert baseline_placements(tasks, cfg) == [0, 1]
    # host 0 busy: new task avoids it
    tasks = [make_task(0, host=0), make_task(1)]
    assert baseline_placements(tasks, cfg) == [0, 1]


# -- checkpoints -------------------------------------------------------------

def fault_model(seed=0, n=8, k=5):
    rng = np.random.default_rng(seed)
    encoder = FaultEncoder(n=n, k=k, dims=ModelDims(), rng=rng)
    protos = PrototypeSet(c=3, embed_dim=ModelDims().embed, rng=rng)
    return encoder, protos


def test_fault_checkpoint_save_load_save_is_byte_identical(tmp_path):
    encoder, protos = fault_model()
    encoder.carry = encoder.init_carry(4) + 0.25
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_fault_model(first, encoder, protos)
    loaded_enc, loaded_protos = load_fault_model(first)
    save_fault_model(second, loaded_enc, loaded_protos)
    assert first.read_bytes() == second.read_bytes()


def test_migration_checkpoint_save_load_save_is_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    gen = MigrationGenerator(4, 8, ModelDims(), rng)
    disc = ScheduleDiscriminator(4, ModelDims(), rng)
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_migration_model(first, gen, disc)
    loaded = load_migration_model(first)
    save_migration_model(second, *loaded)
    assert first.read_bytes() == second.read_bytes()


def test_truncated_checkpoint_raises(tmp_path):
    encoder, protos = fault_model()
    path = tmp_path / "model.json"
    save_fault_model(path, encoder, protos)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_fault_model(path)


def test_checkpoint_kind_and_shape_mismatches_raise(tmp_path):
    encoder, protos = fault_model()
    fault_path = tmp_path / "fault.json"
    save_fault_model(fault_path, encoder, protos)
    with pytest.raises(CheckpointError):
        load_migration_model(fault_path)  # wrong kind

    payload = json.loads(fault_path.read_text())
    del payload["params"]["gat.weight"]
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(payload))
    with pytest.raises(CheckpointError):
        load_fault_model(broken)

    payload = json.loads(fault_path.read_text())
    payload["format_version"] = 99
    stale = tmp_path / "stale.json"
    stale.write_text(json.dumps(payload))
    with pytest.raises(CheckpointError):
        load_fault_model(stale)


def test_fault_model_is_cluster_size_agnostic(tmp_path):
    """A model trained against one cluster size drives any other: no
    parameter shape depends on the host count."""
    encoder, protos = fault_model()
    encoder.carry = encoder.init_carry(8)  # saved against an 8-host cluster
    path = tmp_path / "model.json"
    save_fault_model(path, encoder, protos)
    loaded, _ = load_fault_model(path)
    window = np.random.default_rng(2).uniform(0, 1, size=(5, 16, 8))
    out = loaded.forward(window, np.zeros((0, 16)))
    assert out.detect.shape == (16, 2)


# -- CLI ---------------------------------------------------------------------

def write_cfg(tmp_path, cfg):
    path = tmp_path / "config.json"
    save_config(cfg, path)
    return str(path)


def test_config_file_round_trip(tmp_path):
    cfg = tiny_cfg(faults=FaultRates(rate=0.5, class_weights=(0.2, 0.3, 0.5)))
    path = write_cfg(tmp_path, cfg)
    assert config_to_dict(load_config(path)) == config_to_dict(cfg)


def test_cli_simulate_writes_artifacts_and_returns_zero(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, tiny_cfg())
    out = tmp_path / "run"
    code = cli.main(["simulate", "--config", cfg_path, "--intervals", "6",
                     "--out", str(out)])
    assert code == 0
    for name in ("trace.jsonl", "records.jsonl", "config.json", "report.json",
                 "timings.json"):
        assert (out / name).exists(), name
    assert len((out / "trace.jsonl").read_text().splitlines()) == 6
    assert "simulated 6 intervals" in capsys.readouterr().out


def test_cli_rerun_is_byte_identical(tmp_path):
    cfg_path = write_cfg(tmp_path, tiny_cfg())
    wrote = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert cli.main(["simulate", "--config", cfg_path, "--intervals", "8",
                         "--out", str(out)]) == 0
        wrote.append(out)
    for artifact in ("trace.jsonl", "records.jsonl", "report.json"):
        assert (wrote[0] / artifact).read_bytes() == (wrote[1] / artifact).read_bytes()


def test_cli_no_preemption_matches_simulate(tmp_path):
    cfg_path = write_cfg(tmp_path, tiny_cfg())
    sim = tmp_path / "sim"
    run = tmp_path / "run"
    assert cli.main(["simulate", "--config", cfg_path, "--intervals", "7",
                     "--out", str(sim)]) == 0
    assert cli.main(["run", "--no-preemption", "--config", cfg_path,
                     "--intervals", "7", "--out", str(run)]) == 0
    assert (sim / "trace.jsonl").read_bytes() == (run / "trace.jsonl").read_bytes()
    assert (sim / "records.jsonl").read_bytes() == (run / "records.jsonl").read_bytes()


def test_cli_collect_then_evaluate(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path, tiny_cfg())
    out = tmp_path / "collect"
    assert cli.main(["collect", "--config", cfg_path, "--intervals", "9",
                     "--out", str(out)]) == 0
    assert len((out / "dataset.jsonl").read_text().splitlines()) == 9
    sim = tmp_path / "sim"
    assert cli.main(["simulate", "--config", cfg_path, "--intervals", "6",
                     "--out", str(sim)]) == 0
    assert cli.main(["evaluate", "--out", str(sim)]) == 0
    assert (sim / "intervals.csv").exists()
    for figure in ("energy.png", "response_time.png", "utilization.png",
                   "migrations.png", "slo_by_class.png"):
        assert (sim / figure).exists(), figure
    assert "report ->" in capsys.readouterr().out


def test_cli_usage_errors_return_one(capsys):
    assert cli.main([]) == 1  # missing subcommand
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["simulate", "--intervals", "not-a-number"]) == 1
    capsys.readouterr()  # swallow argparse noise


def test_cli_data_errors_return_two(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["train-fpe", "--out", str(empty)]) == 2  # no dataset
    assert cli.main(["evaluate", "--out", str(empty)]) == 2  # no run artifacts
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{not json")
    assert cli.main(["simulate", "--config", str(bad_cfg),
                     "--out", str(tmp_path / "x")]) == 2
    run_dir = tmp_path / "needs-models"
    run_dir.mkdir()
    assert cli.main(["run", "--out", str(run_dir), "--intervals", "3"]) == 2
    capsys.readouterr()
