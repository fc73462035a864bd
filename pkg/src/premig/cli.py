"""Command-line front end.

Subcommands: simulate, collect, train-fpe, train-gan, run, evaluate,
grad-check. Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import no_grad
from .checkpoint import (load_fault_model, load_migration_model,
                         save_fault_model, save_migration_model)
from .config import ExperimentConfig, load_config, save_config
from .errors import DataError, PremigError
from .gan import MigrationGenerator, ScheduleDiscriminator
from .metrics import overhead_ratio
from .runner import (PipelineModels, RunOutputs, collect_dataset, dataset_row,
                     dataset_from_rows, report_from_artifacts, run_loop,
                     run_streams)
from .trace import (ATTENTION_NAME, DECISIONS_NAME, RECORDS_NAME, TRACE_NAME,
                    read_jsonl, write_attention_table, write_jsonl)
from .training import train_fault_model

DATASET_NAME = "dataset.jsonl"
CONFIG_NAME = "config.json"
REPORT_NAME = "report.json"
TIMINGS_NAME = "timings.json"
FAULT_MODEL_NAME = "fault_model.json"
MIGRATION_MODEL_NAME = "migration_model.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="premig",
        description="Preemptive container migration on a simulated edge cluster.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="JSON config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override the config seed")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="artifact directory (default: current directory)")
        p.add_argument("--intervals", type=int, metavar="N",
                       help="override the command's interval/record count")
        p.add_argument("--lambda", dest="lam", type=float, metavar="F",
                       help="override the mean task-arrival rate")

    p = sub.add_parser("simulate", help="baseline run without any models")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="collect a labeled training dataset")
    common(p)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train-fpe", help="train the fault encoder + prototypes")
    common(p)
    p.set_defaults(func=cmd_train_fpe)

    p = sub.add_parser("train-gan",
                       help="train the migration proposer online against replay")
    common(p)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("run", help="closed-loop run with preemptive migration")
    common(p)
    p.add_argument("--no-preemption", action="store_true",
                   help="disable the models; behaves exactly like the baseline")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score a run directory and render figures")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    common(p)
    p.set_defaults(func=cmd_grad_check)

    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.lam is not None:
        overrides["lam"] = args.lam
    return cfg.with_overrides(**overrides) if overrides else cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")


def _write_run_artifacts(out: Path, cfg: ExperimentConfig,
                         outputs: RunOutputs) -> None:
    write_jsonl(out / TRACE_NAME, outputs.trace_rows)
    write_jsonl(out / RECORDS_NAME, outputs.record_rows)
    write_jsonl(out / DECISIONS_NAME, [d.to_dict() for d in outputs.decisions])
    if outputs.attention:
        write_attention_table(out / ATTENTION_NAME, outputs.attention)
    save_config(cfg, out / CONFIG_NAME)
    ratio = None
    if outputs.scheduler_seconds > 0:
        ratio = overhead_ratio(outputs.model_seconds, outputs.scheduler_seconds)
    _write_json(out / TIMINGS_NAME, {
        "model_seconds": outputs.model_seconds,
        "scheduler_seconds": outputs.scheduler_seconds,
        "overhead_ratio": ratio,
    })


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    intervals = args.intervals if args.intervals else cfg.eval_intervals
    out = _out_dir(args)
    outputs = run_loop(cfg, intervals)
    _write_run_artifacts(out, cfg, outputs)
    report = report_from_artifacts(outputs.record_rows, [], cfg)
    _write_json(out / REPORT_NAME, report.to_dict())
    qos = report.qos
    print(f"simulated {intervals} intervals: "
          f"energy {qos['energy_wh']:.2f} Wh, "
          f"completed {qos['completed_tasks']}, "
          f"slo_fraction {qos['slo_fraction']:.4f}")
    print(f"artifacts in {out}")
    return 0


def cmd_collect(args) -> int:
    cfg = _load_cfg(args)
    n_records = args.intervals if args.intervals else cfg.fpe_trace_len
    out = _out_dir(args)
    records, outputs = collect_dataset(cfg, n_records)
    write_jsonl(out / TRACE_NAME, outputs.trace_rows)
    write_jsonl(out / DATASET_NAME,
                [dataset_row(i, rec) for i, rec in enumerate(records)])
    save_config(cfg, out / CONFIG_NAME)
    faulty = sum(1 for rec in records if np.any(rec.labels > 0))
    print(f"collected {len(records)} records "
          f"({faulty} with at least one faulty host) into {out}")
    return 0


def cmd_train_fpe(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    dataset_path = out / DATASET_NAME
    if not dataset_path.exists():
        raise DataError(f"{dataset_path} not found; run `premig collect` first")
    records = dataset_from_rows(read_jsonl(dataset_path))
    if args.intervals:
        records = records[: args.intervals]
    log_lines: list[str] = []

    def log(line: str) -> None:
        log_lines.append(line)
        print(line)

    result = train_fault_model(records, cfg, run_streams(cfg)["model"], log=log)
    save_fault_model(out / FAULT_MODEL_NAME, result.encoder, result.prototypes)
    (out / "fpe_training.txt").write_text("\n".join(log_lines) + "\n",
                                          encoding="utf-8")

    # attention of the trained model over the validation tail
    split = max(min(int(len(records) * 0.8), len(records) - 1), 1)
    val = records[split:]
    attention = []
    carry = result.encoder.carry
    with no_grad():
        for i, rec in enumerate(val):
            enc = result.encoder.forward(rec.window, rec.schedule, carry)
            carry = enc.carry
            attention.append((split + i, enc.attention))
    write_attention_table(out / ATTENTION_NAME, attention)

    best = result.history[result.best_epoch - 1]
    print(f"best epoch {result.best_epoch}: val_f1 {best.val_f1:.4f}, "
          f"val_class_acc {best.val_class_accuracy:.4f} "
          f"({'early stop' if result.stopped_early else 'full run'}); "
          f"model -> {out / FAULT_MODEL_NAME}")
    return 0


def cmd_train_gan(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    encoder, protos = load_fault_model(out / FAULT_MODEL_NAME)
    intervals = args.intervals if args.intervals else cfg.gan_trace_len
    model_rng = run_streams(cfg)["model"]
    gen = MigrationGenerator(cfg.m, cfg.model.embed, cfg.model, model_rng)
    disc = ScheduleDiscriminator(cfg.m, cfg.model, model_rng)
    models = PipelineModels(encoder, protos, gen, disc)
    outputs = run_loop(cfg, intervals, models, online_gan_train=True)
    save_migration_model(out / MIGRATION_MODEL_NAME, gen, disc)
    write_jsonl(out / DECISIONS_NAME, [d.to_dict() for d in outputs.decisions])
    candidates = [d for d in outputs.decisions if d.fault_predicted and d.d]
    agree = sum(
        1 for d in candidates
        if (d.d[1] >= d.d[0]) == (d.sim_proposed >= d.sim_current))
    print(f"trained on {intervals} intervals, {len(candidates)} proposal "
          f"candidates, critic/replay agreement "
          f"{agree}/{len(candidates) if candidates else 0}; "
          f"model -> {out / MIGRATION_MODEL_NAME}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    intervals = args.intervals if args.intervals else cfg.eval_intervals
    if args.no_preemption:
        models = None
    else:
        encoder, protos = load_fault_model(out / FAULT_MODEL_NAME)
        gen, disc = load_migration_model(out / MIGRATION_MODEL_NAME)
        models = PipelineModels(encoder, protos, gen, disc)
    outputs = run_loop(cfg, intervals, models,
                       execute_selected=not args.no_preemption)
    _write_run_artifacts(out, cfg, outputs)
    report = report_from_artifacts(outputs.record_rows,
                                   [d.to_dict() for d in outputs.decisions], cfg)
    _write_json(out / REPORT_NAME, report.to_dict())
    qos = report.qos
    mode = "baseline (no preemption)" if args.no_preemption else "preemptive"
    print(f"{mode} run over {intervals} intervals: "
          f"energy {qos['energy_wh']:.2f} Wh, "
          f"slo_fraction {qos['slo_fraction']:.4f}, "
          f"migrations {qos['migrations']}")
    print(f"artifacts in {out}")
    return 0


def cmd_evaluate(args) -> int:
    from .report import TABLE_NAME, render_figures, write_interval_table

    out = _out_dir(args)
    config_path = out / CONFIG_NAME
    if args.config:
        cfg = _load_cfg(args)
    elif config_path.exists():
        cfg = load_config(config_path)
    else:
        raise DataError(
            f"{config_path} not found; pass --config or point --out at a run directory")
    record_rows = read_jsonl(out / RECORDS_NAME)
    decisions_path = out / DECISIONS_NAME
    decision_rows = read_jsonl(decisions_path) if decisions_path.exists() else []
    model_seconds = scheduler_seconds = None
    timings_path = out / TIMINGS_NAME
    if timings_path.exists():
        timings = json.loads(timings_path.read_text(encoding="utf-8"))
        model_seconds = timings.get("model_seconds")
        scheduler_seconds = timings.get("scheduler_seconds")
    report = report_from_artifacts(record_rows, decision_rows, cfg,
                                   model_seconds=model_seconds,
                                   scheduler_seconds=scheduler_seconds)
    _write_json(out / REPORT_NAME, report.to_dict())
    write_interval_table(out / TABLE_NAME, record_rows, cfg)
    figures = render_figures(out, record_rows, cfg)
    det = report.detection
    det_part = (f"f1 {det.f1:.4f}" if det is not None else "no model outputs")
    print(f"evaluated {report.intervals} intervals: {det_part}, "
          f"slo_fraction {report.qos['slo_fraction']:.4f}, "
          f"qos {report.qos['qos']:.4f}")
    print(f"report -> {out / REPORT_NAME}; figures: {', '.join(figures)}")
    return 0


def cmd_grad_check(args) -> int:
    from .checks import run_standard_checks

    cfg = _load_cfg(args)
    out = _out_dir(args)
    lines: list[str] = []

    def log(line: str) -> None:
        lines.append(line)
        print(line)

    results = run_standard_checks(seed=cfg.seed, log=log)
    failed = [name for name, report in results if not report.passed]
    (out / "grad_check.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 2
    print(f"all {len(results)} gradient checks passed")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except PremigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
