"""Preemptive container migration for simulated edge clusters.

A deterministic interval simulator plus two small learned components: a
per-host fault encoder with class prototypes, and an adversarially trained
migration proposer whose critic is supervised by replaying candidate
schedules on state snapshots.
"""

from .cluster import Cluster, CompletedTask, FaultEvent, FaultPlan, IntervalRecord, Task
from .config import (FAULT_TRAINING_SEED, ExperimentConfig, HostSpec,
                     ModelDims, TrainingConfig, fault_dataset_config,
                     load_config, save_config)
from .cosim import cosimulate, qos_score
from .encoder import EncoderOutput, FaultEncoder
from .errors import (CheckpointError, ConfigError, DataError, ParameterError,
                     PremigError, ScheduleError, ShapeError)
from .gan import (DecisionRecord, MigrationGenerator, ScheduleDiscriminator,
                  compose_schedule, select_schedule)
from .metrics import RunReport, detection_metrics, improvement_ratio, qos_summary
from .prototypes import PrototypeSet
from .runner import PipelineModels, RunOutputs, collect_dataset, run_loop
from .scheduler import baseline_schedule
from .training import TrainRecord, evaluate_fault_model, train_fault_model
from .window import WindowBuffer

__version__ = "0.1.0"

__all__ = [
    "Cluster", "CompletedTask", "FaultEvent", "FaultPlan", "IntervalRecord",
    "Task", "ExperimentConfig", "HostSpec", "ModelDims", "TrainingConfig",
    "FAULT_TRAINING_SEED", "fault_dataset_config",
    "load_config", "save_config", "cosimulate", "qos_score", "EncoderOutput",
    "FaultEncoder", "CheckpointError", "ConfigError", "DataError",
    "ParameterError", "PremigError", "ScheduleError", "ShapeError",
    "DecisionRecord", "MigrationGenerator", "ScheduleDiscriminator",
    "compose_schedule", "select_schedule", "RunReport", "detection_metrics",
    "improvement_ratio", "qos_summary", "PrototypeSet", "PipelineModels",
    "RunOutputs", "collect_dataset", "run_loop", "baseline_schedule",
    "TrainRecord", "evaluate_fault_model", "train_fault_model", "WindowBuffer",
    "__version__",
]
