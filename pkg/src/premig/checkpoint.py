"""Model checkpoints as plain JSON.

Weights are stored as float lists; a float32 value survives the float64
JSON round trip bit-exactly, so save/load/save produces identical bytes.
Each file is self-describing: kind, format version, and the dimensions
needed to rebuild the model without the original config.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ModelDims
from .encoder import FaultEncoder
from .errors import CheckpointError
from .gan import MigrationGenerator, ScheduleDiscriminator
from .optim import Parameter
from .prototypes import PrototypeSet

FORMAT_VERSION = 1
FAULT_MODEL_KIND = "fault-model"
MIGRATION_MODEL_KIND = "migration-model"


def _params_state(params: list[Parameter]) -> dict:
    state = {}
    for p in params:
        state[p.name] = {
            "shape": list(p.data.shape),
            "values": [float(v) for v in p.data.reshape(-1)],
        }
    return dict(sorted(state.items()))


def _load_params(params: list[Parameter], state: dict, path: str) -> None:
    for p in params:
        if p.name not in state:
            raise CheckpointError(f"{path}: missing parameter '{p.name}'")
        entry = state[p.name]
        shape = tuple(entry["shape"])
        if shape != p.data.shape:
            raise CheckpointError(
                f"{path}: parameter '{p.name}' has shape {shape}, expected {p.data.shape}")
        values = np.asarray(entry["values"], dtype=np.float32).reshape(shape)
        p.tensor.data = values
        p.m = np.zeros_like(values)
        p.v = np.zeros_like(values)
        p.step_count = 0
    extra = set(state) - {p.name for p in params}
    if extra:
        raise CheckpointError(f"{path}: unknown parameters {sorted(extra)}")


def _dims_state(dims: ModelDims) -> dict:
    return {
        "hidden": dims.hidden, "fused": dims.fused, "heads": dims.heads,
        "ff_hidden": dims.ff_hidden, "embed": dims.embed,
    }


def _dims_from_state(state: dict) -> ModelDims:
    return ModelDims(hidden=int(state["hidden"]), fused=int(state["fused"]),
                     heads=int(state["heads"]), ff_hidden=int(state["ff_hidden"]),
                     embed=int(state["embed"]))


def _write_json(path: str | Path, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def _read_json(path: str | Path, kind: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise CheckpointError(f"{path}: expected a JSON object")
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {payload.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}")
    if payload.get("kind") != kind:
        raise CheckpointError(
            f"{path}: kind {payload.get('kind')!r}, expected '{kind}'")
    return payload


# -- fault model -------------------------------------------------------


def save_fault_model(path: str | Path, encoder: FaultEncoder,
                     protos: PrototypeSet) -> None:
    carry = None
    if encoder.carry is not None:
        carry = [[float(v) for v in row] for row in encoder.carry]
    _write_json(path, {
        "format_version": FORMAT_VERSION,
        "kind": FAULT_MODEL_KIND,
        "n": encoder.n,
        "k": encoder.k,
        "dims": _dims_state(encoder.dims),
        "params": _params_state(encoder.params),
        "prototypes": protos.state(),
        "carry": carry,
    })


def load_fault_model(path: str | Path) -> tuple[FaultEncoder, PrototypeSet]:
    payload = _read_json(path, FAULT_MODEL_KIND)
    try:
        dims = _dims_from_state(payload["dims"])
        encoder = FaultEncoder(int(payload["n"]), int(payload["k"]), dims,
                               np.random.default_rng(0))
        _load_params(encoder.params, payload["params"], str(path))
        protos = PrototypeSet.from_state(payload["prototypes"])
        if payload.get("carry") is not None:
            encoder.carry = np.asarray(payload["carry"], dtype=np.float32)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed fault model ({exc})") from None
    return encoder, protos


def carry_for(encoder: FaultEncoder, m: int) -> np.ndarray:
    """Saved recurrent state if it matches this cluster size, else zeros."""
    if encoder.carry is not None and encoder.carry.shape == (m, encoder.dims.hidden):
        return encoder.carry.copy()
    return encoder.init_carry(m)


# -- migration model ---------------------------------------------------


def save_migration_model(path: str | Path, gen: MigrationGenerator,
                         disc: ScheduleDiscriminator) -> None:
    _write_json(path, {
        "format_version": FORMAT_VERSION,
        "kind": MIGRATION_MODEL_KIND,
        "m": gen.m,
        "embed_dim": gen.embed_dim,
        "dims": _dims_state(gen.dims),
        "generator": _params_state(gen.params),
        "discriminator": _params_state(disc.params),
    })


def load_migration_model(path: str | Path
                         ) -> tuple[MigrationGenerator, ScheduleDiscriminator]:
    payload = _read_json(path, MIGRATION_MODEL_KIND)
    try:
        dims = _dims_from_state(payload["dims"])
        m = int(payload["m"])
        gen = MigrationGenerator(m, int(payload["embed_dim"]), dims,
                                 np.random.default_rng(0))
        disc = ScheduleDiscriminator(m, dims, np.random.default_rng(0))
        _load_params(gen.params, payload["generator"], str(path))
        _load_params(disc.params, payload["discriminator"], str(path))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed migration model ({exc})") from None
    return gen, disc
