"""Feature normalization and the sliding metrics window fed to the encoder."""

from __future__ import annotations

from collections import deque

import numpy as np

from .config import ExperimentConfig
from .errors import DataError


def feature_bounds(cfg: ExperimentConfig) -> np.ndarray:
    """Per-host, per-feature capacity bounds used for normalization."""
    rows = []
    for spec in cfg.hosts:
        # read/write (tx/rx) streams each carry at most half the device
        # bandwidth, so a saturated stream normalizes to 1.0
        io_cap = 0.5 * spec.disk_bandwidth
        net_cap = 0.5 * spec.net_bandwidth
        rows.append([
            spec.cpu_capacity,
            spec.ram_capacity,
            io_cap,
            io_cap,
            net_cap,
            net_cap,
            float(cfg.max_containers),
            spec.power_max,
        ])
    return np.asarray(rows, dtype=np.float64)


def normalize_features(raw: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Map raw interval features to capacity-relative values clamped to [0, 1]."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != bounds.shape:
        raise DataError(f"raw feature shape {raw.shape} does not match bounds {bounds.shape}")
    if np.isnan(raw).any():
        raise DataError("raw features contain NaN")
    return np.clip(raw / bounds, 0.0, 1.0)


class WindowBuffer:
    """Holds the k most recent normalized feature matrices, oldest first."""

    def __init__(self, cfg: ExperimentConfig):
        self.k = cfg.k
        self.shape = (cfg.m, cfg.n)
        self.bounds = feature_bounds(cfg)
        self._frames: deque[np.ndarray] = deque(maxlen=cfg.k)

    def push_raw(self, raw: np.ndarray) -> None:
        self._frames.append(normalize_features(raw, self.bounds))

    @property
    def full(self) -> bool:
        return len(self._frames) == self.k

    def window(self) -> np.ndarray:
        """Stacked (k, m, n) float32 window; requires a full buffer."""
        if not self.full:
            raise DataError(f"window needs {self.k} intervals, has {len(self._frames)}")
        return np.stack(self._frames).astype(np.float32)
