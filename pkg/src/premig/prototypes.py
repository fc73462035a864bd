"""Class prototypes for fault classification.

One embedding-space centroid per fault class. Index 0 is reserved for the
no-fault class and never matched against or updated; classification runs a
nearest-centroid search over classes 1..c.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

DIST_EPS = 1e-12


def embedding_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance with a small floor inside the root so its
    gradient stays finite at zero (mirrors the training-loss distance)."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.sum(diff * diff) + DIST_EPS))


class PrototypeSet:
    """(c+1, E) prototype matrix with conditional exponential updates."""

    def __init__(self, c: int, embed_dim: int, rng: np.random.Generator | None = None,
                 alpha: float = 0.9, alpha_decay: float = 0.05):
        if c < 1:
            raise ParameterError(f"need at least one fault class, got c={c}")
        if not 0.0 < alpha <= 1.0:
            raise ParameterError(f"alpha must be in (0, 1], got {alpha}")
        if not 0.0 <= alpha_decay < 1.0:
            raise ParameterError(f"alpha_decay must be in [0, 1), got {alpha_decay}")
        self.c = c
        self.embed_dim = embed_dim
        self.alpha = float(alpha)
        self.alpha_decay = float(alpha_decay)
        if rng is None:
            self.values = np.zeros((c + 1, embed_dim), dtype=np.float32)
        else:
            self.values = rng.uniform(0.0, 1.0, size=(c + 1, embed_dim)).astype(np.float32)
        self.values[0] = 0.0

    def distances(self, embedding: np.ndarray) -> np.ndarray:
        """Distance from one embedding to each fault-class prototype (index
        j-1 of the result is class j)."""
        embedding = np.asarray(embedding, dtype=np.float64).reshape(-1)
        if embedding.shape[0] != self.embed_dim:
            raise ShapeError(
                f"embedding has {embedding.shape[0]} dims, prototypes have {self.embed_dim}")
        return np.array([
            embedding_distance(embedding, self.values[j]) for j in range(1, self.c + 1)
        ])

    def classify(self, embedding: np.ndarray) -> int:
        """Nearest fault class in 1..c; ties go to the smallest class id."""
        dists = self.distances(embedding)
        return int(np.argmin(dists)) + 1

    def nearest_is(self, embedding: np.ndarray, fault_class: int) -> bool:
        return self.classify(embedding) == fault_class

    def update(self, embedding: np.ndarray, fault_class: int) -> bool:
        """Pull prototype fault_class toward the embedding, but only when
        that prototype is already the embedding's nearest. Returns whether
        an update happened."""
        if not 1 <= fault_class <= self.c:
            raise ParameterError(f"fault class must be in 1..{self.c}, got {fault_class}")
        if not self.nearest_is(embedding, fault_class):
            return False
        emb = np.asarray(embedding, dtype=np.float32).reshape(-1)
        j = fault_class
        self.values[j] = (1.0 - self.alpha) * self.values[j] + self.alpha * emb
        return True

    def decay_alpha(self) -> None:
        """Shrink the update rate once per training interval."""
        self.alpha *= (1.0 - self.alpha_decay)

    # -- serialization ---------------------------------------------------
    def state(self) -> dict:
        return {
            "c": self.c,
            "embed_dim": self.embed_dim,
            "alpha": self.alpha,
            "alpha_decay": self.alpha_decay,
            "values": [[float(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_state(cls, state: dict) -> "PrototypeSet":
        obj = cls(int(state["c"]), int(state["embed_dim"]), rng=None,
                  alpha=float(state["alpha"]), alpha_decay=float(state["alpha_decay"]))
        values = np.asarray(state["values"], dtype=np.float32)
        if values.shape != (obj.c + 1, obj.embed_dim):
            raise ShapeError(
                f"prototype state shape {values.shape} does not match ({obj.c + 1}, {obj.embed_dim})")
        obj.values = values
        return obj
