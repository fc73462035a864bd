"""Per-host fault encoder.

Two parallel views of the metrics window are fused by host-level attention:
a graph encoding over the migration topology (hosts plus one global node)
and a GRU over the window's time axis. Two shared feed-forward heads decode
each host row into a 2-way fault score and a prototype embedding, so the
learned weights are independent of the host count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelDims
from .errors import ShapeError
from .optim import Parameter

NEG_INF = -1e9
ATTN_INIT_GAIN = 3.0  # sharpens initial self-attention in the fusion stage


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def schedule_view(schedule: np.ndarray, width: int) -> np.ndarray:
    """Per-host occupancy features derived from a placement matrix.

    Row h is the unit-normalized task-occupancy vector of host h, padded or
    truncated to a fixed width so the attention weights do not depend on the
    number of live tasks. Hosts with disjoint task sets get orthogonal rows,
    which keeps host identity recoverable by the fusion attention."""
    schedule = np.asarray(schedule, dtype=np.float32)
    p, m = schedule.shape
    out = np.zeros((m, width), dtype=np.float32)
    if p == 0:
        return out
    occ = schedule.T
    norms = np.sqrt((occ * occ).sum(axis=1, keepdims=True))
    occ = occ / np.maximum(norms, 1.0)
    keep = min(p, width)
    out[:, :keep] = occ[:, :keep]
    return out


def adjacency(m: int, edges) -> np.ndarray:
    """Attention mask over m hosts plus a global node at index m.

    Every node attends itself, every host attends the global node, the
    global node attends everyone, and a migration src->dst lets dst attend
    src."""
    a = np.eye(m + 1, dtype=np.float64)
    a[:, m] = 1.0
    a[m, :] = 1.0
    for src, dst in edges:
        if not (0 <= src < m and 0 <= dst < m):
            raise ShapeError(f"migration edge ({src}, {dst}) outside 0..{m - 1}")
        a[dst, src] = 1.0
    return a


def migration_edges(prev_hosts, schedule: np.ndarray) -> list[tuple[int, int]]:
    """Edges implied by a proposed schedule against current placements."""
    edges = []
    for prev, row in zip(prev_hosts, np.asarray(schedule)):
        if prev is None:
            continue
        target = int(np.argmax(row))
        if target != prev:
            edges.append((int(prev), target))
    return edges


@dataclass
class EncoderOutput:
    detect: Tensor  # (m, 2) softmax rows: [no-fault, fault]
    embed: Tensor  # (m, E) sigmoid embeddings
    fault_mask: np.ndarray  # (m,) bool, detect[:,1] >= detect[:,0]
    fault_embedding: Tensor  # (m, E), embed masked to predicted-faulty rows
    attention: np.ndarray  # (m, m) fused attention, mean over heads
    carry: np.ndarray  # (m, hidden) detached GRU state for the next interval


def build_fault_embedding(detect: Tensor, embed: Tensor) -> tuple[Tensor, np.ndarray]:
    """Mask embedding rows to hosts whose fault score wins (ties count as
    faulty). Gradients flow through kept rows only."""
    mask = detect.data[:, 1] >= detect.data[:, 0]
    gate = Tensor(mask[:, None].astype(np.float32))
    return ad.mul(embed, gate), mask


class FaultEncoder:
    """Window + schedule -> per-host fault scores and prototype embeddings."""

    def __init__(self, n: int, k: int, dims: ModelDims, rng: np.random.Generator):
        self.n = n
        self.k = k
        self.dims = dims
        d = dims.hidden
        head = dims.fused // dims.heads
        self.params: list[Parameter] = []

        def par(name, shape=None, init=None):
            data = glorot(rng, shape) if init is None else init
            p = Parameter(name, data)
            self.params.append(p)
            return p

        self.gat_weight = par("gat.weight", (k * n, d))
        self.gat_attn = par("gat.attn", (2 * d, 1))
        self.gru = {
            gate: {
                "w": par(f"gru.w_{gate}", (n + d, d)),
                "b": par(f"gru.b_{gate}", init=np.zeros(d, dtype=np.float32)),
            }
            for gate in ("z", "r", "n")
        }
        # Query and key projections start as one shared, gain-scaled draw so
        # each host's initial attention mass sits on its own (near-orthogonal)
        # occupancy row; the projections are free to diverge during training.
        self.fuse_heads = []
        for i in range(dims.heads):
            shared_qk = ATTN_INIT_GAIN * glorot(rng, (dims.fused, head))
            self.fuse_heads.append({
                "wq": par(f"fuse.h{i}.wq", init=shared_qk.copy()),
                "wk": par(f"fuse.h{i}.wk", init=shared_qk.copy()),
                "wv": par(f"fuse.h{i}.wv", (2 * d, head)),
            })
        self.detect_head = self._ff("detect", dims.fused, dims.ff_hidden, 2, par)
        self.embed_head = self._ff("embed", dims.fused, dims.ff_hidden, dims.embed, par)
        # recurrent carry storage; the control loop owns the live value
        self.carry: np.ndarray | None = None

    @staticmethod
    def _ff(name, w_in, w_hidden, w_out, par):
        return {
            "w1": par(f"{name}.w1", (w_in, w_hidden)),
            "b1": par(f"{name}.b1", init=np.zeros(w_hidden, dtype=np.float32)),
            "w2": par(f"{name}.w2", (w_hidden, w_out)),
            "b2": par(f"{name}.b2", init=np.zeros(w_out, dtype=np.float32)),
        }

    def init_carry(self, m: int) -> np.ndarray:
        return np.zeros((m, self.dims.hidden), dtype=np.float32)

    # ------------------------------------------------------------------
    def forward(self, window: np.ndarray, schedule: np.ndarray,
                carry: np.ndarray | None = None, edges=()) -> EncoderOutput:
        window = np.asarray(window, dtype=np.float32)
        if window.ndim != 3 or window.shape[0] != self.k or window.shape[2] != self.n:
            raise ShapeError(f"window shape {window.shape} does not match (k={self.k}, m, n={self.n})")
        m = window.shape[1]
        if carry is None:
            carry = self.init_carry(m)
        if carry.shape != (m, self.dims.hidden):
            raise ShapeError(f"carry shape {carry.shape} does not match ({m}, {self.dims.hidden})")

        graph_enc = self._graph_encode(window, m, edges)
        seq_enc, new_carry = self._sequence_encode(window, carry)
        fused, attn = self._fuse(schedule, graph_enc, seq_enc, m)
        detect, embed = self._decode(fused)
        fault_embedding, mask = build_fault_embedding(detect, embed)
        return EncoderOutput(
            detect=detect,
            embed=embed,
            fault_mask=mask,
            fault_embedding=fault_embedding,
            attention=attn,
            carry=new_carry,
        )

    def _graph_encode(self, window: np.ndarray, m: int, edges) -> Tensor:
        feats = window.transpose(1, 0, 2).reshape(m, self.k * self.n)
        nodes = np.concatenate([feats, feats.mean(axis=0, keepdims=True)], axis=0)
        z = ad.matmul(Tensor(nodes), self.gat_weight.tensor)
        d = self.dims.hidden
        a_src = ad.rows(self.gat_attn.tensor, 0, d)
        a_dst = ad.rows(self.gat_attn.tensor, d, 2 * d)
        scores = ad.leaky_relu(ad.add(ad.matmul(z, a_src), ad.transpose(ad.matmul(z, a_dst))))
        mask_bias = Tensor((1.0 - adjacency(m, edges)) * NEG_INF)
        alpha = ad.softmax(ad.add(scores, mask_bias), axis=1)
        agg = ad.sigmoid(ad.scale(ad.matmul(alpha, z), 1.0 / self.n))
        return ad.rows(agg, 0, m)

    def _sequence_encode(self, window: np.ndarray, carry: np.ndarray) -> tuple[Tensor, np.ndarray]:
        params = {
            "w_z": self.gru["z"]["w"].tensor, "b_z": self.gru["z"]["b"].tensor,
            "w_r": self.gru["r"]["w"].tensor, "b_r": self.gru["r"]["b"].tensor,
            "w_n": self.gru["n"]["w"].tensor, "b_n": self.gru["n"]["b"].tensor,
        }
        h = Tensor(carry)
        for t in range(self.k):
            h = ad.gru_cell(Tensor(window[t]), h, params)
        return h, np.asarray(h.data, dtype=np.float32).copy()

    def _fuse(self, schedule: np.ndarray, graph_enc: Tensor, seq_enc: Tensor,
              m: int) -> tuple[Tensor, np.ndarray]:
        view = Tensor(schedule_view(schedule, self.dims.fused))
        values = ad.concat([graph_enc, seq_enc], axis=1)
        heads = [
            {"wq": h["wq"].tensor, "wk": h["wk"].tensor, "wv": h["wv"].tensor}
            for h in self.fuse_heads
        ]
        fused, weights = ad.multi_head_attention(view, view, values, heads)
        return fused, np.mean(np.stack(weights), axis=0)

    def _decode(self, fused: Tensor) -> tuple[Tensor, Tensor]:
        dh = self.detect_head
        hid = ad.relu(ad.linear(fused, dh["w1"].tensor, dh["b1"].tensor))
        detect = ad.softmax(ad.linear(hid, dh["w2"].tensor, dh["b2"].tensor), axis=1)
        eh = self.embed_head
        hid2 = ad.relu(ad.linear(fused, eh["w1"].tensor, eh["b1"].tensor))
        embed = ad.sigmoid(ad.linear(hid2, eh["w2"].tensor, eh["b2"].tensor))
        return detect, embed
