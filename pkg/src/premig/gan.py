"""Migration proposal network and its schedule critic.

The generator attends each task's placement row over the masked fault
embeddings and emits a bounded placement shift; adding the shift to the
current placement scores gives the proposed schedule. The critic maps
summary features of (current, proposed) to a 2-way preference softmax and
is trained online against short replay simulations, after which it stands
in for the simulator at decision time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelDims, TrainingConfig
from .encoder import glorot
from .errors import ShapeError
from .optim import Parameter, adamw_step, zero_grads

LOG_EPS = 1e-12


class MigrationGenerator:
    """Proposes a continuous schedule shift from placements and fault
    embeddings. Weights are tied to the host count m."""

    def __init__(self, m: int, embed_dim: int, dims: ModelDims,
                 rng: np.random.Generator):
        self.m = m
        self.embed_dim = embed_dim
        self.dims = dims
        head = dims.fused // dims.heads
        self.params: list[Parameter] = []

        def par(name, shape=None, init=None):
            data = glorot(rng, shape) if init is None else init
            p = Parameter(name, data)
            self.params.append(p)
            return p

        self.heads = [
            {
                "wq": par(f"gen.h{i}.wq", (m, head)),
                "wk": par(f"gen.h{i}.wk", (embed_dim, head)),
                "wv": par(f"gen.h{i}.wv", (embed_dim, head)),
            }
            for i in range(dims.heads)
        ]
        self.out_proj = par("gen.out", (dims.heads * head, m))
        self.ln_gain = par("gen.ln_gain", init=np.ones(m, dtype=np.float32))
        self.ln_bias = par("gen.ln_bias", init=np.zeros(m, dtype=np.float32))

    def forward(self, schedule: np.ndarray, fault_embedding: Tensor
                ) -> tuple[Tensor, Tensor]:
        """(proposed scores N, shift) for a (p, m) placement one-hot."""
        schedule = np.asarray(schedule, dtype=np.float32)
        if schedule.ndim != 2 or schedule.shape[1] != self.m:
            raise ShapeError(f"schedule shape {schedule.shape} does not match m={self.m}")
        if fault_embedding.shape != (self.m, self.embed_dim):
            raise ShapeError(
                f"fault embedding shape {fault_embedding.shape} does not match "
                f"({self.m}, {self.embed_dim})")
        s = Tensor(schedule)
        if schedule.shape[0] == 0:
            zero = Tensor(np.zeros_like(schedule))
            return s, zero
        heads = [
            {"wq": h["wq"].tensor, "wk": h["wk"].tensor, "wv": h["wv"].tensor}
            for h in self.heads
        ]
        ctx, _ = ad.multi_head_attention(s, fault_embedding, fault_embedding, heads)
        pre = ad.add(s, ad.matmul(ctx, self.out_proj.tensor))
        shift = ad.tanh(ad.layer_norm(pre, self.ln_gain.tensor, self.ln_bias.tensor))
        return ad.add(s, shift), shift


class ScheduleDiscriminator:
    """Scores a (current, proposed) schedule pair: softmax [keep, adopt]."""

    def __init__(self, m: int, dims: ModelDims, rng: np.random.Generator):
        self.m = m
        self.feature_dim = 2 * m + 3
        self.params: list[Parameter] = []

        def par(name, shape=None, init=None):
            data = glorot(rng, shape) if init is None else init
            p = Parameter(name, data)
            self.params.append(p)
            return p

        self.w1 = par("disc.w1", (self.feature_dim, dims.ff_hidden))
        self.b1 = par("disc.b1", init=np.zeros(dims.ff_hidden, dtype=np.float32))
        self.w2 = par("disc.w2", (dims.ff_hidden, 2))
        self.b2 = par("disc.b2", init=np.zeros(2, dtype=np.float32))

    def features(self, schedule: np.ndarray, proposed: Tensor) -> Tensor:
        """(1, 2m+3) summary: incumbent retention, peak decisiveness,
        switch margin, per-host load shift, and current per-host load."""
        schedule = np.asarray(schedule, dtype=np.float32)
        p = schedule.shape[0]
        if p == 0:
            return Tensor(np.zeros((1, self.feature_dim), dtype=np.float32))
        if proposed.shape != schedule.shape:
            raise ShapeError(
                f"proposed shape {proposed.shape} does not match schedule {schedule.shape}")
        s = Tensor(schedule)
        incumbent = ad.tsum(ad.mul(proposed, s), axis=1, keepdims=True)  # (p, 1)
        inc_mean = ad.tmean(incumbent, axis=0, keepdims=True)  # (1, 1)
        peak = ad.reshape(ad.max_along(proposed, axis=1), (p, 1))
        peak_mean = ad.tmean(peak, axis=0, keepdims=True)
        margin = ad.sub(peak_mean, inc_mean)
        load_new = ad.tmean(ad.softmax(proposed, axis=1), axis=0, keepdims=True)  # (1, m)
        load_cur = schedule.mean(axis=0, keepdims=True)
        shift = ad.sub(load_new, Tensor(load_cur))
        return ad.concat([inc_mean, peak_mean, margin, shift, Tensor(load_cur)], axis=1)

    def forward(self, schedule: np.ndarray, proposed: Tensor) -> Tensor:
        phi = self.features(schedule, proposed)
        hidden = ad.relu(ad.linear(phi, self.w1.tensor, self.b1.tensor))
        return ad.softmax(ad.linear(hidden, self.w2.tensor, self.b2.tensor), axis=1)


def compose_schedule(scores: np.ndarray, incumbent: np.ndarray) -> np.ndarray:
    """Turn continuous placement scores into a one-hot schedule.

    Each task goes to its highest-scoring host; when several hosts tie, the
    task stays where it is if its current host is among them, otherwise the
    lowest-index tied host wins."""
    scores = np.asarray(scores)
    incumbent = np.asarray(incumbent)
    if scores.shape != incumbent.shape:
        raise ShapeError(
            f"scores shape {scores.shape} does not match incumbent {incumbent.shape}")
    out = np.zeros_like(incumbent, dtype=np.float64)
    for t in range(scores.shape[0]):
        row = scores[t]
        tied = np.nonzero(row == row.max())[0]
        cur = int(np.argmax(incumbent[t]))
        target = cur if cur in tied else int(tied[0])
        out[t, target] = 1.0
    return out


def select_schedule(current: np.ndarray, proposed: np.ndarray,
                    decision: np.ndarray) -> tuple[np.ndarray, bool]:
    """Adopt the proposal when its critic score is at least the keep
    score."""
    decision = np.asarray(decision).reshape(-1)
    if decision.shape != (2,):
        raise ShapeError(f"decision must have 2 entries, got shape {decision.shape}")
    chose_new = bool(decision[1] >= decision[0])
    return (proposed if chose_new else current), chose_new


@dataclass
class DecisionRecord:
    """One interval's migration decision, as seen at decision time."""

    interval: int
    fault_predicted: bool
    d: tuple[float, float] | None  # critic softmax [keep, adopt], pre-update
    chose_new: bool
    sim_current: float | None = None  # replay scores when supervision ran
    sim_proposed: float | None = None
    migrations: int = 0

    def to_dict(self) -> dict:
        return {
            "interval": self.interval,
            "fault_predicted": self.fault_predicted,
            "d": None if self.d is None else [self.d[0], self.d[1]],
            "chose_new": self.chose_new,
            "sim_current": self.sim_current,
            "sim_proposed": self.sim_proposed,
            "migrations": self.migrations,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "DecisionRecord":
        d = row.get("d")
        return cls(
            interval=int(row["interval"]),
            fault_predicted=bool(row["fault_predicted"]),
            d=None if d is None else (float(d[0]), float(d[1])),
            chose_new=bool(row["chose_new"]),
            sim_current=row.get("sim_current"),
            sim_proposed=row.get("sim_proposed"),
            migrations=int(row.get("migrations", 0)),
        )


def _pick(d: Tensor, column: int) -> Tensor:
    sel = np.zeros((1, 2), dtype=np.float32)
    sel[0, column] = 1.0
    return ad.tsum(ad.mul(d, Tensor(sel)))


def _branch_loss(d: Tensor, win_column: int, m: int) -> Tensor:
    """-(m/2) * (log d[win] + log(1 - d[lose])) with a numeric floor."""
    win = _pick(d, win_column)
    lose = _pick(d, 1 - win_column)
    log_win = ad.log(ad.add_const(win, LOG_EPS))
    log_not_lose = ad.log(ad.add_const(ad.neg(lose), 1.0 + LOG_EPS))
    return ad.scale(ad.neg(ad.add(log_win, log_not_lose)), m / 2.0)


def discriminator_loss(d: Tensor, proposed_wins: bool, m: int) -> Tensor:
    """Push the critic toward whichever side the replay simulation favored."""
    return _branch_loss(d, 1 if proposed_wins else 0, m)


def generator_loss(d: Tensor, m: int) -> Tensor:
    """Push the generator toward proposals the critic would adopt."""
    return _branch_loss(d, 1, m)


@dataclass
class GanStepStats:
    disc_loss: float
    gen_loss: float
    proposed_wins: bool
    d_detached: tuple[float, float]
    d_live: tuple[float, float]


def gan_training_step(gen: MigrationGenerator, disc: ScheduleDiscriminator,
                      schedule: np.ndarray, fault_embedding: np.ndarray,
                      sim_current: float, sim_proposed: float,
                      tcfg: TrainingConfig) -> GanStepStats:
    """One online adversarial update.

    The critic first trains on a detached proposal against the replay
    verdict; the generator then trains through the freshly updated critic.
    Only the generator moves in the second phase."""
    m = gen.m
    ef = Tensor(np.asarray(fault_embedding, dtype=np.float32))
    proposed_wins = bool(sim_proposed >= sim_current)

    live, _ = gen.forward(schedule, ef)
    detached = Tensor(np.array(live.data, copy=True))
    d_detached = disc.forward(schedule, detached)
    loss_d = discriminator_loss(d_detached, proposed_wins, m)
    zero_grads(disc.params)
    ad.backward(loss_d)
    adamw_step(disc.params, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
               eps=tcfg.eps, weight_decay=tcfg.weight_decay)

    d_live = disc.forward(schedule, live)
    loss_g = generator_loss(d_live, m)
    zero_grads(gen.params)
    zero_grads(disc.params)
    ad.backward(loss_g)
    adamw_step(gen.params, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
               eps=tcfg.eps, weight_decay=tcfg.weight_decay)

    return GanStepStats(
        disc_loss=float(loss_d.data),
        gen_loss=float(loss_g.data),
        proposed_wins=proposed_wins,
        d_detached=(float(d_detached.data[0, 0]), float(d_detached.data[0, 1])),
        d_live=(float(d_live.data[0, 0]), float(d_live.data[0, 1])),
    )
