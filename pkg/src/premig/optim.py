"""Parameters, decoupled-weight-decay Adam, and finite-difference checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, backward


class Parameter:
    """A named trainable tensor plus its Adam moment buffers."""

    __slots__ = ("name", "tensor", "m", "v", "step_count")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self.m = np.zeros_like(self.tensor.data)
        self.v = np.zeros_like(self.tensor.data)
        self.step_count = 0

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.tensor.shape})"


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.tensor.grad = None


def adamw_step(
    params: Sequence[Parameter],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-2,
) -> None:
    """One AdamW update: decay is decoupled and applied before the Adam move."""
    lr32 = np.float32(lr)
    for p in params:
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(p.tensor.data)
        g = np.asarray(g, dtype=np.float32)
        p.step_count += 1
        t = p.step_count
        if weight_decay:
            p.tensor.data *= np.float32(1.0 - lr * weight_decay)
        p.m = np.float32(beta1) * p.m + np.float32(1.0 - beta1) * g
        p.v = np.float32(beta2) * p.v + np.float32(1.0 - beta2) * (g * g)
        mhat = p.m / np.float32(1.0 - beta1**t)
        vhat = p.v / np.float32(1.0 - beta2**t)
        p.tensor.data -= lr32 * mhat / (np.sqrt(vhat) + np.float32(eps))


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def lines(self) -> list[str]:
        out = []
        for name in sorted(self.per_param):
            err = self.per_param[name]
            mark = "ok" if err <= self.tolerance else "FAIL"
            out.append(f"{name:<40s} rel_err={err:.3e} {mark}")
        return out


def grad_check(
    build_loss: Callable[[], Tensor],
    params: Sequence[Parameter],
    step: float = 1e-3,
    tolerance: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    The closure must rebuild the loss from scratch on every call and must be
    deterministic. Parameters are temporarily promoted to float64 so the
    finite differences are not drowned in float32 rounding; the original
    float32 values are restored afterwards.
    """
    saved = [p.tensor.data for p in params]
    try:
        for p in params:
            p.tensor.data = p.tensor.data.astype(np.float64)
        zero_grads(params)
        loss = build_loss()
        backward(loss)
        analytic = {
            p.name: np.array(
                p.tensor.grad if p.tensor.grad is not None else np.zeros_like(p.tensor.data),
                dtype=np.float64,
            )
            for p in params
        }
        report = GradCheckReport(tolerance=tolerance, step=step)
        for p in params:
            flat = p.tensor.data.reshape(-1)
            fd = np.zeros(flat.size, dtype=np.float64)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(build_loss().data)
                flat[i] = orig - step
                lo = float(build_loss().data)
                flat[i] = orig
                fd[i] = (hi - lo) / (2.0 * step)
            a = analytic[p.name].reshape(-1)
            denom = max(float(np.max(np.abs(a))), float(np.max(np.abs(fd))), 1e-3)
            report.per_param[p.name] = float(np.max(np.abs(a - fd)) / denom)
        return report
    finally:
        for p, data in zip(params, saved):
            p.tensor.data = data
