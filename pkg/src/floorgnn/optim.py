"""Adam and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfigError, ShapeError


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 0.004
    step_size: int = 10
    gamma: float = 0.8

    def __post_init__(self):
        if not self.base_lr >= 0:
            raise BadConfigError("base_lr must be non-negative")
        if not 0 < self.gamma <= 1:
            raise BadConfigError("gamma must lie in (0, 1]")
        if self.step_size < 1:
            raise BadConfigError("step_size must be >= 1")


def lr_at_epoch(s: LrSchedule, epoch: int) -> float:
    """``base_lr * gamma ** (epoch // step_size)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return s.base_lr * s.gamma ** (epoch // s.step_size)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": [a.tolist() for a in self.m],
            "v": [a.tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, doc) -> "AdamState":
        return cls(
            doc["beta1"],
            doc["beta2"],
            doc["eps"],
            int(doc["t"]),
            [np.array(a, dtype=np.float64) for a in doc["m"]],
            [np.array(a, dtype=np.float64) for a in doc["v"]],
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeError("one gradient per parameter required")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer state does not match parameter list")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for k, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape or state.m[k].shape != p.data.shape:
            raise ShapeError(f"parameter {k}: shape {p.data.shape} vs gradient {g.shape}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state

