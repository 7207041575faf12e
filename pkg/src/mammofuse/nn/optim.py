"""Training hyperparameters, ADAM, LR schedule, and the unfreezing plan."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter in one validated record."""

    epochs: int = 25
    batch_size: int = 32
    base_lr: float = 1e-4
    weight_decay: float = 1e-3
    label_smooth: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sched_T: int = 10
    sched_gamma: float = 0.1
    unfreeze_epochs: tuple[int, ...] = (4, 10, 14)
    stage_lr_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.sched_T < 1:
            raise ValueError("epochs, batch_size and sched_T must be positive")
        if self.base_lr <= 0.0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.label_smooth < 1.0:
            raise ValueError("label_smooth must lie in [0, 1)")
        if self.unfreeze_epochs and self.epochs <= max(self.unfreeze_epochs):
            raise ValueError("epochs must exceed the last unfreeze epoch")
        if list(self.unfreeze_epochs) != sorted(self.unfreeze_epochs):
            raise ValueError("unfreeze_epochs must be nondecreasing")
        object.__setattr__(self, "unfreeze_epochs", tuple(self.unfreeze_epochs))


def smooth_label(y: int, eps: float) -> float:
    """Symmetric label smoothing: y * (1 - eps) + eps / 2."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    return y * (1.0 - eps) + eps / 2.0


def bce_with_logits(logit, target):
    """Numerically stable binary cross entropy on raw logits.

    loss = max(logit, 0) - logit * target + log(1 + exp(-|logit|)).
    Accepts scalars or arrays; the gradient wrt the logit is
    sigmoid(logit) - target.
    """
    logit = np.asarray(logit, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if np.any((target < 0.0) | (target > 1.0)):
        raise ValueError("targets must lie in [0, 1]")
    loss = np.maximum(logit, 0.0) - logit * target + np.log1p(np.exp(-np.abs(logit)))
    return float(loss) if loss.ndim == 0 else loss


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class AdamState:
    """First/second moment estimates and the step counter for one parameter group."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
) -> None:
    """One in-place ADAM update over a named group of parameter arrays.

    Weight decay is the classic L2 form, added to the gradient before the
    moment updates (g <- g + weight_decay * param).
    """
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Cosine annealing with restarts every sched_T epochs.

    The floor is sched_gamma * base_lr; each period starts back at base_lr.
    """
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    eta_min = cfg.sched_gamma * cfg.base_lr
    phase = (epoch % cfg.sched_T) / cfg.sched_T
    return eta_min + (cfg.base_lr - eta_min) * (1.0 + math.cos(math.pi * phase)) / 2.0


def unfreeze_plan(
    epoch: int, cfg: TrainConfig, n_stages: int, setup_name: str
) -> dict[str, float]:
    """Learning-rate multiplier per parameter group at this epoch (0 = frozen).

    The head always trains at multiplier 1. The stem joins at epoch 0 for
    every setup except "baseline" and "frozen" (it must adapt to packed
    input channels). Stages unfreeze deepest-first at cfg.unfreeze_epochs
    with multipliers scaled down by stage_lr_scale at each step; stages
    beyond the schedule stay frozen. The "frozen" setup trains the head
    only, forever.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be positive")
    plan = {"stem": 0.0}
    plan.update({f"stage{i}": 0.0 for i in range(n_stages)})
    plan["head"] = 1.0
    if setup_name == "frozen":
        return plan
    if setup_name != "baseline":
        plan["stem"] = 1.0
    mult = 1.0
    for depth, start_epoch in enumerate(cfg.unfreeze_epochs):
        mult *= cfg.stage_lr_scale
        stage_idx = n_stages - 1 - depth
        if stage_idx < 0:
            break
        if epoch >= start_epoch:
            plan[f"stage{stage_idx}"] = mult
    return plan
