"""Adam with decoupled weight decay, plus the staircase LR schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant decay: lr(e) = initial * factor ** (e // period)."""

    initial_lr: float = 1e-5
    decay_factor: float = 0.5
    decay_period: int = 20

    def lr_at_epoch(self, epoch: int) -> float:
        if epoch < 0:
            raise ConfigError(f"epoch must be non-negative, got {epoch}")
        return self.initial_lr * self.decay_factor ** (epoch // self.decay_period)


def lr_at_epoch(schedule: LrSchedule, epoch: int) -> float:
    return schedule.lr_at_epoch(epoch)


class Adam:
    """Adam with bias correction and decoupled weight decay.

    Weight decay shrinks the parameter directly (p -= lr * wd * p) before
    the moment-based update, keeping the decay independent of the adaptive
    scaling.
    """

    def __init__(self, params, lr=1e-5, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-3):
        self.params = list(params)
        if not self.params:
            raise ConfigError("optimizer needs at least one parameter")
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                raise ConfigError("parameter has no gradient; run backward first")
            if g.shape != p.data.shape:
                raise ConfigError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"shape {p.data.shape}"
                )
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
