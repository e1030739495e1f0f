"""First-order optimizers on flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

OPTIMIZERS = ("sgd", "rmsprop")


@dataclass
class OptimizerConfig:
    kind: str = "rmsprop"
    lr: float = 0.01
    decay: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise UsageError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lr < 0:
            raise UsageError("learning rate must be non-negative")
        if not 0 < self.decay < 1:
            raise UsageError("decay must lie in (0, 1)")


class Optimizer:
    """Stateful SGD / RMSProp step on a flat parameter vector."""

    def __init__(self, config: OptimizerConfig, size: int):
        self.config = config
        self.r = np.zeros(size)

    def direction(self, g) -> np.ndarray:
        c = self.config
        if c.kind == "sgd":
            return g
        self.r = c.decay * self.r + (1 - c.decay) * g * g
        return g / (np.sqrt(self.r) + c.eps)

    def step(self, theta, g) -> np.ndarray:
        return theta - self.config.lr * self.direction(g)
