from __future__ import annotations

import numpy as np

from .params import ParamStore


class Adam:
    """Adam with bias correction; moments live alongside the store."""

    def __init__(self, params: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def adam_step(params: ParamStore, optimizer: Adam | None = None, lr: float = 1e-3, **kw) -> Adam:
    """One Adam update of ``params``; pass back the returned optimizer to keep its state."""
    if optimizer is None:
        optimizer = Adam(params, lr=lr, **kw)
    optimizer.step()
    return optimizer
