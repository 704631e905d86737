"""Adam with bias correction and an exponentially decaying learning rate."""

from __future__ import annotations

import numpy as np


def exponential_lr(lr_init: float, lr_decay: float, epoch: int) -> float:
    """Learning rate at a zero-based epoch index: lr_init * lr_decay**epoch."""
    return lr_init * lr_decay**epoch


class Adam:
    """Standard Adam; mutates the parameter arrays it was given in place."""

    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        b1 = np.asarray(self.beta1)
        b2 = np.asarray(self.beta2)
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} does not match {p.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= b1.astype(p.dtype)
            m += (1 - b1).astype(p.dtype) * g
            v *= b2.astype(p.dtype)
            v += (1 - b2).astype(p.dtype) * g * g
            m_hat = m / np.asarray(1 - b1**t, dtype=p.dtype)
            v_hat = v / np.asarray(1 - b2**t, dtype=p.dtype)
            p -= np.asarray(lr, dtype=p.dtype) * m_hat / (np.sqrt(v_hat) + np.asarray(self.eps, dtype=p.dtype))
