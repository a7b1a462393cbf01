"""Adaptive-moment optimizer for the adversarial training loop."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam"]


class Adam:
    """Adam with GAN-convention decay rates (0.5, 0.999).

    Deterministic: identical parameters, gradients and state produce
    identical updates. A NaN gradient aborts immediately, naming the
    offending parameter, rather than silently corrupting the model.
    """

    def __init__(self, params, lr=1e-5, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                name = p.name or f"parameter #{i} with shape {p.data.shape}"
                raise FloatingPointError(f"non-finite gradient in {name}")
            self.m[i] *= self.beta1
            self.m[i] += (1.0 - self.beta1) * g
            self.v[i] *= self.beta2
            self.v[i] += (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
