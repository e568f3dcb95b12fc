"""Parameter update rules."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ConfigError


def _check_params(params):
    params = list(params)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ConfigError(f"duplicate parameter names: {dupes}")
    return params


class Sgd:
    """Plain stochastic gradient descent: p -= lr * grad."""

    def __init__(self, params, lr):
        self.params = _check_params(params)
        self.lr = float(lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for p in self.params:
            if p.grad is None:
                continue
            p.data -= self.lr * p.grad


class Adam:
    """Adam with bias correction (Kingma & Ba defaults)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigError(f"betas must be in [0, 1), got {beta1}, {beta2}")
        self.params = _check_params(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p in self.params:
            if p.grad is None:
                continue
            kernels.adam_update(
                p.data, p.grad, self._m[p.name], self._v[p.name],
                self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
            )
