import numpy as np

from .params import ParamSet


class Adam:
    """Adam with bias-corrected moments; state is keyed by parameter name."""

    def __init__(self, params: ParamSet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(v.data) for n, v in params.items()}
        self.v = {n: np.zeros_like(v.data) for n, v in params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(optimizer: Adam, lr: float | None = None):
    if lr is not None:
        optimizer.lr = lr
    optimizer.step()


def decayed_lr(epoch: int, n_epochs: int, lr_start=1e-3, lr_end=1e-4) -> float:
    """Per-epoch exponential decay; epoch 0 uses ``lr_start``, the last epoch ``lr_end``."""
    if n_epochs <= 1:
        return lr_start
    return lr_start * (lr_end / lr_start) ** (epoch / (n_epochs - 1))
