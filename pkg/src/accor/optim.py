"""Adam and momentum SGD acting on real and imaginary parts independently."""

from __future__ import annotations

import numpy as np

from .ctensor import Tensor


def _real_view(arr: np.ndarray) -> np.ndarray:
    # complex arrays are updated through their interleaved float64 view
    return arr.view(np.float64) if np.iscomplexobj(arr) else arr


class Optimizer:
    def __init__(self, params: dict[str, Tensor], lr: float):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.lr = float(lr)

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            value = p.data.copy()
            self._update(name, _real_view(value), _real_view(np.ascontiguousarray(p.grad, dtype=value.dtype)))
            p.data = value
            p.grad = None


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        super().step()

    def _update(self, name, value, grad):
        m = self.m.setdefault(name, np.zeros_like(value))
        v = self.v.setdefault(name, np.zeros_like(value))
        m *= self.beta1
        m += (1 - self.beta1) * grad
        v *= self.beta2
        v += (1 - self.beta2) * grad * grad
        m_hat = m / (1 - self.beta1**self.t)
        v_hat = v / (1 - self.beta2**self.t)
        value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD(Optimizer):
    """Heavy-ball momentum: ``b <- mu*b + g``; ``p <- p - lr*b``."""

    def __init__(self, params, lr: float = 1e-3, momentum: float = 0.9):
        super().__init__(params, lr)
        self.momentum = momentum
        self.buf: dict[str, np.ndarray] = {}

    def _update(self, name, value, grad):
        b = self.buf.get(name)
        if b is None:
            b = self.buf[name] = grad.copy()
        else:
            b *= self.momentum
            b += grad
        value -= self.lr * b


def make_optimizer(kind: str, params, lr: float) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
