"""Adam with bias correction, keyed by parameter name."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .autodiff import Parameter

__all__ = ["AdamState", "adam_step", "zero_grads"]


class AdamState:
    """First/second-moment accumulators for a fixed set of parameters."""

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        params = list(params)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}


def adam_step(params: Iterable[Parameter], state: AdamState) -> None:
    """One bias-corrected Adam update. Gradients are left untouched."""
    state.t += 1
    t = state.t
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p in params:
        g = p.grad
        m = state.m[p.name] = state.beta1 * state.m[p.name] + (1.0 - state.beta1) * g
        v = state.v[p.name] = state.beta2 * state.v[p.name] + (1.0 - state.beta2) * g * g
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0
