"""Adam with decoupled weight decay on convolution kernels."""
from __future__ import annotations

from typing import Dict

import numpy as np

from hpunet.model.params import ParameterStore


def decays(name: str) -> bool:
    """Only kernels decay; every bias (including the latent heads') is exempt."""
    return name.endswith("/kernel")


class AdamW:
    def __init__(self, params: ParameterStore, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 1e-5) -> None:
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v: Dict[str, np.ndarray] = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self, params: ParameterStore, lr: float) -> None:
        """Apply one update from each parameter's `.grad`, in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            if p.grad is None:
                raise ValueError(f"Parameter {name} has no gradient")
            g = p.grad.astype(p.data.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            if self.weight_decay and decays(name):
                update = update + self.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype)
            p.grad = None

    def load_state(self, arrays: Dict[str, np.ndarray], t: int) -> None:
        for name in self.m:
            self.m[name] = np.array(arrays[f"adam_m/{name}"], dtype=self.m[name].dtype)
            self.v[name] = np.array(arrays[f"adam_v/{name}"], dtype=self.v[name].dtype)
        self.t = int(t)
