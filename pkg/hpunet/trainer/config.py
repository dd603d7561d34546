"""Training hyper-parameters."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from hpunet.errors import ConfigError

OBJECTIVES = ("geco", "elbo")

DEFAULT_SCHEDULE: Tuple[Tuple[int, float], ...] = ((0, 1e-3), (3000, 5e-4), (4000, 2.5e-4))


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 8
    lr_schedule: Tuple[Tuple[int, float], ...] = DEFAULT_SCHEDULE
    weight_decay: float = 1e-5
    objective: str = "geco"
    beta: float = 1.0
    kappa: float = 0.05
    # 1.0 disables top-k masking
    topk_k: float = 0.02
    seed: int = 0
    eval_every: int = 10
    checkpoint_every: int = 1000
    geco_lambda_init: float = 1.0
    geco_ema_decay: float = 0.99
    geco_step_size: float = 1e-2
    geco_lambda_min: float = 1e-6
    geco_lambda_max: float = 1e6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    augment: bool = True
    max_translation: int = 2

    def validate(self) -> "TrainConfig":
        if self.iterations < 0:
            raise ConfigError(f"train.iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if not self.lr_schedule:
            raise ConfigError("train.lr_schedule must not be empty")
        steps = [s for s, _ in self.lr_schedule]
        if steps[0] != 0:
            raise ConfigError(f"train.lr_schedule must start at step 0, starts at {steps[0]}")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigError(f"train.lr_schedule steps must be strictly increasing: {steps}")
        if any(v <= 0 for _, v in self.lr_schedule):
            raise ConfigError("train.lr_schedule values must be positive")
        if self.weight_decay < 0:
            raise ConfigError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"train.objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.beta < 0:
            raise ConfigError(f"train.beta must be >= 0, got {self.beta}")
        if not 0.0 < self.topk_k <= 1.0:
            raise ConfigError(f"train.topk_k must lie in (0, 1], got {self.topk_k}")
        if self.eval_every < 1 or self.checkpoint_every < 1:
            raise ConfigError("train.eval_every and train.checkpoint_every must be >= 1")
        if not 0.0 < self.geco_ema_decay < 1.0:
            raise ConfigError(f"train.geco_ema_decay must lie in (0, 1), got {self.geco_ema_decay}")
        if not 0.0 < self.geco_lambda_min <= self.geco_lambda_init <= self.geco_lambda_max:
            raise ConfigError("train.geco_lambda_init must lie within [geco_lambda_min, geco_lambda_max]")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0) or self.adam_eps <= 0:
            raise ConfigError("train.adam_beta1/adam_beta2 must lie in [0, 1) and adam_eps > 0")
        if self.max_translation < 0:
            raise ConfigError(f"train.max_translation must be >= 0, got {self.max_translation}")
        return self

    def learning_rate(self, step: int) -> float:
        """Piecewise-constant schedule: the last entry whose step is <= `step`."""
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if step >= start:
                lr = value
            else:
                break
        return lr
