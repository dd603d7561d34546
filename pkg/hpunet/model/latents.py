"""Latent distributions, sampling directives and forward outputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from hpunet.backend import functional as F
from hpunet.backend.ops import reparam_sample
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.model.config import ModelConfig
from hpunet.model.layers import conv
from hpunet.model.params import ParameterStore


@dataclass
class ScaleDistribution:
    """Diagonal Gaussian over the latents of one scale, shape (N, D, H_i, W_i)."""

    mu: Tensor
    log_sigma: Tensor
    level: int

    def __post_init__(self) -> None:
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError(f"mu {self.mu.shape} and log_sigma {self.log_sigma.shape} differ")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.mu.shape

    @property
    def sigma(self) -> Tensor:
        return F.exp(self.log_sigma)


@dataclass(frozen=True)
class SamplePrior:
    pass


@dataclass(frozen=True)
class PriorMean:
    pass


@dataclass(frozen=True)
class Inject:
    z: Union[Tensor, np.ndarray]


Directive = Union[SamplePrior, PriorMean, Inject]

_MODES = {"sample": SamplePrior, "mean": PriorMean}


@dataclass(frozen=True)
class LatentPlan:
    """One directive per enabled latent scale, ordered global to local."""

    directives: Tuple[Directive, ...]

    def __len__(self) -> int:
        return len(self.directives)

    @classmethod
    def sample(cls, config: ModelConfig) -> "LatentPlan":
        return cls(tuple(SamplePrior() for _ in config.enabled_levels()))

    @classmethod
    def mean(cls, config: ModelConfig) -> "LatentPlan":
        return cls(tuple(PriorMean() for _ in config.enabled_levels()))

    @classmethod
    def inject(cls, zs: Sequence[Union[Tensor, np.ndarray]]) -> "LatentPlan":
        return cls(tuple(Inject(z) for z in zs))

    @classmethod
    def from_modes(cls, modes: Sequence[str]) -> "LatentPlan":
        """Build from names such as ``["mean", "sample", "sample"]``."""
        try:
            return cls(tuple(_MODES[m.strip().lower()]() for m in modes))
        except KeyError as e:
            raise ValueError(f"Unknown latent mode {e.args[0]!r}; use 'sample' or 'mean'") from None


@dataclass
class ForwardOutput:
    logits: Tensor
    priors: List[ScaleDistribution]
    latents_used: List[Tensor]


def latent_head(params: ParameterStore, name: str, features: Tensor, config: ModelConfig,
                level: int) -> ScaleDistribution:
    """1x1 convolution on ReLU'd features giving (mu, log sigma)."""
    d = config.latents_at(level)
    out = conv(params, name, F.relu(features))
    lo, hi = config.logsigma_clamp
    return ScaleDistribution(
        mu=F.slice_channels(out, 0, d),
        log_sigma=F.clip(F.slice_channels(out, d, 2 * d), lo, hi),
        level=level,
    )


def apply_directive(directive: Directive, dist: ScaleDistribution, rng: Optional[RngState]) -> Tensor:
    if isinstance(directive, PriorMean):
        return dist.mu
    if isinstance(directive, SamplePrior):
        if rng is None:
            raise ValueError(f"Sampling latent level {dist.level} needs an rng")
        return reparam_sample(dist.mu, dist.sigma, rng)
    if isinstance(directive, Inject):
        z = directive.z
        if not isinstance(z, Tensor):
            z = Tensor(np.asarray(z, dtype=dist.mu.data.dtype))
        if z.shape != dist.shape:
            raise ValueError(
                f"Injected latent for level {dist.level} has shape {z.shape}, expected {dist.shape}")
        if z.kind != dist.mu.kind:
            if z.requires_grad:
                raise ValueError(f"Injected latent kind {z.kind} does not match {dist.mu.kind}")
            z = z.astype(dist.mu.data.dtype)
        return z
    raise TypeError(f"Unknown latent directive: {directive!r}")
