"""Prior U-Net: encoder, decoder with interleaved latents, logits head."""
from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from hpunet.backend.ops import concat_channels, upsample_nn2x2
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.model.latents import ForwardOutput, LatentPlan, apply_directive, latent_head
from hpunet.model.layers import check_extents, conv, encode_pyramid, res_stack
from hpunet.model.params import ParameterStore

logger = logging.getLogger(__name__)


def unet_encode(params: ParameterStore, image: Tensor) -> List[Tensor]:
    """Feature pyramid, one map per scale from full resolution downwards."""
    config = params.config
    if image.ndim != 4 or image.shape[1] != config.input_channels:
        raise ValueError(
            f"Image must be (N, {config.input_channels}, H, W), got {image.shape}")
    check_extents(config, image.shape[2], image.shape[3])
    return encode_pyramid(params, config, "encoder", image)


def decode_with_prior(params: ParameterStore, pyramid: List[Tensor], plan: LatentPlan,
                      rng: Optional[RngState]) -> ForwardOutput:
    """Ascend from the coarsest features, emitting one prior per latent scale.

    At a latent scale the prior head reads the current features, a latent is
    chosen by the plan's directive and concatenated, and only then does the
    decoder upsample and merge the encoder skip of the next finer scale.
    """
    config = params.config
    enabled = config.enabled_levels()
    if len(plan) != len(enabled):
        raise ValueError(f"Latent plan has {len(plan)} directives for {len(enabled)} enabled latent scales")
    directives = dict(zip(enabled, plan.directives))

    x = pyramid[-1]
    priors, latents = [], []
    for level in range(config.total_scales):
        scale = config.scale_of_level(level)
        if level in directives:
            dist = latent_head(params, f"decoder/scale{scale}/prior_head", x, config, level)
            z = apply_directive(directives[level], dist, rng)
            priors.append(dist)
            latents.append(z)
            x = concat_channels(x, z)
        if scale > 0:
            x = concat_channels(upsample_nn2x2(x), pyramid[scale - 1])
            x = res_stack(params, f"decoder/scale{scale - 1}", x, config.res_blocks_per_scale)
    logits = conv(params, "decoder/logits", x)
    return ForwardOutput(logits=logits, priors=priors, latents_used=latents)


def prior_forward(params: ParameterStore, image: Tensor, plan: LatentPlan,
                  rng: Optional[RngState]) -> ForwardOutput:
    return decode_with_prior(params, unet_encode(params, image), plan, rng)


def sample_segmentations(params: ParameterStore, image: Tensor, plan: LatentPlan,
                         rng: Optional[RngState], num_samples: int) -> np.ndarray:
    """Logits of `num_samples` hypotheses, shape (S, N, C, H, W).

    The encoder runs once; only the decoder is repeated per sample.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    pyramid = unet_encode(params, image)
    out = [decode_with_prior(params, pyramid, plan, rng).logits.data for _ in range(num_samples)]
    logger.debug("Drew %d samples for a batch of %d", num_samples, image.shape[0])
    return np.stack(out)
