"""Posterior network q(z | X, Y) and reconstructions from its means."""
from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from hpunet.backend.ops import concat_channels, reparam_sample, upsample_nn2x2
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.model.latents import LatentPlan, ScaleDistribution, latent_head
from hpunet.model.layers import check_extents, encode_pyramid, res_stack
from hpunet.model.params import ParameterStore
from hpunet.model.unet import decode_with_prior, unet_encode


def posterior_forward(params: ParameterStore, image: Tensor, onehot_y: Tensor,
                      rng: Optional[RngState], use_mean: bool = False,
                      ) -> Tuple[List[ScaleDistribution], List[Tensor]]:
    """Posterior distributions and latents, global to local.

    Each scale's latent is fed back into the posterior decoder, so q at a
    scale is conditioned on the posterior latents above it. With
    `use_mean` the means are fed back instead of samples.
    """
    config = params.config
    if image.ndim != 4 or image.shape[1] != config.input_channels:
        raise ValueError(f"Image must be (N, {config.input_channels}, H, W), got {image.shape}")
    if onehot_y.ndim != 4 or onehot_y.shape[1] != config.num_classes:
        raise ValueError(
            f"One-hot target must have {config.num_classes} channels, got shape {onehot_y.shape}")
    if onehot_y.shape[0] != image.shape[0] or onehot_y.shape[2:] != image.shape[2:]:
        raise ValueError(f"One-hot target {onehot_y.shape} does not match image {image.shape}")
    check_extents(config, image.shape[2], image.shape[3])
    if not use_mean and rng is None:
        raise ValueError("posterior_forward needs an rng unless use_mean is set")
    if onehot_y.kind != image.kind:
        onehot_y = onehot_y.astype(image.data.dtype)

    pyramid = encode_pyramid(params, config, "posterior/encoder", concat_channels(image, onehot_y))
    enabled = set(config.enabled_levels())
    top = max(enabled)
    x = pyramid[-1]
    posteriors: List[ScaleDistribution] = []
    samples: List[Tensor] = []
    for level in range(top + 1):
        scale = config.scale_of_level(level)
        if level in enabled:
            dist = latent_head(params, f"posterior/decoder/scale{scale}/head", x, config, level)
            z = dist.mu if use_mean else reparam_sample(dist.mu, dist.sigma, rng)
            posteriors.append(dist)
            samples.append(z)
            x = concat_channels(x, z)
        if level < top:
            x = concat_channels(upsample_nn2x2(x), pyramid[scale - 1])
            x = res_stack(params, f"posterior/decoder/scale{scale - 1}", x, config.res_blocks_per_scale)
    return posteriors, samples


def reconstruct(params: ParameterStore, image: Tensor, onehot_y: Tensor) -> Tensor:
    """Logits of the prior decoder with the posterior means injected."""
    _, means = posterior_forward(params, image, onehot_y, rng=None, use_mean=True)
    plan = LatentPlan.inject([Tensor(m.data) for m in means])
    return decode_with_prior(params, unet_encode(params, image), plan, rng=None).logits


def reconstruct_labels(params: ParameterStore, image: Tensor, onehot_y: Tensor) -> np.ndarray:
    return reconstruct(params, image, onehot_y).data.argmax(axis=1)
