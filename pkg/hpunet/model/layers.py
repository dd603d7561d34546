"""Building blocks shared by the prior U-Net and the posterior network."""
from __future__ import annotations

from typing import List

from hpunet.backend import functional as F
from hpunet.backend.ops import avg_pool2x2, conv2d
from hpunet.backend.tensor import Tensor
from hpunet.model.config import ModelConfig
from hpunet.model.params import ParameterStore


def conv(params: ParameterStore, name: str, x: Tensor) -> Tensor:
    return conv2d(x, params[f"{name}/kernel"], params[f"{name}/bias"])


def res_block(params: ParameterStore, prefix: str, x: Tensor) -> Tensor:
    """Pre-activated residual block: three 3x3 convolutions and a 1x1.

    The branch runs at half the block's output width and ends in an
    un-activated 1x1 projection back to full width. A 1x1 projection also
    replaces the identity skip when the channel count changes.
    """
    h = conv(params, f"{prefix}/conv0", F.relu(x))
    h = conv(params, f"{prefix}/conv1", F.relu(h))
    h = conv(params, f"{prefix}/conv2", F.relu(h))
    h = conv(params, f"{prefix}/conv3", h)
    skip = conv(params, f"{prefix}/skip", x) if f"{prefix}/skip/kernel" in params else x
    return F.add(skip, h)


def res_stack(params: ParameterStore, prefix: str, x: Tensor, blocks: int) -> Tensor:
    for b in range(blocks):
        x = res_block(params, f"{prefix}/block{b}", x)
    return x


def encode_pyramid(params: ParameterStore, config: ModelConfig, prefix: str, x: Tensor) -> List[Tensor]:
    """Residual blocks per scale, average pooling between scales."""
    pyramid: List[Tensor] = []
    for s in range(config.total_scales):
        if s > 0:
            x = avg_pool2x2(x)
        x = res_stack(params, f"{prefix}/scale{s}", x, config.res_blocks_per_scale)
        pyramid.append(x)
    return pyramid


def check_extents(config: ModelConfig, height: int, width: int) -> None:
    factor = config.downsample_factor
    if height % factor or width % factor:
        raise ValueError(
            f"Input extents {height}x{width} are not divisible by {factor} "
            f"(2^(total_scales-1) with total_scales={config.total_scales})")
