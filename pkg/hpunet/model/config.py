"""Architecture hyper-parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from hpunet.errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the hierarchical U-Net and its posterior network.

    Scales are counted from the input resolution (scale 0) down to the
    coarsest grid (scale total_scales - 1). Latent levels are counted the
    other way: level 0 sits at the coarsest scale, level i at scale
    total_scales - 1 - i.
    """

    total_scales: int = 6
    latent_scales: int = 3
    base_channels: int = 8
    channel_cap_doublings: int = 4
    res_blocks_per_scale: int = 2
    num_classes: int = 2
    input_channels: int = 1
    latents_per_position: int = 1
    # Latents per position at level 0; 0 means latents_per_position.
    global_latents: int = 0
    logsigma_clamp: Tuple[float, float] = (-10.0, 5.0)
    # None enables every latent level.
    latent_enable: Optional[Tuple[bool, ...]] = field(default=None)

    def validate(self) -> "ModelConfig":
        checks = [
            (self.total_scales >= 1, "model.total_scales must be >= 1"),
            (self.latent_scales >= 1, "model.latent_scales must be >= 1"),
            (self.latent_scales <= self.total_scales,
             f"model.latent_scales ({self.latent_scales}) exceeds model.total_scales ({self.total_scales})"),
            (self.base_channels >= 2, "model.base_channels must be >= 2"),
            (self.channel_cap_doublings >= 0, "model.channel_cap_doublings must be >= 0"),
            (self.res_blocks_per_scale >= 1, "model.res_blocks_per_scale must be >= 1"),
            (self.num_classes >= 2, "model.num_classes must be >= 2"),
            (self.input_channels >= 1, "model.input_channels must be >= 1"),
            (self.latents_per_position >= 1, "model.latents_per_position must be >= 1"),
            (self.global_latents >= 0, "model.global_latents must be >= 0"),
            (self.logsigma_clamp[0] < self.logsigma_clamp[1], "model.logsigma_clamp must be increasing"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.latent_enable is not None:
            if len(self.latent_enable) != self.latent_scales:
                raise ConfigError(
                    f"model.latent_enable has {len(self.latent_enable)} flags for {self.latent_scales} latent scales")
            if not any(self.latent_enable):
                raise ConfigError("model.latent_enable must enable at least one latent scale")
        return self

    def widths(self) -> List[int]:
        """Channel width per scale, doubling per down-sampling up to the cap."""
        return [self.base_channels * 2 ** min(s, self.channel_cap_doublings)
                for s in range(self.total_scales)]

    def enabled_levels(self) -> List[int]:
        flags = self.latent_enable or (True,) * self.latent_scales
        return [level for level, on in enumerate(flags) if on]

    def scale_of_level(self, level: int) -> int:
        return self.total_scales - 1 - level

    def latents_at(self, level: int) -> int:
        """Latent channels per grid position at a level."""
        if level == 0 and self.global_latents:
            return self.global_latents
        return self.latents_per_position

    def hierarchy_latents(self) -> int:
        """Latents of the enabled hierarchy, counted per level-0 position.

        Level i has 4**i positions under each level-0 position, so with the
        default config (three levels, one latent each) this is 1 + 4 + 16.
        """
        return sum(self.latents_at(level) * 4 ** level for level in self.enabled_levels())

    @property
    def downsample_factor(self) -> int:
        return 2 ** (self.total_scales - 1)
