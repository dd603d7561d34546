"""Named parameter sets and their initialization."""
from __future__ import annotations

import logging
from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from hpunet.backend.init import init_orthogonal, init_truncnormal
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.model.config import ModelConfig

logger = logging.getLogger(__name__)

KERNEL_GAIN = 1.0
BIAS_SIGMA = 0.001

Shape = Tuple[int, ...]


class ParameterStore:
    """Ordered mapping from hierarchical names to parameter tensors.

    Names look like ``encoder/scale3/block1/conv2/kernel``. Insertion order
    is the initialization order and is preserved by every copy.
    """

    def __init__(self, config: ModelConfig) -> None:
        self.config = config
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._tensors:
            raise ValueError(f"Duplicate parameter name: {name}")
        tensor.name = name
        self._tensors[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"Unknown parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for t in self._tensors.values())

    def astype(self, dtype: Any) -> "ParameterStore":
        out = ParameterStore(self.config)
        for name, t in self.items():
            out.add(name, Tensor(t.data.astype(dtype), requires_grad=True))
        return out

    def copy(self) -> "ParameterStore":
        out = ParameterStore(self.config)
        for name, t in self.items():
            out.add(name, Tensor(t.data.copy(), requires_grad=True))
        return out

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.items()}

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Dict[str, np.ndarray]) -> "ParameterStore":
        store = cls(config)
        expected = parameter_layout(config)
        for name, shape in expected:
            if name not in arrays:
                raise KeyError(f"Missing parameter: {name}")
            if tuple(arrays[name].shape) != shape:
                raise ValueError(f"Parameter {name} has shape {arrays[name].shape}, expected {shape}")
            store.add(name, Tensor(np.array(arrays[name]), requires_grad=True))
        return store


def _conv(layout: List[Tuple[str, Shape]], name: str, cin: int, cout: int, k: int) -> None:
    layout.append((f"{name}/kernel", (cout, cin, k, k)))
    layout.append((f"{name}/bias", (cout,)))


def residual_width(width: int) -> int:
    """The first 3x3 convolution of a block halves the scale's width."""
    return max(width // 2, 1)


def _res_block(layout: List[Tuple[str, Shape]], prefix: str, cin: int, cout: int) -> None:
    mid = residual_width(cout)
    _conv(layout, f"{prefix}/conv0", cin, mid, 3)
    _conv(layout, f"{prefix}/conv1", mid, mid, 3)
    _conv(layout, f"{prefix}/conv2", mid, mid, 3)
    _conv(layout, f"{prefix}/conv3", mid, cout, 1)
    if cin != cout:
        _conv(layout, f"{prefix}/skip", cin, cout, 1)


def _res_stack(layout: List[Tuple[str, Shape]], prefix: str, cin: int, cout: int, blocks: int) -> None:
    for b in range(blocks):
        _res_block(layout, f"{prefix}/block{b}", cin if b == 0 else cout, cout)


def _encoder(layout: List[Tuple[str, Shape]], config: ModelConfig, prefix: str, cin: int) -> None:
    for s, width in enumerate(config.widths()):
        _res_stack(layout, f"{prefix}/scale{s}", cin, width, config.res_blocks_per_scale)
        cin = width


def parameter_layout(config: ModelConfig) -> List[Tuple[str, Shape]]:
    """Every parameter name and shape, in initialization order."""
    widths = config.widths()
    enabled = set(config.enabled_levels())
    layout: List[Tuple[str, Shape]] = []

    _encoder(layout, config, "encoder", config.input_channels)
    ch = widths[-1]
    for level in range(config.total_scales):
        scale = config.scale_of_level(level)
        if level in enabled:
            _conv(layout, f"decoder/scale{scale}/prior_head", ch, 2 * config.latents_at(level), 1)
            ch += config.latents_at(level)
        if scale > 0:
            _res_stack(layout, f"decoder/scale{scale - 1}", ch + widths[scale - 1],
                       widths[scale - 1], config.res_blocks_per_scale)
            ch = widths[scale - 1]
    _conv(layout, "decoder/logits", ch, config.num_classes, 1)

    _encoder(layout, config, "posterior/encoder", config.input_channels + config.num_classes)
    ch = widths[-1]
    top = max(enabled)
    for level in range(top + 1):
        scale = config.scale_of_level(level)
        if level in enabled:
            _conv(layout, f"posterior/decoder/scale{scale}/head", ch, 2 * config.latents_at(level), 1)
            ch += config.latents_at(level)
        if level < top:
            _res_stack(layout, f"posterior/decoder/scale{scale - 1}", ch + widths[scale - 1],
                       widths[scale - 1], config.res_blocks_per_scale)
            ch = widths[scale - 1]
    return layout


def build_parameters(config: ModelConfig, rng: RngState, dtype: Any = np.float32) -> ParameterStore:
    """Orthogonal kernels (gain 1) and truncated-normal biases (sigma 0.001)."""
    config.validate()
    store = ParameterStore(config)
    for name, shape in parameter_layout(config):
        if name.endswith("/kernel"):
            store.add(name, init_orthogonal(shape, KERNEL_GAIN, rng, dtype=dtype))
        else:
            store.add(name, init_truncnormal(shape, BIAS_SIGMA, rng, dtype=dtype))
    logger.info("Built %d parameter tensors (%d values)", len(store), store.count())
    return store
