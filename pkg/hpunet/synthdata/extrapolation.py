"""Masked extrapolation: predict the hidden right part of an instance image."""
from __future__ import annotations

import logging

import numpy as np

from hpunet.backend.functional import one_hot
from hpunet.synthdata.sample import Dataset, TaskSample

logger = logging.getLogger(__name__)


def visible_columns(size: int, mask_fraction: float) -> np.ndarray:
    """(H, W) uint8 map, 1 on the visible left part, 0 on the hidden right columns."""
    hidden = int(round(mask_fraction * size))
    visible = np.ones((size, size), dtype=np.uint8)
    if hidden:
        visible[:, size - hidden:] = 0
    return visible


def gen_extrapolation(base: Dataset, mask_fraction: float = 0.5, seed: int = 0) -> Dataset:
    """Inputs are [masked image, masked one-hot target, visible mask].

    Targets keep the base sample's fixed id assignment over the whole image.
    """
    if base.task != "instances":
        raise ValueError(f"Extrapolation needs an instance dataset, got {base.task!r}")
    if not 0.0 <= mask_fraction < 1.0:
        raise ValueError(f"mask_fraction must lie in [0, 1), got {mask_fraction}")
    classes = base.num_classes
    samples = []
    for s in base.samples:
        size = s.shape[0]
        visible = visible_columns(size, mask_fraction)
        target = s.targets[0]
        masked_image = s.image * visible
        masked_onehot = one_hot(target[None], classes)[0] * visible
        image = np.concatenate([masked_image, masked_onehot, visible[None].astype(np.float32)])
        samples.append(TaskSample(image=image.astype(np.float32), targets=[target.copy()],
                                  instances=s.instances, visible=visible,
                                  metadata=dict(s.metadata)))
    params = dict(base.params)
    params.update({"mask_fraction": mask_fraction, "base_seed": base.seed})
    logger.info("Masked %d instance images (fraction %.2f)", len(samples), mask_fraction)
    return Dataset("extrapolation", samples, num_classes=classes, input_channels=classes + 2,
                   seed=seed, params=params, redraw_ids=False, augment=False)
