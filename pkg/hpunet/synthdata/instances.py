"""Instance colorization: blobs whose ids are pure latent information."""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from hpunet.backend.rng import RngState
from hpunet.errors import PlacementError
from hpunet.synthdata.sample import Dataset, TaskSample, add_noise, disk_mask

logger = logging.getLogger(__name__)

GAP = 2
MAX_TRIES = 200
RECT_SIDE = (4, 12)
DISK_RADIUS = (2, 6)


def draw_ids(instances: np.ndarray, count: int, num_ids: int, rng: RngState) -> np.ndarray:
    """Colour each instance 1..count with an id drawn uniformly from 1..num_ids."""
    lookup = np.zeros(count + 1, dtype=np.int32)
    if count:
        lookup[1:] = rng.integers(num_ids + 1, low=1, size=count)
    return lookup[instances]


def _blob(size: int, rng: RngState) -> np.ndarray:
    if rng.random() < 0.5:
        h = RECT_SIDE[0] + rng.integers(RECT_SIDE[1] - RECT_SIDE[0] + 1)
        w = RECT_SIDE[0] + rng.integers(RECT_SIDE[1] - RECT_SIDE[0] + 1)
        top = rng.integers(size - h + 1)
        left = rng.integers(size - w + 1)
        mask = np.zeros((size, size), dtype=bool)
        mask[top:top + h, left:left + w] = True
        return mask
    r = DISK_RADIUS[0] + rng.integers(DISK_RADIUS[1] - DISK_RADIUS[0] + 1)
    cy = r + rng.integers(size - 2 * r)
    cx = r + rng.integers(size - 2 * r)
    return disk_mask(size, cy, cx, r)


def place_blobs(size: int, count: int, rng: RngState, gap: int = GAP,
                max_tries: int = MAX_TRIES) -> np.ndarray:
    """Instance map with `count` disjoint blobs at least `gap` pixels apart."""
    instances = np.zeros((size, size), dtype=np.int32)
    structure = np.ones((2 * gap + 1, 2 * gap + 1), dtype=bool)
    for k in range(1, count + 1):
        blocked = ndimage.binary_dilation(instances > 0, structure=structure)
        for _ in range(max_tries):
            blob = _blob(size, rng)
            if not (blob & blocked).any():
                instances[blob] = k
                break
        else:
            raise PlacementError(
                f"Could not place blob {k} of {count} in a {size}x{size} image after {max_tries} tries")
    return instances


def gen_instances(count: int, size: int = 64, k_range: Tuple[int, int] = (3, 8), num_ids: int = 5,
                  seed: int = 0) -> Dataset:
    """Blobs with distinct intensities; targets colour each blob with a random id.

    The network sees `num_ids + 1` classes, background included.
    """
    if num_ids < 2:
        raise ValueError(f"num_ids must be >= 2, got {num_ids}")
    k_min, k_max = k_range
    if not 1 <= k_min <= k_max:
        raise ValueError(f"Invalid instance count range {k_range}")
    levels = 0.2 + 0.8 * np.arange(1, k_max + 1) / k_max

    root = RngState(seed)
    samples = []
    for idx in range(count):
        rng = root.derive("instances", idx)
        k = k_min + rng.integers(k_max - k_min + 1)
        instances = place_blobs(size, k, rng)
        intensity = np.zeros(k + 1)
        intensity[1:] = levels[rng.permutation(k_max)[:k]]
        image = add_noise(intensity[instances], rng)[None]
        target = draw_ids(instances, k, num_ids, rng)
        samples.append(TaskSample(image=image, targets=[target], instances=instances,
                                  metadata={"instance_count": int(k)}))

    params = {"size": size, "k_range": [k_min, k_max], "num_ids": num_ids}
    logger.info("Generated %d instance images", count)
    return Dataset("instances", samples, num_classes=num_ids + 1, input_channels=1, seed=seed,
                   params=params, redraw_ids=True)


def instance_count(sample: TaskSample) -> Optional[int]:
    return None if sample.instances is None else int(sample.instances.max())
