"""Batch assembly: target draws, id recolouring and augmentation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from hpunet.backend.rng import RngState
from hpunet.synthdata.instances import draw_ids
from hpunet.synthdata.sample import Dataset


@dataclass
class Batch:
    images: np.ndarray   # (N, input_channels, H, W) float32
    targets: np.ndarray  # (N, H, W) int32
    ignore: np.ndarray   # (N, H, W) bool
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.images.shape[0])


def augment_pair(image: np.ndarray, target: np.ndarray, ignore: np.ndarray, rng: RngState,
                 max_translation: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random horizontal flip and integer translation with zero fill.

    Pixels shifted in from outside the image are background in the target
    and are marked ignored.
    """
    if rng.random() < 0.5:
        image, target, ignore = image[..., ::-1], target[..., ::-1], ignore[..., ::-1]
    if max_translation > 0:
        dy = rng.integers(max_translation + 1, low=-max_translation)
        dx = rng.integers(max_translation + 1, low=-max_translation)
        image = _shift(image, dy, dx, 0.0)
        target = _shift(target, dy, dx, 0)
        ignore = _shift(ignore, dy, dx, True)
    return np.ascontiguousarray(image), np.ascontiguousarray(target), np.ascontiguousarray(ignore)


def _shift(a: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    out = np.full_like(a, fill)
    h, w = a.shape[-2:]
    src_y = slice(max(-dy, 0), h - max(dy, 0))
    dst_y = slice(max(dy, 0), h - max(-dy, 0))
    src_x = slice(max(-dx, 0), w - max(dx, 0))
    dst_x = slice(max(dx, 0), w - max(-dx, 0))
    out[..., dst_y, dst_x] = a[..., src_y, src_x]
    return out


def draw_batch(dataset: Dataset, batch_size: int, rng: RngState, augment: bool = True,
               max_translation: int = 2) -> Batch:
    """Images drawn uniformly with replacement, one target per image.

    Lesion images get one grader drawn uniformly. Instance images get a
    fresh id for every instance.
    """
    if len(dataset) == 0:
        raise ValueError("Cannot draw a batch from an empty dataset")
    indices = rng.integers(len(dataset), size=batch_size)
    images, targets, ignores = [], [], []
    for i in indices:
        s = dataset[int(i)]
        if dataset.redraw_ids and s.instances is not None:
            target = draw_ids(s.instances, int(s.instances.max()), dataset.num_classes - 1, rng)
        else:
            target = s.targets[rng.integers(len(s.targets))]
        image = s.image
        ignore = np.zeros(target.shape, dtype=bool)
        if augment and dataset.augment:
            image, target, ignore = augment_pair(image, target, ignore, rng, max_translation)
        images.append(image)
        targets.append(target)
        ignores.append(ignore)
    return Batch(images=np.stack(images).astype(np.float32),
                 targets=np.stack(targets).astype(np.int32),
                 ignore=np.stack(ignores), indices=np.asarray(indices))
