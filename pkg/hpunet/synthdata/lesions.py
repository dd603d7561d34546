"""Ambiguous lesions: a bright disk that graders either outline or ignore.

The image never reveals whether an image is "abnormal". With probability
`p_abnormal` every grader outlines the disk with a fixed per-grader radius
offset; otherwise every grading is empty.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from hpunet.backend.rng import RngState
from hpunet.errors import PlacementError
from hpunet.synthdata.sample import Dataset, TaskSample, add_noise, disk_mask

logger = logging.getLogger(__name__)

DEFAULT_JITTER: Tuple[int, ...] = (-1, 0, 1, 2)
RADIUS_RANGE = (4, 8)
BACKGROUND, FOREGROUND = 0.25, 0.75


def grader_jitter(graders: int, jitter: Sequence[int]) -> List[int]:
    return [int(jitter[g % len(jitter)]) for g in range(graders)]


def gen_ambiguous_lesions(count: int, size: int = 32, p_abnormal: float = 0.5, graders: int = 4,
                          boundary_jitter: Sequence[int] = DEFAULT_JITTER, seed: int = 0,
                          ) -> Tuple[Dataset, "LesionOracle"]:
    if not 0.0 <= p_abnormal <= 1.0:
        raise ValueError(f"p_abnormal must lie in [0, 1], got {p_abnormal}")
    if graders < 1:
        raise ValueError(f"graders must be >= 1, got {graders}")
    offsets = grader_jitter(graders, boundary_jitter)
    r_min, r_max = RADIUS_RANGE
    if r_min + min(offsets) < 1:
        raise ValueError(f"Jitter {min(offsets)} would erase a disk of radius {r_min}")
    margin = r_max + max(max(offsets), 0)
    if size < 2 * margin + 1:
        raise PlacementError(f"A disk of radius up to {margin} does not fit in a {size}x{size} image")

    root = RngState(seed)
    samples = []
    for idx in range(count):
        rng = root.derive("lesions", idx)
        radius = r_min + rng.integers(r_max - r_min + 1)
        cy = margin + rng.integers(size - 2 * margin)
        cx = margin + rng.integers(size - 2 * margin)
        abnormal = bool(rng.random() < p_abnormal)
        clean = np.where(disk_mask(size, cy, cx, radius), FOREGROUND, BACKGROUND)
        image = add_noise(clean, rng)[None]
        if abnormal:
            targets = [disk_mask(size, cy, cx, radius + j).astype(np.int32) for j in offsets]
        else:
            targets = [np.zeros((size, size), dtype=np.int32) for _ in offsets]
        samples.append(TaskSample(image=image, targets=targets, metadata={
            "mode": int(abnormal), "radius": int(radius), "center": [int(cy), int(cx)],
        }))

    params = {"size": size, "p_abnormal": p_abnormal, "graders": graders,
              "boundary_jitter": list(boundary_jitter)}
    dataset = Dataset("lesions", samples, num_classes=2, input_channels=1, seed=seed, params=params)
    logger.info("Generated %d lesion images (%d abnormal)", count,
                sum(s.metadata["mode"] for s in samples))
    return dataset, LesionOracle(dataset, p_abnormal, offsets)


@dataclass
class LesionOracle:
    """Exact output distribution of the lesion task for each image."""

    dataset: Dataset
    p_abnormal: float
    offsets: List[int]

    def grader_maps(self, index: int) -> List[np.ndarray]:
        meta = self.dataset[index].metadata
        size = self.dataset[index].shape[0]
        cy, cx = meta["center"]
        return [disk_mask(size, cy, cx, meta["radius"] + j).astype(np.int32) for j in self.offsets]

    def distribution(self, index: int) -> List[Tuple[float, np.ndarray]]:
        """(probability, label map) pairs of a single draw: mode, then a uniform grader."""
        size = self.dataset[index].shape[0]
        outcomes: List[Tuple[float, np.ndarray]] = []
        if self.p_abnormal < 1.0:
            outcomes.append((1.0 - self.p_abnormal, np.zeros((size, size), dtype=np.int32)))
        if self.p_abnormal > 0.0:
            share = self.p_abnormal / len(self.offsets)
            for m in self.grader_maps(index):
                for k, (p, existing) in enumerate(outcomes):
                    if np.array_equal(existing, m):
                        outcomes[k] = (p + share, existing)
                        break
                else:
                    outcomes.append((share, m))
        return outcomes

    def sample(self, index: int, n: int, rng: RngState) -> List[np.ndarray]:
        maps = self.grader_maps(index)
        size = self.dataset[index].shape[0]
        out = []
        for _ in range(n):
            if rng.random() < self.p_abnormal:
                out.append(maps[rng.integers(len(maps))].copy())
            else:
                out.append(np.zeros((size, size), dtype=np.int32))
        return out
