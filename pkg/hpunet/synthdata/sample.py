"""Containers shared by the synthetic task generators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

TASKS = ("lesions", "instances", "extrapolation")

# Additive Gaussian image noise on the [0, 1] intensity scale.
NOISE_SIGMA = 0.1


@dataclass
class TaskSample:
    """One image with its alternative targets.

    `targets` holds every grader's map (lesions) or the stored id
    assignment (instances, extrapolation). `instances` is the true instance
    partition (1..K, background 0) when the task has one; `visible` marks
    the unmasked region of an extrapolation sample.
    """

    image: np.ndarray
    targets: List[np.ndarray]
    instances: Optional[np.ndarray] = None
    visible: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.image.ndim != 3:
            raise ValueError(f"image must be (channels, H, W), got {self.image.shape}")
        spatial = self.image.shape[1:]
        for t in self.targets:
            if t.shape != spatial:
                raise ValueError(f"target shape {t.shape} does not match image {spatial}")

    @property
    def shape(self):
        return self.image.shape[1:]


@dataclass
class Dataset:
    """Samples of one task plus what a network needs to know about them."""

    task: str
    samples: List[TaskSample]
    num_classes: int
    input_channels: int
    seed: int
    params: Dict[str, Any] = field(default_factory=dict)
    # True when the ids of each instance are redrawn every training step.
    redraw_ids: bool = False
    augment: bool = True

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"Unknown task {self.task!r}; expected one of {TASKS}")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> TaskSample:
        return self.samples[index]

    @property
    def image_size(self) -> int:
        return int(self.samples[0].shape[0]) if self.samples else int(self.params.get("size", 0))

    def images(self, indices=None) -> np.ndarray:
        idx = range(len(self)) if indices is None else indices
        return np.stack([self.samples[i].image for i in idx]).astype(np.float32)

    def subset(self, samples: List[TaskSample]) -> "Dataset":
        return Dataset(self.task, samples, self.num_classes, self.input_channels, self.seed,
                       dict(self.params), self.redraw_ids, self.augment)

    def split(self, held_out: int) -> Tuple["Dataset", "Dataset"]:
        """Last `held_out` samples become a second dataset."""
        if not 0 <= held_out <= len(self):
            raise ValueError(f"Cannot hold out {held_out} of {len(self)} samples")
        cut = len(self) - held_out
        return self.subset(self.samples[:cut]), self.subset(self.samples[cut:])


def add_noise(clean: np.ndarray, rng, sigma: float = NOISE_SIGMA) -> np.ndarray:
    return (clean + sigma * rng.normal(clean.shape, dtype=np.float64)).astype(np.float32)


def disk_mask(size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
