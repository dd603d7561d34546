"""Greedy Hamming clustering of stacked one-hot segmentation samples."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

logger = logging.getLogger(__name__)

# Set bits per byte value.
_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.int32)


class IndexSource(Protocol):
    def integers(self, high: int) -> int: ...


@dataclass
class SampleStack:
    """Per pixel, the concatenated one-hot vectors of n samples over C classes."""

    bits: np.ndarray  # (H, W, n*C) bool
    num_samples: int
    num_classes: int

    def __post_init__(self) -> None:
        h, w, length = self.bits.shape
        if length != self.num_samples * self.num_classes:
            raise ValueError(f"Stack depth {length} != {self.num_samples} samples x {self.num_classes} classes")
        blocks = self.bits.reshape(h, w, self.num_samples, self.num_classes).sum(axis=3)
        if not np.all(blocks == 1):
            raise ValueError("Every sample's class block must be one-hot at every pixel")

    @classmethod
    def from_samples(cls, samples: np.ndarray, num_classes: int) -> "SampleStack":
        """Stack (n, H, W) label maps into an (H, W, n*C) bit array."""
        samples = np.asarray(samples)
        if samples.ndim != 3:
            raise ValueError(f"Expected (n, H, W) samples, got shape {samples.shape}")
        if samples.min() < 0 or samples.max() >= num_classes:
            raise ValueError(f"Sample labels must lie in [0, {num_classes})")
        n, h, w = samples.shape
        onehot = samples[..., None] == np.arange(num_classes)  # (n, H, W, C)
        bits = onehot.transpose(1, 2, 0, 3).reshape(h, w, n * num_classes)
        return cls(bits=bits, num_samples=n, num_classes=num_classes)

    @property
    def shape(self):
        return self.bits.shape[:2]

    def packed(self) -> np.ndarray:
        """(H*W, bytes) packed rows."""
        return np.packbits(self.bits.reshape(-1, self.bits.shape[-1]), axis=1)

    def background_prototype(self, background_class: int) -> np.ndarray:
        proto = np.zeros((self.num_samples, self.num_classes), dtype=bool)
        proto[:, background_class] = True
        return np.packbits(proto.reshape(1, -1), axis=1)[0]


def hamming_distances(packed: np.ndarray, prototype: np.ndarray) -> np.ndarray:
    return _POPCOUNT[np.bitwise_xor(packed, prototype[None, :])].sum(axis=1)


def greedy_hamming_cluster(stack: SampleStack, alpha: int, background_class: int,
                           rng: IndexSource) -> np.ndarray:
    """Instance labeling with cluster 0 as background.

    Pixels within distance `alpha` of the all-background vector form
    cluster 0. Then, until every pixel is assigned, a uniformly drawn
    unassigned pixel becomes the next prototype and absorbs every
    unassigned pixel within `alpha` of it.

    Args:
        stack: One-hot samples of a single image.
        alpha: Largest Hamming distance to a prototype, in [0, n*C).
        background_class: Class whose all-background vector seeds cluster 0.
        rng: Source of the prototype draws.

    Returns:
        int32 cluster ids of shape (H, W).
    """
    depth = stack.num_samples * stack.num_classes
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if alpha >= depth:
        raise ValueError(f"alpha {alpha} >= n*C = {depth} would merge every pixel")
    if not 0 <= background_class < stack.num_classes:
        raise ValueError(f"background_class {background_class} outside [0, {stack.num_classes})")

    packed = stack.packed()
    labels = np.full(packed.shape[0], -1, dtype=np.int32)
    near_background = hamming_distances(packed, stack.background_prototype(background_class)) <= alpha
    labels[near_background] = 0
    unassigned = np.flatnonzero(~near_background)
    cluster = 1
    while unassigned.size:
        proto = packed[unassigned[rng.integers(unassigned.size)]]
        absorbed = hamming_distances(packed[unassigned], proto) <= alpha
        labels[unassigned[absorbed]] = cluster
        unassigned = unassigned[~absorbed]
        cluster += 1
    logger.debug("Greedy clustering produced %d instance clusters", cluster - 1)
    return labels.reshape(stack.shape)
