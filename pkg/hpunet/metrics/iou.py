"""Foreground IoU between label maps, one pair or whole sets at once."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np


class AbsencePolicy(str, Enum):
    """How a class absent from both maps enters the class mean."""

    ABSENCE_IS_ONE = "absence_is_one"
    ABSENCE_EXCLUDED = "absence_excluded"


@dataclass
class SampleSet:
    """Label maps of identical shape for one image."""

    maps: np.ndarray
    num_classes: int
    stochastic_classes: Tuple[int, ...]
    policy: AbsencePolicy = AbsencePolicy.ABSENCE_IS_ONE
    ignore: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        maps = np.asarray(self.maps)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3:
            raise ValueError(f"SampleSet needs (S, H, W) maps, got shape {maps.shape}")
        if maps.size and (maps.min() < 0 or maps.max() >= self.num_classes):
            raise ValueError(f"Labels must lie in [0, {self.num_classes})")
        self.maps = maps
        self.stochastic_classes = tuple(int(c) for c in self.stochastic_classes)
        self.policy = AbsencePolicy(self.policy)

    @classmethod
    def from_list(cls, maps: Sequence[np.ndarray], num_classes: int,
                  stochastic_classes: Sequence[int], policy: AbsencePolicy = AbsencePolicy.ABSENCE_IS_ONE,
                  ignore: Optional[np.ndarray] = None) -> "SampleSet":
        if not len(maps):
            raise ValueError("SampleSet needs at least one map")
        shapes = {np.shape(m) for m in maps}
        if len(shapes) != 1:
            raise ValueError(f"SampleSet maps differ in shape: {sorted(shapes)}")
        return cls(np.stack(maps), num_classes, tuple(stochastic_classes), policy, ignore)

    def __len__(self) -> int:
        return int(self.maps.shape[0])


def pairwise_iou(maps_a: np.ndarray, maps_b: np.ndarray, classes: Sequence[int],
                 policy: Union[AbsencePolicy, str] = AbsencePolicy.ABSENCE_IS_ONE,
                 ignore: Optional[np.ndarray] = None) -> np.ndarray:
    """(Sa, Sb) matrix of class-mean IoU; NaN where every class was skipped.

    Per class, intersections come from one matrix product of the flattened
    class indicators, so all pairs are evaluated at once.
    """
    maps_a = np.asarray(maps_a)
    maps_b = np.asarray(maps_b)
    if maps_a.shape[1:] != maps_b.shape[1:]:
        raise ValueError(f"Label map shapes differ: {maps_a.shape[1:]} vs {maps_b.shape[1:]}")
    policy = AbsencePolicy(policy)
    valid = np.ones(maps_a.shape[1:], dtype=bool) if ignore is None else ~np.asarray(ignore, dtype=bool)
    valid = valid.reshape(-1)
    flat_a = maps_a.reshape(len(maps_a), -1)[:, valid]
    flat_b = maps_b.reshape(len(maps_b), -1)[:, valid]

    total = np.zeros((len(maps_a), len(maps_b)))
    counted = np.zeros((len(maps_a), len(maps_b)))
    for c in classes:
        ind_a = (flat_a == c).astype(np.float64)
        ind_b = (flat_b == c).astype(np.float64)
        inter = ind_a @ ind_b.T
        union = ind_a.sum(axis=1)[:, None] + ind_b.sum(axis=1)[None, :] - inter
        present = union > 0
        total += np.where(present, inter / np.where(present, union, 1.0), 0.0)
        counted += present
        if policy is AbsencePolicy.ABSENCE_IS_ONE:
            total += ~present
            counted += ~present
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counted > 0, total / np.maximum(counted, 1), np.nan)


def iou_fg(a: np.ndarray, b: np.ndarray, classes: Sequence[int],
           policy: Union[AbsencePolicy, str] = AbsencePolicy.ABSENCE_IS_ONE,
           ignore: Optional[np.ndarray] = None) -> Optional[float]:
    """Class-mean IoU over `classes`; None when every class is skipped."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"Label map shapes differ: {a.shape} vs {b.shape}")
    value = pairwise_iou(a[None], b[None], classes, policy, ignore)[0, 0]
    return None if np.isnan(value) else float(value)


def set_iou(a: SampleSet, b: SampleSet) -> np.ndarray:
    """Pairwise IoU between two sample sets using `a`'s classes and policy."""
    if a.maps.shape[1:] != b.maps.shape[1:]:
        raise ValueError(f"Sample sets differ in map shape: {a.maps.shape[1:]} vs {b.maps.shape[1:]}")
    ignore = a.ignore if a.ignore is not None else b.ignore
    return pairwise_iou(a.maps, b.maps, a.stochastic_classes, a.policy, ignore)
