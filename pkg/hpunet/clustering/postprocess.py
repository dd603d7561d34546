"""Absorb clusters too thin to survive an erosion into their neighbours."""
from __future__ import annotations

import logging
from enum import Enum
from typing import Union

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)


class Fallback(str, Enum):
    """What a pixel becomes when its window holds no other instance label."""

    KEEP_LABEL = "keep"
    BACKGROUND = "background"


def _check_odd(name: str, value: int) -> None:
    if value < 1 or value % 2 == 0:
        raise ValueError(f"{name} must be a positive odd integer, got {value}")


def _majority(window: np.ndarray, own: int) -> int:
    """Most frequent label other than 0 and `own`; 0 if there is none. Ties go to the smaller id."""
    values = window[(window != 0) & (window != own)]
    if values.size == 0:
        return 0
    return int(np.bincount(values).argmax())


def _single_pass(labeling: np.ndarray, erosion_n: int, majority_m: int, fallback: Fallback) -> bool:
    structure = np.ones((erosion_n, erosion_n), dtype=bool)
    half = majority_m // 2
    h, w = labeling.shape
    changed = False
    for k in np.unique(labeling):
        if k == 0:
            continue
        mask = labeling == k
        if ndimage.binary_erosion(mask, structure=structure, border_value=0).any():
            continue
        for y, x in zip(*np.nonzero(mask)):
            window = labeling[max(y - half, 0):y + half + 1, max(x - half, 0):x + half + 1]
            new = _majority(window, int(k))
            if new == 0 and fallback is Fallback.KEEP_LABEL:
                continue
            labeling[y, x] = new
            changed = True
    return changed


def relabel_consecutive(labeling: np.ndarray) -> np.ndarray:
    """Map instance ids to 1..K in increasing order; background stays 0."""
    ids = np.unique(labeling)
    ids = ids[ids != 0]
    lookup = np.zeros(int(labeling.max()) + 1 if labeling.size else 1, dtype=np.int32)
    lookup[ids] = np.arange(1, ids.size + 1, dtype=np.int32)
    return lookup[labeling]


def postprocess(labeling: np.ndarray, erosion_n: int = 5, majority_m: int = 11,
                fallback: Union[Fallback, str] = Fallback.KEEP_LABEL, max_passes: int = 10) -> np.ndarray:
    """Replace every pixel of an eroded-away cluster by its window's majority label.

    Replacements are painted in immediately, so later pixels of the same
    cluster see them. Passes repeat until nothing changes.
    """
    _check_odd("erosion_n", erosion_n)
    _check_odd("majority_m", majority_m)
    fallback = Fallback(fallback)
    out = np.array(labeling, dtype=np.int32)
    if out.ndim != 2:
        raise ValueError(f"Expected an (H, W) labeling, got shape {out.shape}")
    if out.size and out.min() < 0:
        raise ValueError("Labeling still contains unassigned (-1) pixels")
    for passes in range(1, max_passes + 1):
        if not _single_pass(out, erosion_n, majority_m, fallback):
            break
    logger.debug("Post-processing finished after %d passes", passes)
    return relabel_consecutive(out)
