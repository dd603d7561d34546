"""Agreement between a model's sample set and the ground-truth set."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from hpunet.config import Config
from hpunet.metrics.iou import SampleSet, set_iou

WITHIN_PAIRS = ("all", "distinct")


def distance_matrix(a: SampleSet, b: SampleSet) -> np.ndarray:
    """1 - IoU; undefined IoU counts as distance 0."""
    return np.nan_to_num(1.0 - set_iou(a, b), nan=0.0)


def _within(d: np.ndarray, pairs: str) -> float:
    n = d.shape[0]
    if pairs == "all":
        return float(d.mean())
    if n < 2:
        return 0.0
    return float((d.sum() - np.trace(d)) / (n * (n - 1)))


def ged2(model_samples: SampleSet, gt_samples: SampleSet, within_pairs: str = "all") -> float:
    """Squared generalized energy distance with the 1 - IoU kernel.

    2 E d(S, Y) - E d(S, S') - E d(Y, Y'). The within-set expectations
    average all ordered pairs by default; ``within_pairs="distinct"`` drops
    the i == j pairs (a one-element set then contributes 0).

    Args:
        model_samples: Segmentations sampled from the model.
        gt_samples: Ground-truth segmentations of the same image.
        within_pairs: "all" or "distinct".

    Returns:
        The distance; 0 for identical sets under "all".
    """
    if not len(model_samples) or not len(gt_samples):
        raise ValueError("ged2 needs non-empty sample sets")
    if within_pairs not in WITHIN_PAIRS:
        raise ValueError(f"within_pairs must be one of {WITHIN_PAIRS}, got {within_pairs!r}")
    cross = float(distance_matrix(model_samples, gt_samples).mean())
    d_ss = _within(distance_matrix(model_samples, model_samples), within_pairs)
    d_yy = _within(distance_matrix(gt_samples, gt_samples), within_pairs)
    return 2.0 * cross - d_ss - d_yy


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int]]
    ious: np.ndarray
    mean_iou: float


def hungarian_matched_iou(a_set: SampleSet, b_set: SampleSet, max_lcm: Optional[int] = None) -> MatchResult:
    """Optimal one-to-one matching after duplicating both sets to their LCM size.

    Pairs refer to indices of the original sets. Undefined IoU counts as 1.
    """
    if not len(a_set) or not len(b_set):
        raise ValueError("hungarian_matched_iou needs non-empty sample sets")
    cap = Config.MAX_LCM if max_lcm is None else max_lcm
    size = math.lcm(len(a_set), len(b_set))
    if size > cap:
        raise ValueError(f"LCM of set sizes {len(a_set)} and {len(b_set)} is {size}, above the cap {cap}")
    iou = np.nan_to_num(set_iou(a_set, b_set), nan=1.0)
    ia = np.arange(size) % len(a_set)
    ib = np.arange(size) % len(b_set)
    tiled = iou[ia[:, None], ib[None, :]]
    rows, cols = linear_sum_assignment(tiled, maximize=True)
    matched = tiled[rows, cols]
    pairs = [(int(ia[r]), int(ib[c])) for r, c in zip(rows, cols)]
    return MatchResult(pairs=pairs, ious=matched, mean_iou=float(matched.mean()))


def sample_diversity(samples: SampleSet) -> float:
    """Mean 1 - IoU over ordered distinct pairs of one image's samples."""
    return _within(distance_matrix(samples, samples), "distinct")


def presence(samples: SampleSet) -> np.ndarray:
    """Whether each sample contains any stochastic-class pixel."""
    flat = samples.maps.reshape(len(samples), -1)
    return np.isin(flat, samples.stochastic_classes).any(axis=1)


def presence_fraction(samples: SampleSet) -> float:
    return float(presence(samples).mean())


def presence_toggle_rate(samples: SampleSet) -> float:
    """Fraction of distinct sample pairs where exactly one sample is non-empty."""
    p = presence(samples)
    n = len(p)
    if n < 2:
        return 0.0
    k = int(p.sum())
    return 2.0 * k * (n - k) / (n * (n - 1))
