"""Stochastic top-k reconstruction masks and the beta-weighted ELBO."""
from __future__ import annotations

import math
from typing import Optional, Union

import numpy as np

from hpunet.backend import functional as F
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor

LOG_EPS = 1e-12
# Guards ceil() against k*M landing a rounding error above an integer.
_CEIL_SLACK = 1e-9


def selection_count(k: float, candidates: int) -> int:
    if not 0.0 < k <= 1.0:
        raise ValueError(f"top-k fraction must lie in (0, 1], got {k}")
    return min(candidates, int(math.ceil(k * candidates - _CEIL_SLACK)))


def topk_mask(ce_map: Union[Tensor, np.ndarray], k: float, rng: Optional[RngState],
              ignore: Optional[np.ndarray] = None, noise: bool = True) -> np.ndarray:
    """Boolean mask of ceil(k * M) pixels chosen over the whole batch.

    Pixels are ranked by ln(ce + eps) plus independent Gumbel(0, 1) noise
    (Gumbel top-k). Ignored pixels are never selected. With `noise=False`
    the ranking is the plain CE order, ties broken by position.
    """
    ce = np.asarray(ce_map.data if isinstance(ce_map, Tensor) else ce_map, dtype=np.float64)
    ignored = np.zeros(ce.shape, dtype=bool) if ignore is None else np.asarray(ignore, dtype=bool)
    if ignored.shape != ce.shape:
        raise ValueError(f"ignore mask {ignored.shape} does not match CE map {ce.shape}")
    candidates = int((~ignored).sum())
    count = selection_count(k, candidates)
    if count == candidates:
        return ~ignored

    scores = np.log(ce + LOG_EPS)
    if noise:
        if rng is None:
            raise ValueError("topk_mask needs an rng when noise is enabled")
        scores = scores + rng.gumbel(ce.shape)
    scores = np.where(ignored, -np.inf, scores).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    mask = np.zeros(scores.size, dtype=bool)
    mask[order[:count]] = True
    return mask.reshape(ce.shape)


def masked_ce_sum(ce_map: Tensor, mask: np.ndarray) -> Tensor:
    """Sum of the CE map over selected pixels; unselected pixels get no gradient."""
    return F.tsum(F.mul(ce_map, Tensor(np.asarray(mask).astype(ce_map.data.dtype))))


def elbo_loss(ce_map: Tensor, mask: np.ndarray, kl_sum: Union[Tensor, float], beta: float) -> Tensor:
    """Masked CE summed over pixels and averaged over the batch, plus beta * KL."""
    rec = F.mul(masked_ce_sum(ce_map, mask), 1.0 / ce_map.shape[0])
    if beta == 0:
        return rec
    if isinstance(kl_sum, Tensor):
        return F.add(rec, F.mul(kl_sum, float(beta)))
    return F.add(rec, float(beta) * float(kl_sum))
