"""Bootstrap over images."""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from hpunet.backend.rng import RngState


def bootstrap_mean_std(values: Sequence[float], resamples: int, rng: RngState) -> Tuple[float, float]:
    """Mean of `values` and the standard deviation of its bootstrap replicates."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("bootstrap needs at least one value")
    mean = float(values.mean())
    if resamples <= 0 or values.size == 1:
        return mean, 0.0
    idx = rng.integers(values.size, size=(resamples, values.size))
    return mean, float(values[idx].mean(axis=1).std())
