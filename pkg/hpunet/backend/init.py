"""Weight initializers."""
from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor

TRUNCATION = 2.0


def init_orthogonal(shape: Sequence[int], gain: float, rng: RngState,
                    dtype: Any = np.float32) -> Tensor:
    """Orthogonal init of the (shape[0], prod(shape[1:])) flattening.

    The flattened matrix M satisfies M M^T = gain^2 I when it is wide and
    M^T M = gain^2 I when it is tall.
    """
    shape = tuple(int(s) for s in shape)
    rows = shape[0]
    cols = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    a = rng.normal((max(rows, cols), min(rows, cols)), dtype=np.float64)
    q, r = np.linalg.qr(a)
    # Sign fix makes the distribution uniform over orthogonal matrices.
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)[None, :]
    if rows < cols:
        q = q.T
    return Tensor((gain * q).reshape(shape).astype(dtype), requires_grad=True)


def init_truncnormal(shape: Sequence[int], sigma: float, rng: RngState,
                     dtype: Any = np.float32) -> Tensor:
    """Normal(0, sigma^2) values resampled until they lie within +-2 sigma."""
    if sigma <= 0:
        return Tensor(np.zeros(tuple(shape), dtype=dtype), requires_grad=True)
    values = rng.normal(tuple(shape), dtype=np.float64) * sigma
    bound = TRUNCATION * sigma
    outside = np.abs(values) > bound
    while outside.any():
        values[outside] = rng.normal((int(outside.sum()),), dtype=np.float64) * sigma
        outside = np.abs(values) > bound
    return Tensor(values.astype(dtype), requires_grad=True)
