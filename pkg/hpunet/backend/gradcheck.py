"""Central finite-difference checks for tape gradients."""
from __future__ import annotations

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tape, Tensor

DEFAULT_STEPS: Dict[str, float] = {"float32": 1e-3, "float64": 1e-5}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float,
                       entries: Optional[np.ndarray] = None) -> np.ndarray:
    """Central differences of the scalar fn() w.r.t. selected entries of `tensor`."""
    flat = tensor.data.reshape(-1)
    if entries is None:
        entries = np.arange(flat.size)
    out = np.zeros(len(entries), dtype=np.float64)
    for j, i in enumerate(entries):
        orig = flat[i].item()
        flat[i] = orig + step
        x_plus, f_plus = float(flat[i]), fn().item()
        flat[i] = orig - step
        x_minus, f_minus = float(flat[i]), fn().item()
        flat[i] = orig
        out[j] = (f_plus - f_minus) / (x_plus - x_minus)
    return out


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor],
                    step: Optional[float] = None, max_entries: Optional[int] = None,
                    rng: Optional[RngState] = None) -> float:
    """Worst relative error between tape and finite-difference gradients.

    `fn` must rebuild the loss from `inputs` deterministically on every call.
    With `max_entries`, a random subset of each input's entries is checked.
    """
    with Tape() as tape:
        loss = fn()
    tape.backward(loss, inputs)
    worst = 0.0
    for t in inputs:
        h = step if step is not None else DEFAULT_STEPS[t.kind]
        entries = None
        if max_entries is not None and t.size > max_entries:
            picker = rng or RngState(0)
            entries = np.sort(picker.permutation(t.size)[:max_entries])
        analytic = t.grad.reshape(-1).astype(np.float64)
        if entries is not None:
            analytic = analytic[entries]
        numeric = numerical_gradient(fn, t, h, entries)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
