"""GECO: reconstruction-constrained ELBO with an adaptive Lagrange multiplier."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Tuple, Union

from hpunet.backend import functional as F
from hpunet.backend.tensor import Tensor
from hpunet.errors import ConfigError, ConstraintError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GecoState:
    """Multiplier and constraint moving average of one training run."""

    lambda_: float = 1.0
    ema_constraint: float = 0.0
    ema_decay: float = 0.99
    step_size: float = 1e-2
    lambda_min: float = 1e-6
    lambda_max: float = 1e6
    kappa: float = 0.05
    steps: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError(f"GECO ema_decay must lie in (0, 1), got {self.ema_decay}")
        if not 0.0 < self.lambda_min <= self.lambda_max:
            raise ConfigError(f"GECO lambda bounds [{self.lambda_min}, {self.lambda_max}] are invalid")
        if not self.lambda_min <= self.lambda_ <= self.lambda_max:
            raise ConfigError(
                f"GECO lambda {self.lambda_} outside [{self.lambda_min}, {self.lambda_max}]")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GecoState":
        return cls(**data)


def geco_update(state: GecoState, constraint: float) -> GecoState:
    """ema <- g*ema + (1-g)*c, then lambda <- clamp(lambda * exp(eta * ema))."""
    if not math.isfinite(constraint):
        raise ConstraintError(f"Non-finite GECO constraint {constraint} at step {state.steps}")
    ema = state.ema_decay * state.ema_constraint + (1.0 - state.ema_decay) * constraint
    lam = state.lambda_ * math.exp(state.step_size * ema)
    lam = min(max(lam, state.lambda_min), state.lambda_max)
    return replace(state, lambda_=lam, ema_constraint=ema, steps=state.steps + 1)


def geco_step(state: GecoState, masked_ce_sum: Union[Tensor, float], selected_count: int,
              kl_sum: Union[Tensor, float], batch_size: int) -> Tuple[Tensor, GecoState]:
    """Loss lambda * (CE_sum - kappa * count) / N + KL, and the updated state.

    The multiplier enters the loss as a constant. The update is driven by
    the per-pixel constraint CE_sum / count - kappa.
    """
    if selected_count <= 0:
        raise ValueError(f"selected_count must be positive, got {selected_count}")
    ce_value = masked_ce_sum.item() if isinstance(masked_ce_sum, Tensor) else float(masked_ce_sum)
    constraint = ce_value / selected_count - state.kappa
    new_state = geco_update(state, constraint)

    offset = -state.kappa * selected_count
    scale = state.lambda_ / batch_size
    if isinstance(masked_ce_sum, Tensor):
        rec = F.mul(F.add(masked_ce_sum, offset), scale)
    else:
        rec = Tensor((ce_value + offset) * scale)
    loss = F.add(rec, kl_sum) if isinstance(kl_sum, Tensor) else F.add(rec, float(kl_sum))
    logger.debug("GECO step %d: constraint=%.5f lambda=%.5g", state.steps, constraint, new_state.lambda_)
    return loss, new_state
