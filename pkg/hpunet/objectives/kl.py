"""Analytic KL divergences between diagonal Gaussians."""
from __future__ import annotations

from typing import List, Sequence

from hpunet.backend import functional as F
from hpunet.backend.tensor import Tensor
from hpunet.model.latents import ScaleDistribution


def gaussian_kl_map(q: ScaleDistribution, p: ScaleDistribution) -> Tensor:
    """Per-position KL(q || p), written in terms of log sigma.

    KL = ln sp - ln sq + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
    """
    if q.shape != p.shape:
        raise ValueError(f"KL between mismatched shapes {q.shape} and {p.shape}")
    log_ratio = F.sub(p.log_sigma, q.log_sigma)
    var_ratio = F.mul(F.exp(F.mul(log_ratio, -2.0)), 0.5)
    mean_term = F.mul(F.mul(F.square(F.sub(q.mu, p.mu)), F.exp(F.mul(p.log_sigma, -2.0))), 0.5)
    return F.add(F.add(F.add(log_ratio, var_ratio), mean_term), -0.5)


def _check_aligned(posteriors: Sequence[ScaleDistribution], priors: Sequence[ScaleDistribution]) -> None:
    if len(posteriors) != len(priors):
        raise ValueError(f"{len(posteriors)} posterior scales vs {len(priors)} prior scales")
    for q, p in zip(posteriors, priors):
        if q.level != p.level or q.shape != p.shape:
            raise ValueError(
                f"Posterior level {q.level} {q.shape} is not aligned with prior level {p.level} {p.shape}")


def kl_per_scale(posteriors: Sequence[ScaleDistribution], priors: Sequence[ScaleDistribution]) -> List[Tensor]:
    """KL of each scale summed over positions and averaged over the batch."""
    _check_aligned(posteriors, priors)
    terms = []
    for q, p in zip(posteriors, priors):
        batch = q.shape[0]
        terms.append(F.mul(F.tsum(gaussian_kl_map(q, p)), 1.0 / batch))
    return terms


def hierarchical_kl(posteriors: Sequence[ScaleDistribution], priors: Sequence[ScaleDistribution]) -> Tensor:
    """Single-sample estimate of the hierarchical KL, a scalar."""
    terms = kl_per_scale(posteriors, priors)
    total = terms[0]
    for t in terms[1:]:
        total = F.add(total, t)
    return total
