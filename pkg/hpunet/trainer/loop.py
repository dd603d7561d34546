"""The optimization loop."""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from hpunet.backend import functional as F
from hpunet.backend.ops import softmax_ce_map
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tape, Tensor
from hpunet.errors import ConfigError, TrainingDivergedError
from hpunet.io.config_file import RunConfig, render_config
from hpunet.model.config import ModelConfig
from hpunet.model.latents import LatentPlan
from hpunet.model.params import ParameterStore, build_parameters
from hpunet.model.posterior import posterior_forward
from hpunet.model.unet import decode_with_prior, unet_encode
from hpunet.objectives.geco import GecoState, geco_step
from hpunet.objectives.kl import kl_per_scale
from hpunet.objectives.topk import elbo_loss, masked_ce_sum, topk_mask
from hpunet.synthdata.sample import Dataset
from hpunet.trainer.batching import Batch, draw_batch
from hpunet.trainer.checkpoint import Checkpoint, save_checkpoint
from hpunet.trainer.config import TrainConfig
from hpunet.trainer.optimizer import AdamW
from hpunet.trainer.session import checkpoint_name, run_files
from hpunet.trainer.trace import read_curves, write_curves

logger = logging.getLogger(__name__)

Metrics = Dict[str, Any]


def initial_geco(train_cfg: TrainConfig) -> GecoState:
    return GecoState(
        lambda_=train_cfg.geco_lambda_init,
        ema_decay=train_cfg.geco_ema_decay,
        step_size=train_cfg.geco_step_size,
        lambda_min=train_cfg.geco_lambda_min,
        lambda_max=train_cfg.geco_lambda_max,
        kappa=train_cfg.kappa,
    )


def make_optimizer(params: ParameterStore, train_cfg: TrainConfig) -> AdamW:
    return AdamW(params, beta1=train_cfg.adam_beta1, beta2=train_cfg.adam_beta2,
                 eps=train_cfg.adam_eps, weight_decay=train_cfg.weight_decay)


def compute_loss(params: ParameterStore, batch: Batch, geco_state: GecoState, rng: RngState,
                 train_cfg: TrainConfig) -> Tuple[Tensor, GecoState, Metrics]:
    """Build the training loss on the active tape.

    One posterior sample per image is injected into the prior decoder, so
    the priors are conditioned on the same latents as the posteriors.
    """
    num_classes = params.config.num_classes
    image = Tensor(batch.images)
    onehot = Tensor(F.one_hot(batch.targets, num_classes, ignore=batch.ignore))
    posteriors, z = posterior_forward(params, image, onehot, rng)
    out = decode_with_prior(params, unet_encode(params, image), LatentPlan.inject(z), rng=None)
    ce = softmax_ce_map(out.logits, batch.targets, ignore=batch.ignore)
    mask = topk_mask(ce, train_cfg.topk_k, rng, ignore=batch.ignore)
    selected = int(mask.sum())
    ce_sum = masked_ce_sum(ce, mask)
    kl_terms = kl_per_scale(posteriors, out.priors)
    kl = kl_terms[0]
    for t in kl_terms[1:]:
        kl = F.add(kl, t)

    metrics: Metrics = {
        "ce_per_pixel": ce_sum.item() / max(selected, 1),
        "ce_mean": float(ce.data[~batch.ignore].mean()) if (~batch.ignore).any() else 0.0,
        "kl_total": kl.item(),
        "kl_per_scale": [t.item() for t in kl_terms],
        "selected": selected,
    }
    if not (math.isfinite(metrics["ce_per_pixel"]) and math.isfinite(metrics["kl_total"])):
        raise TrainingDivergedError("Non-finite reconstruction or KL term", metrics)

    if train_cfg.objective == "geco":
        metrics["lambda"] = geco_state.lambda_
        loss, new_state = geco_step(geco_state, ce_sum, selected, kl, len(batch))
    else:
        metrics["lambda"] = 1.0
        loss, new_state = elbo_loss(ce, mask, kl, train_cfg.beta), geco_state
    metrics["loss"] = loss.item()
    if not math.isfinite(metrics["loss"]):
        raise TrainingDivergedError("Non-finite loss", metrics)
    return loss, new_state, metrics


def train_step(params: ParameterStore, batch: Batch, geco_state: GecoState, rng: RngState,
               train_cfg: TrainConfig, optimizer: AdamW, step: int) -> Tuple[Metrics, GecoState]:
    """One optimizer update; parameters are modified in place.

    Args:
        params: Model parameters, updated by the optimizer.
        batch: Images, targets and ignore masks of this step.
        geco_state: Multiplier state before the step.
        rng: Step RNG for posterior noise and top-k Gumbel noise.
        train_cfg: Objective and schedule settings.
        optimizer: AdamW holding the moment estimates.
        step: Iteration index, used for the learning-rate schedule.

    Returns:
        The step's metrics row and the updated GECO state.
    """
    with Tape() as tape:
        loss, new_state, metrics = compute_loss(params, batch, geco_state, rng, train_cfg)
    tape.backward(loss, params.tensors())
    lr = train_cfg.learning_rate(step)
    optimizer.step(params, lr)
    metrics.update({"step": step, "lr": lr})
    return metrics, new_state


def _check_compatible(model_cfg: ModelConfig, dataset: Dataset) -> None:
    if model_cfg.input_channels != dataset.input_channels:
        raise ConfigError(
            f"model.input_channels = {model_cfg.input_channels} but the {dataset.task} dataset "
            f"has {dataset.input_channels} input channels")
    if model_cfg.num_classes != dataset.num_classes:
        raise ConfigError(
            f"model.num_classes = {model_cfg.num_classes} but the {dataset.task} dataset "
            f"has {dataset.num_classes} classes")


def _snapshot(params: ParameterStore, optimizer: AdamW, geco: GecoState, iteration: int,
              model_cfg: ModelConfig, train_cfg: TrainConfig) -> Checkpoint:
    return Checkpoint(
        params=params.copy(), geco=geco, iteration=iteration, model_config=model_cfg,
        train_config=train_cfg,
        adam_m={n: a.copy() for n, a in optimizer.m.items()},
        adam_v={n: a.copy() for n, a in optimizer.v.items()},
        adam_t=optimizer.t,
    )


def run_training(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset: Dataset,
                 run_dir: Optional[Union[str, Path]] = None,
                 resume: Optional[Checkpoint] = None) -> Tuple[Checkpoint, List[Metrics]]:
    """Train from scratch (or from `resume`) and return the final checkpoint and curve rows.

    Args:
        model_cfg: Architecture; must match the dataset's channels and classes.
        train_cfg: Objective, schedule and seed.
        dataset: Training images with their sampled targets.
        run_dir: If given, periodic checkpoints, the final checkpoint, the
            rendered config and the curves CSV are written here.
        resume: Checkpoint to continue from; its iteration count is kept.

    Returns:
        (final checkpoint, one metrics row per step)

    Raises:
        ConfigError: If the configs are invalid or do not fit the dataset.
        TrainingDivergedError: If the loss becomes non-finite.
    """
    model_cfg.validate()
    train_cfg.validate()
    if len(dataset) == 0:
        raise ValueError("Training dataset is empty")
    _check_compatible(model_cfg, dataset)

    root = RngState(train_cfg.seed)
    files = run_files(run_dir) if run_dir is not None else None
    rows: List[Metrics] = []
    if resume is not None:
        params = resume.params.copy()
        optimizer = make_optimizer(params, train_cfg)
        optimizer.load_state({**{f"adam_m/{n}": a for n, a in resume.adam_m.items()},
                              **{f"adam_v/{n}": a for n, a in resume.adam_v.items()}}, resume.adam_t)
        geco = resume.geco
        start = resume.iteration
        if files is not None and files["curves"].exists():
            rows = [r for r in read_curves(files["curves"]) if r["step"] < start]
        logger.info("Resuming from iteration %d", start)
    else:
        params = build_parameters(model_cfg, root.derive("init"))
        optimizer = make_optimizer(params, train_cfg)
        geco = initial_geco(train_cfg)
        start = 0

    if files is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        files["config"].write_text(render_config(RunConfig(model_cfg, train_cfg)), encoding="utf-8")

    num_scales = len(model_cfg.enabled_levels())
    step = start
    try:
        for step in range(start, train_cfg.iterations):
            rng = root.derive("step", step)
            batch = draw_batch(dataset, train_cfg.batch_size, rng, augment=train_cfg.augment,
                               max_translation=train_cfg.max_translation)
            metrics, geco = train_step(params, batch, geco, rng, train_cfg, optimizer, step)
            if step % train_cfg.eval_every == 0 or step == train_cfg.iterations - 1:
                rows.append(metrics)
                logger.info("step %d ce/pixel=%.5f lambda=%.5g lr=%.3g kl=%.4f", step,
                            metrics["ce_per_pixel"], metrics["lambda"], metrics["lr"], metrics["kl_total"])
            if files is not None and (step + 1) % train_cfg.checkpoint_every == 0:
                save_checkpoint(Path(run_dir) / checkpoint_name(step + 1),
                                _snapshot(params, optimizer, geco, step + 1, model_cfg, train_cfg))
    except TrainingDivergedError as e:
        last = e.metrics if e.metrics is not None else (rows[-1] if rows else None)
        logger.error("Training diverged at step %d: %s; last metrics: %s", step, e, last)
        if files is not None and rows:
            write_curves(files["curves"], rows, num_scales)
        raise

    final = _snapshot(params, optimizer, geco, max(train_cfg.iterations, start), model_cfg, train_cfg)
    if files is not None:
        save_checkpoint(files["final"], final)
        write_curves(files["curves"], rows, num_scales)
    return final, rows


def parameter_bytes(params: ParameterStore) -> bytes:
    """Concatenated raw parameter bytes, for reproducibility comparisons."""
    return b"".join(np.ascontiguousarray(t.data).tobytes() for _, t in params.items())
