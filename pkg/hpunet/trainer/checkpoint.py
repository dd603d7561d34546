"""Checkpoints as HPUT archives: parameters, Adam moments and a JSON meta record."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from hpunet.errors import ArchiveError, UnsupportedVersionError
from hpunet.io.archive import archive_read, archive_write
from hpunet.model.config import ModelConfig
from hpunet.model.params import ParameterStore
from hpunet.objectives.geco import GecoState
from hpunet.trainer.config import TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def model_config_to_dict(config: ModelConfig) -> Dict[str, Any]:
    return asdict(config)


def model_config_from_dict(data: Dict[str, Any]) -> ModelConfig:
    data = dict(data)
    data["logsigma_clamp"] = tuple(data["logsigma_clamp"])
    if data.get("latent_enable") is not None:
        data["latent_enable"] = tuple(bool(f) for f in data["latent_enable"])
    return ModelConfig(**data)


def train_config_to_dict(config: TrainConfig) -> Dict[str, Any]:
    return asdict(config)


def train_config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    data = dict(data)
    data["lr_schedule"] = tuple((int(s), float(v)) for s, v in data["lr_schedule"])
    return TrainConfig(**data)


@dataclass
class Checkpoint:
    params: ParameterStore
    geco: GecoState
    iteration: int
    model_config: ModelConfig
    train_config: TrainConfig
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "iteration": checkpoint.iteration,
        "adam_t": checkpoint.adam_t,
        "geco": checkpoint.geco.to_dict(),
        "model_config": model_config_to_dict(checkpoint.model_config),
        "train_config": train_config_to_dict(checkpoint.train_config),
    }
    records: Dict[str, Any] = {"meta": json.dumps(meta, sort_keys=True)}
    for name, t in checkpoint.params.items():
        records[f"param/{name}"] = t.data
    for name, a in checkpoint.adam_m.items():
        records[f"adam_m/{name}"] = a
    for name, a in checkpoint.adam_v.items():
        records[f"adam_v/{name}"] = a
    archive_write(path, records)
    logger.info("Saved checkpoint at iteration %d to %s", checkpoint.iteration, path)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    records = archive_read(path)
    if "meta" not in records or not isinstance(records["meta"], str):
        raise ArchiveError(f"{path} is not a checkpoint (no meta record)")
    meta = json.loads(records["meta"])
    if meta.get("version") != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(
            f"Checkpoint {path} has version {meta.get('version')}, expected {CHECKPOINT_VERSION}")
    model_config = model_config_from_dict(meta["model_config"])
    arrays = {k[len("param/"):]: v for k, v in records.items() if k.startswith("param/")}
    params = ParameterStore.from_arrays(model_config, arrays)
    return Checkpoint(
        params=params,
        geco=GecoState.from_dict(meta["geco"]),
        iteration=int(meta["iteration"]),
        model_config=model_config,
        train_config=train_config_from_dict(meta["train_config"]),
        adam_m={k[len("adam_m/"):]: v for k, v in records.items() if k.startswith("adam_m/")},
        adam_v={k[len("adam_v/"):]: v for k, v in records.items() if k.startswith("adam_v/")},
        adam_t=int(meta["adam_t"]),
    )
