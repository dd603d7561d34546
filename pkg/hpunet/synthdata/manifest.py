"""Dataset persistence: one HPUT archive plus a JSON manifest."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from hpunet.io.archive import archive_read, archive_write
from hpunet.synthdata.extrapolation import gen_extrapolation
from hpunet.synthdata.instances import gen_instances
from hpunet.synthdata.lesions import gen_ambiguous_lesions
from hpunet.synthdata.sample import Dataset, TaskSample

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
ARCHIVE_NAME = "data.hput"


@dataclass
class DatasetManifest:
    task: str
    count: int
    image_size: int
    num_classes: int
    input_channels: int
    params: Dict[str, Any]
    seed: int
    archive: str = ARCHIVE_NAME
    samples: List[Dict[str, Any]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


def _records(dataset: Dataset) -> Dict[str, np.ndarray]:
    records: Dict[str, np.ndarray] = {}
    for i, s in enumerate(dataset.samples):
        records[f"image/{i:05d}"] = s.image.astype(np.float32)
        for g, t in enumerate(s.targets):
            records[f"target/{i:05d}/{g}"] = t.astype(np.int32)
        if s.instances is not None:
            records[f"instances/{i:05d}"] = s.instances.astype(np.int32)
        if s.visible is not None:
            records[f"visible/{i:05d}"] = s.visible.astype(np.uint8)
    return records


def build_manifest(dataset: Dataset) -> DatasetManifest:
    entries = []
    for i, s in enumerate(dataset.samples):
        refs = {"image": f"image/{i:05d}",
                "targets": [f"target/{i:05d}/{g}" for g in range(len(s.targets))],
                "metadata": s.metadata}
        if s.instances is not None:
            refs["instances"] = f"instances/{i:05d}"
        if s.visible is not None:
            refs["visible"] = f"visible/{i:05d}"
        entries.append(refs)
    return DatasetManifest(task=dataset.task, count=len(dataset), image_size=dataset.image_size,
                           num_classes=dataset.num_classes, input_channels=dataset.input_channels,
                           params=dataset.params, seed=dataset.seed, samples=entries)


def save_dataset(dataset: Dataset, out_dir: Union[str, Path]) -> Path:
    """Write data.hput and manifest.json under `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(dataset)
    archive_write(out_dir / manifest.archive, _records(dataset))
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")
    logger.info("Saved %s dataset of %d samples to %s", dataset.task, len(dataset), out_dir)
    return manifest_path


def load_manifest(data_dir: Union[str, Path]) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"No dataset manifest at {path}")
    return DatasetManifest.from_json(path.read_text(encoding="utf-8"))


def load_dataset(data_dir: Union[str, Path]) -> Dataset:
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    records = archive_read(data_dir / manifest.archive)
    samples = []
    for refs in manifest.samples:
        samples.append(TaskSample(
            image=records[refs["image"]],
            targets=[records[name] for name in refs["targets"]],
            instances=records[refs["instances"]] if "instances" in refs else None,
            visible=records[refs["visible"]] if "visible" in refs else None,
            metadata=refs.get("metadata", {}),
        ))
    return Dataset(manifest.task, samples, num_classes=manifest.num_classes,
                   input_channels=manifest.input_channels, seed=manifest.seed,
                   params=manifest.params, redraw_ids=manifest.task == "instances",
                   augment=manifest.task != "extrapolation")


def generate(task: str, count: int, seed: int, **params: Any) -> Dataset:
    """Run the generator for `task` with its keyword parameters."""
    if task == "lesions":
        dataset, _ = gen_ambiguous_lesions(count, seed=seed, **params)
        return dataset
    if task == "instances":
        return gen_instances(count, seed=seed, **params)
    if task == "extrapolation":
        mask_fraction = params.pop("mask_fraction", 0.5)
        base_seed = params.pop("base_seed", seed)
        base = gen_instances(count, seed=base_seed, **params)
        return gen_extrapolation(base, mask_fraction=mask_fraction, seed=seed)
    raise ValueError(f"Unknown task {task!r}")


def regenerate(manifest: DatasetManifest) -> Dataset:
    """Rebuild a dataset from its manifest's generator parameters."""
    params = dict(manifest.params)
    if manifest.task == "instances":
        params["k_range"] = tuple(params["k_range"])
    if manifest.task == "lesions":
        params["boundary_jitter"] = tuple(params["boundary_jitter"])
    if manifest.task == "extrapolation":
        params["k_range"] = tuple(params["k_range"])
    return generate(manifest.task, manifest.count, manifest.seed, **params)
