"""Per-image evaluation of a trained model on a synthetic dataset."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hpunet.backend.functional import one_hot, softmax
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.clustering.hamming import SampleStack, greedy_hamming_cluster
from hpunet.clustering.postprocess import Fallback, postprocess
from hpunet.metrics.bootstrap import bootstrap_mean_std
from hpunet.metrics.distribution import (
    ged2, hungarian_matched_iou, presence_fraction, sample_diversity,
)
from hpunet.metrics.instance import adapted_rand_error, instance_confidences, labeling_ap50
from hpunet.metrics.iou import AbsencePolicy, SampleSet, iou_fg
from hpunet.model.latents import LatentPlan
from hpunet.model.params import ParameterStore
from hpunet.model.posterior import reconstruct_labels
from hpunet.model.unet import sample_segmentations
from hpunet.synthdata.sample import Dataset

logger = logging.getLogger(__name__)

METRICS = ("ged2", "hiou", "iourec", "rand", "diversity", "presence", "ap50")
INSTANCE_METRICS = ("rand", "ap50")


@dataclass
class EvalSettings:
    num_samples: int = 16
    bootstrap: int = 1000
    seed: int = 0
    alpha: Optional[int] = None
    erosion_n: int = 5
    majority_m: int = 11
    fallback: Fallback = Fallback.KEEP_LABEL
    plan_modes: Optional[Sequence[str]] = None


@dataclass
class MetricSummary:
    name: str
    mean: float
    std: float
    count: int


@dataclass
class EvalReport:
    summaries: List[MetricSummary]
    per_image: Dict[str, List[Optional[float]]] = field(default_factory=dict)

    def table(self) -> str:
        lines = [f"{'metric':<10} {'mean':>10}   {'std':>8} {'images':>7}"]
        for s in self.summaries:
            lines.append(f"{s.name:<10} {s.mean:>10.4f} ± {s.std:>8.4f} {s.count:>7d}")
        return "\n".join(lines)


def task_classes(dataset: Dataset) -> Tuple[Tuple[int, ...], AbsencePolicy]:
    """Stochastic foreground classes and the absence policy of a task."""
    classes = tuple(range(1, dataset.num_classes))
    if dataset.task == "lesions":
        return classes, AbsencePolicy.ABSENCE_IS_ONE
    return classes, AbsencePolicy.ABSENCE_EXCLUDED


def cluster_samples(samples: np.ndarray, num_classes: int, settings: EvalSettings, rng: RngState) -> np.ndarray:
    stack = SampleStack.from_samples(samples, num_classes)
    alpha = settings.alpha if settings.alpha is not None else samples.shape[0]
    labeling = greedy_hamming_cluster(stack, alpha, background_class=0, rng=rng)
    return postprocess(labeling, settings.erosion_n, settings.majority_m, settings.fallback)


def evaluate_image(params: ParameterStore, dataset: Dataset, index: int, metrics: Sequence[str],
                   settings: EvalSettings) -> Dict[str, Optional[float]]:
    sample = dataset[index]
    classes, policy = task_classes(dataset)
    C = dataset.num_classes
    rng = RngState(settings.seed).derive("eval", index)
    image = Tensor(sample.image[None].astype(np.float32))
    plan = (LatentPlan.from_modes(settings.plan_modes) if settings.plan_modes
            else LatentPlan.sample(params.config))
    logits = sample_segmentations(params, image, plan, rng, settings.num_samples)[:, 0]
    maps = logits.argmax(axis=1)
    model_set = SampleSet(maps, C, classes, policy)
    gt_set = SampleSet.from_list(sample.targets, C, classes, policy)

    out: Dict[str, Optional[float]] = {}
    labeling = None
    for name in metrics:
        if name == "ged2":
            out[name] = ged2(model_set, gt_set)
        elif name == "hiou":
            out[name] = hungarian_matched_iou(model_set, gt_set).mean_iou
        elif name == "diversity":
            out[name] = sample_diversity(model_set)
        elif name == "presence":
            out[name] = presence_fraction(model_set)
        elif name == "iourec":
            values = []
            for t in sample.targets:
                onehot = Tensor(one_hot(t[None], C))
                rec = reconstruct_labels(params, image, onehot)[0]
                v = iou_fg(rec, t, classes, policy)
                if v is not None:
                    values.append(v)
            out[name] = float(np.mean(values)) if values else None
        elif name in INSTANCE_METRICS:
            if sample.instances is None or not sample.instances.any():
                out[name] = None
                continue
            if labeling is None:
                labeling = cluster_samples(maps, C, settings, rng.derive("cluster"))
            if name == "rand":
                out[name] = adapted_rand_error(labeling, sample.instances)
            else:
                probs = softmax(logits, axis=1)
                conf = instance_confidences(labeling, probs, classes)
                out[name] = labeling_ap50(labeling, conf, sample.instances)
        else:
            raise ValueError(f"Unknown metric {name!r}; choose from {METRICS}")
    return out


def evaluate_dataset(params: ParameterStore, dataset: Dataset, metrics: Sequence[str],
                     settings: EvalSettings) -> EvalReport:
    """Mean and bootstrap std over images of each metric; undefined values are skipped."""
    for name in metrics:
        if name not in METRICS:
            raise ValueError(f"Unknown metric {name!r}; choose from {METRICS}")
    per_image: Dict[str, List[Optional[float]]] = {name: [] for name in metrics}
    for index in range(len(dataset)):
        values = evaluate_image(params, dataset, index, metrics, settings)
        for name in metrics:
            per_image[name].append(values[name])
        logger.debug("image %d: %s", index, values)

    boot_rng = RngState(settings.seed).derive("bootstrap")
    summaries = []
    for name in metrics:
        defined = [v for v in per_image[name] if v is not None]
        if not defined:
            logger.warning("Metric %s is undefined on every image", name)
            summaries.append(MetricSummary(name, float("nan"), float("nan"), 0))
            continue
        mean, std = bootstrap_mean_std(defined, settings.bootstrap, boot_rng.derive(name))
        summaries.append(MetricSummary(name, mean, std, len(defined)))
    return EvalReport(summaries=summaries, per_image=per_image)
