"""Instance segmentation quality: adapted Rand error and AP at IoU 0.5."""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse

AP_IOU_THRESHOLD = 0.5


def _contingency(pred: np.ndarray, gt: np.ndarray) -> sparse.csr_matrix:
    _, gt_idx = np.unique(gt, return_inverse=True)
    _, pred_idx = np.unique(pred, return_inverse=True)
    ones = np.ones(gt_idx.size, dtype=np.float64)
    return sparse.coo_matrix((ones, (gt_idx.ravel(), pred_idx.ravel()))).tocsr()


def adapted_rand_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """1 - F1 of pixel-pair co-membership, restricted to gt foreground.

    Pairs are ordered and include each pixel with itself. Predicted label 0
    is an ordinary segment.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"Instance maps differ in shape: {pred.shape} vs {gt.shape}")
    fg = gt != 0
    if not fg.any():
        raise ValueError("Adapted Rand error is undefined when the ground truth is all background")
    table = _contingency(pred[fg], gt[fg])
    sum_ij = float(table.multiply(table).sum())
    sum_a = float(np.square(np.asarray(table.sum(axis=1))).sum())
    sum_b = float(np.square(np.asarray(table.sum(axis=0))).sum())
    precision = sum_ij / sum_b
    recall = sum_ij / sum_a
    return 1.0 - 2.0 * precision * recall / (precision + recall)


def instance_masks(labeling: np.ndarray) -> List[np.ndarray]:
    """One boolean mask per non-zero label, in label order."""
    labeling = np.asarray(labeling)
    return [labeling == k for k in np.unique(labeling) if k != 0]


def instance_confidences(labeling: np.ndarray, prob_samples: np.ndarray,
                         stochastic_classes: Sequence[int]) -> Dict[int, float]:
    """Per instance, the softmax mass of the stochastic classes averaged over samples and pixels.

    `prob_samples` has shape (S, C, H, W).
    """
    labeling = np.asarray(labeling)
    mass = prob_samples[:, list(stochastic_classes)].sum(axis=1).mean(axis=0)
    return {int(k): float(mass[labeling == k].mean()) for k in np.unique(labeling) if k != 0}


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def average_precision(tp: Sequence[bool], num_gt: int) -> float:
    """All-points interpolated area under the precision-recall curve."""
    tp = np.asarray(tp, dtype=np.float64)
    if num_gt == 0 or tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, tp.size + 1)
    recall = cum_tp / num_gt
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


def ap50(predictions: Sequence[Tuple[np.ndarray, float]], gt_instances: Sequence[np.ndarray]) -> float:
    """AP at IoU > 0.5 with greedy matching by descending confidence.

    With no ground-truth instances the score is 1 when there are no
    predictions either, else 0.
    """
    if not gt_instances:
        return 1.0 if not predictions else 0.0
    if not predictions:
        return 0.0
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i][1])
    matched = np.zeros(len(gt_instances), dtype=bool)
    tp = []
    for i in order:
        mask = predictions[i][0]
        best, best_iou = -1, AP_IOU_THRESHOLD
        for j, g in enumerate(gt_instances):
            if matched[j]:
                continue
            iou = _mask_iou(mask, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            matched[best] = True
        tp.append(best >= 0)
    return average_precision(tp, len(gt_instances))


def labeling_ap50(labeling: np.ndarray, confidences: Dict[int, float], gt: np.ndarray) -> float:
    """ap50 for a predicted labeling (cluster 0 is background) against a gt instance map."""
    predictions = [(np.asarray(labeling) == k, confidences[k]) for k in sorted(confidences)]
    return ap50(predictions, instance_masks(gt))
