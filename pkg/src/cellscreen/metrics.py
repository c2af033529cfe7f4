"""Segmentation overlap metrics and dataset-level evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyDataset
from .geometry import BinaryMask, InstanceLabelMap


@dataclass(frozen=True)
class EvalReport:
    per_image: list  # (image_id, dsc, iou)
    mean_dsc: float
    mean_iou: float
    mode: str


def _check_dims(a: BinaryMask, b: BinaryMask):
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice similarity 2|A∩B| / (|A|+|B|); two empty masks score 1.0."""
    _check_dims(a, b)
    denom = a.area + b.area
    if denom == 0:
        return 1.0
    inter = int((a.raster & b.raster).sum())
    return 2.0 * inter / denom


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; two empty masks score 1.0."""
    _check_dims(a, b)
    union = int((a.raster | b.raster).sum())
    if union == 0:
        return 1.0
    inter = int((a.raster & b.raster).sum())
    return inter / union


def _flatten(pred) -> BinaryMask:
    if isinstance(pred, InstanceLabelMap):
        return BinaryMask(pred.raster > 0)
    return pred


def _instance_masks(x) -> list[BinaryMask]:
    if isinstance(x, InstanceLabelMap):
        return [x.mask_for(lab) for lab in x.labels()]
    return [x]


def evaluate_dataset(predictions, ground_truth, mode: str = "whole_mask",
                     image_ids=None) -> EvalReport:
    """Score predictions against ground truth over a dataset.

    ``whole_mask`` flattens any nonzero label to foreground before
    comparing; ``per_instance`` matches instances greedily by IoU and
    averages over matched pairs.
    """
    if mode not in ("whole_mask", "per_instance"):
        raise ValueError(f"unknown mode {mode!r}")
    predictions, ground_truth = list(predictions), list(ground_truth)
    if len(predictions) != len(ground_truth):
        raise DimensionMismatch("prediction/ground-truth counts differ")
    if not predictions:
        raise EmptyDataset("no image pairs to evaluate")
    if image_ids is None:
        image_ids = [str(i) for i in range(len(predictions))]

    per_image = []
    for image_id, pred, gt in zip(image_ids, predictions, ground_truth):
        if mode == "whole_mask":
            pair_dsc = dice(_flatten(pred), _flatten(gt))
            pair_iou = iou(_flatten(pred), _flatten(gt))
        else:
            pair_dsc, pair_iou = _per_instance_scores(_instance_masks(pred), _instance_masks(gt))
        per_image.append((image_id, pair_dsc, pair_iou))
    return EvalReport(
        per_image=per_image,
        mean_dsc=float(np.mean([d for _, d, _ in per_image])),
        mean_iou=float(np.mean([i for _, _, i in per_image])),
        mode=mode,
    )


def _per_instance_scores(pred_masks, gt_masks):
    """Greedy max-IoU matching; unmatched instances score zero."""
    if not pred_masks and not gt_masks:
        return 1.0, 1.0
    pairs = sorted(
        ((iou(p, g), pi, gi) for pi, p in enumerate(pred_masks) for gi, g in enumerate(gt_masks)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_p, used_g = set(), set()
    dscs, ious = [], []
    for score, pi, gi in pairs:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        ious.append(score)
        dscs.append(dice(pred_masks[pi], gt_masks[gi]))
    unmatched = (len(pred_masks) - len(used_p)) + (len(gt_masks) - len(used_g))
    dscs.extend([0.0] * unmatched)
    ious.extend([0.0] * unmatched)
    return float(np.mean(dscs)), float(np.mean(ious))
