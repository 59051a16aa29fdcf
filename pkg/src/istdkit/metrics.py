"""Segmentation scoring: pixel IoU, object-level detection rates, ROC curves.

Detection probability counts a ground-truth target as found when some
predicted 8-connected component's centroid lies within a distance threshold
of its centroid (greedy one-to-one matching by ascending distance, default
threshold 3 px — the convention this field's benchmarks use). The false
alarm rate is the pixel area of unmatched predicted components over the
total pixel count, reported in units of 1e-6; matched components contribute
no false pixels even where they spill past the target.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dataset_io import as_binary_mask
from .noise_repr import as_prediction_map

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
FA_SCALE = 1e6
DEFAULT_CENTROID_THRESHOLD = 3.0


@dataclass(frozen=True)
class MetricsReport:
    """IoU / detection / false-alarm values plus their raw integer counts."""

    iou: float
    pd: float
    fa: float  # false pixels per million
    tp_targets: int
    total_targets: int
    false_pixels: int
    total_pixels: int


@dataclass(frozen=True)
class RocCurve:
    """Per-threshold (threshold, fa, pd) points, thresholds strictly falling."""

    points: tuple


def _mask_pair(pred, gt):
    p = as_binary_mask(pred)
    g = as_binary_mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return p, g


def iou(pred, gt) -> float:
    """Intersection over union of target pixels.

    Accepts a single mask pair or two equal-length lists; lists aggregate
    as (sum of intersections) / (sum of unions). Two empty masks score 1.0.
    """
    if isinstance(pred, (list, tuple)) or isinstance(gt, (list, tuple)):
        if not isinstance(pred, (list, tuple)) or not isinstance(gt, (list, tuple)):
            raise ValueError("iou: pass either two masks or two lists of masks")
        if len(pred) != len(gt):
            raise ValueError(f"iou: list lengths differ ({len(pred)} vs {len(gt)})")
        intersection = 0
        union = 0
        for p_raw, g_raw in zip(pred, gt):
            p, g = _mask_pair(p_raw, g_raw)
            intersection += int((p & g).sum())
            union += int((p | g).sum())
    else:
        p, g = _mask_pair(pred, gt)
        intersection = int((p & g).sum())
        union = int((p | g).sum())
    if union == 0:
        return 1.0
    return intersection / union


def _components(mask):
    """Labels, centroids (y, x) and pixel areas of 8-connected components."""
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    centroids = ndimage.center_of_mass(mask, labels, range(1, count + 1))
    areas = np.bincount(labels.ravel())[1:]
    return [
        (index, centroid, int(area))
        for index, (centroid, area) in enumerate(zip(centroids, areas))
    ]

def _detection_counts(pred, gt, centroid_threshold):
    pred_comps = _components(pred)
    gt_comps = _components(gt)
    pairs = []
    for g_idx, g_centroid, _ in gt_comps:
        for p_idx, p_centroid, _ in pred_comps:
            dist = math.hypot(
                g_centroid[0] - p_centroid[0], g_centroid[1] - p_centroid[1]
            )
            if dist <= centroid_threshold:
                pairs.append((dist, g_idx, p_idx))
    pairs.sort()
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for _, g_idx, p_idx in pairs:
        if g_idx in matched_gt or p_idx in matched_pred:
            continue
        matched_gt.add(g_idx)
        matched_pred.add(p_idx)
    false_pixels = sum(
        area for p_idx, _, area in pred_comps if p_idx not in matched_pred
    )
    return len(matched_gt), len(gt_comps), false_pixels


def evaluate(preds, gts, centroid_threshold=DEFAULT_CENTROID_THRESHOLD) -> MetricsReport:
    """Score a dataset of predicted masks against ground truth.

    Integer counts are accumulated over all pairs; IoU is the micro-average
    (sum of intersections over sum of unions). With no ground-truth target
    anywhere, pd is vacuously 1.0.
    """
    if centroid_threshold <= 0:
        raise ValueError(f"centroid_threshold must be positive, got {centroid_threshold}")
    if len(preds) != len(gts):
        raise ValueError(f"evaluate: list lengths differ ({len(preds)} vs {len(gts)})")
    if not preds:
        raise ValueError("evaluate: empty dataset")

    tp = 0
    total = 0
    false_pixels = 0
    total_pixels = 0
    intersection = 0
    union = 0
    for pred_raw, gt_raw in zip(preds, gts):
        pred, gt = _mask_pair(pred_raw, gt_raw)
        i_tp, i_total, i_false = _detection_counts(pred, gt, centroid_threshold)
        tp += i_tp
        total += i_total
        false_pixels += i_false
        total_pixels += pred.size
        intersection += int((pred & gt).sum())
        union += int((pred | gt).sum())

    return MetricsReport(
        iou=1.0 if union == 0 else intersection / union,
        pd=1.0 if total == 0 else tp / total,
        fa=FA_SCALE * false_pixels / total_pixels,
        tp_targets=tp,
        total_targets=total,
        false_pixels=false_pixels,
        total_pixels=total_pixels,
    )


def pd_fa(pred, gt, centroid_threshold=DEFAULT_CENTROID_THRESHOLD) -> MetricsReport:
    """Object-level detection metrics for a single mask pair."""
    return evaluate([pred], [gt], centroid_threshold)


def roc(preds, gts, thresholds, centroid_threshold=DEFAULT_CENTROID_THRESHOLD) -> RocCurve:
    """Dataset-level (fa, pd) at each binarisation threshold.

    Prediction maps are binarised as ``score >= threshold``; thresholds must
    be strictly decreasing and lie in (0, 1).
    """
    if len(preds) != len(gts) or not preds:
        raise ValueError("roc: prediction and ground-truth lists must match and be non-empty")
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("roc: empty threshold list")
    if any(not (0.0 < t < 1.0) for t in thresholds):
        raise ValueError("roc: thresholds must lie strictly inside (0, 1)")
    if any(b >= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("roc: thresholds must be strictly decreasing")

    maps = [as_prediction_map(p) for p in preds]
    masks = [as_binary_mask(g) for g in gts]
    points = []
    for threshold in thresholds:
        binary = [m >= threshold for m in maps]
        report = evaluate(binary, masks, centroid_threshold)
        points.append((threshold, report.fa, report.pd))
    return RocCurve(points=tuple(points))
