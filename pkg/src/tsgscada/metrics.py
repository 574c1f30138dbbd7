"""Rank n@tIoU=m and mIoU over ranked per-query predictions."""
from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 5)
DEFAULT_THRESHOLDS = (0.5, 0.7)


def _bounds(seg):
    if hasattr(seg, "start"):
        return float(seg.start), float(seg.end)
    return float(seg[0]), float(seg[1])


def temporal_iou(a, b):
    """|a ∩ b| / |a ∪ b| for half-open intervals; accepts segments or (start, end[, ...])."""
    s1, e1 = _bounds(a)
    s2, e2 = _bounds(b)
    inter = max(0.0, min(e1, e2) - max(s1, s2))
    union = max(e1, e2) - min(s1, s2)
    return inter / union if union > 0 else 0.0


def _hit(iou, m, strict):
    return iou > m if strict else iou >= m


def rank_n_at_iou(predictions, targets, n, m, strict=True):
    """Percentage of queries with a top-``n`` prediction whose tIoU exceeds ``m``.

    ``predictions[i]`` is the ranked list for query ``i``.  A query with no
    predictions counts as a miss.
    """
    if len(predictions) != len(targets):
        raise ValueError(f"{len(predictions)} prediction lists for {len(targets)} targets")
    if not targets:
        return 0.0
    hits = 0
    for preds, gt in zip(predictions, targets):
        if not preds:
            log.warning("query without predictions counted as a miss")
            continue
        if any(_hit(temporal_iou(p, gt), m, strict) for p in preds[:n]):
            hits += 1
    return 100.0 * hits / len(targets)


def mean_iou(predictions, targets):
    """Mean tIoU of each query's top-1 prediction, as a percentage."""
    if len(predictions) != len(targets):
        raise ValueError(f"{len(predictions)} prediction lists for {len(targets)} targets")
    if not targets:
        return 0.0
    total = 0.0
    for preds, gt in zip(predictions, targets):
        if preds:
            total += temporal_iou(preds[0], gt)
        else:
            log.warning("query without predictions counted as IoU 0")
    return 100.0 * total / len(targets)


def metric_key(n, m):
    return f"rank{n}_iou{str(m).replace('0.', '0')}"


def evaluate(predictions, targets, ranks=DEFAULT_RANKS, thresholds=DEFAULT_THRESHOLDS,
             strict=True):
    """Report dict such as {rank1_iou05, rank1_iou07, rank5_iou05, rank5_iou07, miou}."""
    report = {}
    for n in ranks:
        for m in thresholds:
            report[metric_key(n, m)] = rank_n_at_iou(predictions, targets, n, m, strict)
    report["miou"] = mean_iou(predictions, targets)
    return report


def random_ranking_baseline(anchors, targets, m=0.5, strict=True):
    """Expected Rank1@m (%) when the top-1 prediction is a uniformly random anchor."""
    segs = np.asarray(anchors.segments if hasattr(anchors, "segments") else anchors)
    total = 0.0
    for gt in targets:
        hits = sum(_hit(temporal_iou(seg, gt), m, strict) for seg in segs)
        total += hits / len(segs)
    return 100.0 * total / max(len(targets), 1)
