"""Training objective: L = L_b + L_iou + L_offset.

All functions accept a single query (1-D score vectors) or a batch with a
leading query axis; batched calls return one loss per query.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autograd import as_tensor, clip, log, smooth_l1, square
from .head import encode_offsets

log_ = logging.getLogger(__name__)

PROB_EPS = 1e-7


@dataclass
class SupervisionTargets:
    start_label: np.ndarray    # [T] in {0, 1}
    end_label: np.ndarray      # [T]
    iou_target: np.ndarray     # [l_v] in [0, 1]
    iou_class: np.ndarray      # [l_v] in {0, 1}
    offset_target: np.ndarray  # [l_v, 4], NaN where iou_class == 0

    @staticmethod
    def stack(items):
        return SupervisionTargets(*(np.stack([getattr(t, f) for t in items])
                                    for f in ("start_label", "end_label", "iou_target",
                                              "iou_class", "offset_target")))


def segment_iou(segments, target):
    """Temporal IoU of each row of ``segments`` [K, 2] with one target segment."""
    s, e = segments[:, 0], segments[:, 1]
    inter = np.clip(np.minimum(e, target[1]) - np.maximum(s, target[0]), 0.0, None)
    union = np.maximum(e, target[1]) - np.minimum(s, target[0])
    return inter / union


def build_targets(target, anchors, threshold=0.7, radius=1):
    """Supervision for one query whose ground truth is ``target`` = (start, end).

    Boundary labels mark frames within ``radius`` of the first and last frame
    of the moment.  Anchors with IoU >= ``threshold`` are positive; when none
    reaches it, the best-overlapping anchors are promoted so that every query
    has at least one positive.
    """
    t = anchors.num_frames
    start, end = float(target[0]), float(target[1])
    frames = np.arange(t)
    first, last = int(np.floor(start)), int(np.ceil(end)) - 1
    start_label = (np.abs(frames - first) <= radius).astype(np.float64)
    end_label = (np.abs(frames - last) <= radius).astype(np.float64)
    iou = segment_iou(anchors.segments, (start, end))
    cls = (iou >= threshold).astype(np.float64)
    if not cls.any():
        cls = (iou >= iou.max() - 1e-12).astype(np.float64)
    offsets = np.full((len(anchors), 4), np.nan)
    for i in np.flatnonzero(cls):
        offsets[i] = encode_offsets(anchors.segments[i], (start, end))
    return SupervisionTargets(start_label, end_label, iou, cls, offsets)


def balance_weights(label):
    """Per-row (alpha_pos, alpha_neg) = (L / 2N+, L / 2N-); a vanished class gets weight 1."""
    label = np.asarray(label, dtype=np.float64)
    length = label.shape[-1]
    npos = label.sum(axis=-1, keepdims=True)
    nneg = length - npos
    a_pos = np.where(npos > 0, length / (2.0 * np.maximum(npos, 1)), 0.0)
    a_neg = np.where(nneg > 0, length / (2.0 * np.maximum(nneg, 1)), 0.0)
    only_neg, only_pos = npos == 0, nneg == 0
    if only_neg.any() or only_pos.any():
        log_.warning("balanced BCE: %d rows without positives, %d rows without negatives; "
                     "falling back to unweighted BCE for them",
                     int(only_neg.sum()), int(only_pos.sum()))
        a_neg = np.where(only_neg, 1.0, a_neg)
        a_pos = np.where(only_pos, 1.0, a_pos)
    return a_pos, a_neg


def balanced_bce(prob, label):
    """-(1/L) sum[a+ g log p + a- (1-g) log(1-p)] along the last axis."""
    label = np.asarray(label, dtype=np.float64)
    a_pos, a_neg = balance_weights(label)
    p = clip(as_tensor(prob), PROB_EPS, 1.0 - PROB_EPS)
    terms = log(p) * (a_pos * label) + log(1.0 - p) * (a_neg * (1.0 - label))
    return -terms.mean(axis=-1)


def boundary_loss(start_prob, end_prob, start_label, end_label):
    return balanced_bce(start_prob, start_label) + balanced_bce(end_prob, end_label)


def iou_loss(iou_score, iou_target, iou_class):
    """Balanced BCE against the positive/negative classes plus MSE against raw IoU."""
    regression = square(as_tensor(iou_score) - np.asarray(iou_target, dtype=np.float64)).mean(axis=-1)
    return balanced_bce(iou_score, iou_class) + regression


def offset_loss(offsets, offset_target, iou_class):
    """Smooth-L1 averaged over positive anchors and the 4 components (0 with no positives)."""
    mask = np.asarray(iou_class, dtype=np.float64)
    target = np.where(mask[..., None] > 0, np.nan_to_num(offset_target), 0.0)
    npos = mask.sum(axis=-1)
    scale = np.where(npos > 0, 1.0 / (4.0 * np.maximum(npos, 1)), 0.0)
    per_anchor = smooth_l1(as_tensor(offsets) - target).sum(axis=-1)
    return (per_anchor * mask).sum(axis=-1) * scale


def loss_terms(output, targets):
    """(L_b, L_iou, L_offset), each per query."""
    lb = boundary_loss(output.start_prob, output.end_prob, targets.start_label, targets.end_label)
    li = iou_loss(output.iou_score, targets.iou_target, targets.iou_class)
    lo = offset_loss(output.offsets, targets.offset_target, targets.iou_class)
    return lb, li, lo


def total_loss(output, targets):
    """Unweighted sum of the three terms, averaged over the queries in the batch."""
    lb, li, lo = loss_terms(output, targets)
    total = lb + li + lo
    return total.mean() if total.ndim else total
