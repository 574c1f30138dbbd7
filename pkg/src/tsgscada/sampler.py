"""Video-centric mini-batches: all queries of a sampled video travel together."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .data.augment import augment_image, augment_text
from .errors import ConfigError, ContractError
from .losses import SupervisionTargets, build_targets, loss_terms

log = logging.getLogger(__name__)


@dataclass
class TrainBatch:
    groups: list  # [(video_id, [query indices])]

    @property
    def total_pairs(self):
        return sum(len(q) for _, q in self.groups)

    @property
    def video_ids(self):
        return [v for v, _ in self.groups]


@dataclass
class ForwardCounter:
    backbone_forwards: int = 0
    pair_forwards: int = 0

    def reset(self):
        self.backbone_forwards = 0
        self.pair_forwards = 0


def build_epoch(queries_by_video, batch_size, max_queries_per_video, seed):
    """Partition one epoch of (video, query) pairs into video-grouped batches.

    Videos are visited in a seeded random order and each contributes up to
    ``max_queries_per_video`` queries per visit; videos with more queries
    come back for their remaining chunks after every video has had its
    first turn.  Groups are appended to the current batch until the next
    one would push it past ``batch_size`` or the video is already in it.
    """
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    if max_queries_per_video < 1:
        raise ConfigError("max_queries_per_video must be >= 1")
    cap = min(max_queries_per_video, batch_size)
    rng = np.random.default_rng(seed)
    video_ids = list(queries_by_video)
    order = [video_ids[i] for i in rng.permutation(len(video_ids))]

    rounds = []
    for vid in order:
        qs = list(queries_by_video[vid])
        if not qs:
            log.warning("video %s has no queries; skipped", vid)
            continue
        if len(qs) > cap:
            qs = [qs[i] for i in rng.permutation(len(qs))]
        for r, start in enumerate(range(0, len(qs), cap)):
            while len(rounds) <= r:
                rounds.append([])
            rounds[r].append((vid, qs[start:start + cap]))
    queue = deque(g for rnd in rounds for g in rnd)

    batches, current, size = [], [], 0
    while queue:
        vid, qs = queue.popleft()
        if current and (size + len(qs) > batch_size or any(v == vid for v, _ in current)):
            batches.append(TrainBatch(current))
            current, size = [], 0
        current.append((vid, qs))
        size += len(qs)
    if current:
        batches.append(TrainBatch(current))
    return batches


@dataclass
class Augmenter:
    """Training-time augmentation settings, drawn from one seeded stream."""

    image_ops: tuple = ()
    crop_size: int = None
    text_kind: str = "none"
    text_prob: float = 0.5
    synonyms: dict = field(default_factory=dict)
    pool: tuple = ()
    rng: np.random.Generator = None

    @classmethod
    def from_config(cls, aug, dataset, seed):
        ops = tuple(op for op in ("crop", "hflip", "rotate90", "photometric") if getattr(aug, op))
        return cls(ops, aug.crop_size, aug.text, aug.text_prob, dict(dataset.synonyms),
                   tuple(dataset.distractor_tokens), np.random.default_rng(seed))

    def clip(self, frames):
        if not self.image_ops:
            return frames
        return augment_image(frames, self.image_ops, self.rng, crop_size=self.crop_size)

    def tokens(self, tokens):
        if self.text_kind == "none" or self.rng.random() >= self.text_prob:
            return tuple(tokens)
        return augment_text(tokens, self.text_kind, self.synonyms, self.rng, self.pool)


def batch_inputs(batch, dataset, anchors, loss_cfg, augmenter=None):
    clips, token_groups, targets = [], [], []
    for vid, qidx in batch.groups:
        clip = dataset.video(vid).frames
        clips.append(augmenter.clip(clip) if augmenter else clip)
        group = []
        for i in qidx:
            q = dataset.queries[i]
            if q.video_id != vid:
                raise ContractError(f"query {i} belongs to {q.video_id}, not {vid}")
            group.append(augmenter.tokens(q.tokens) if augmenter else tuple(q.tokens))
            targets.append(build_targets(q.target.as_tuple(), anchors, loss_cfg.iou_threshold,
                                         loss_cfg.boundary_radius))
        token_groups.append(group)
    return clips, token_groups, SupervisionTargets.stack(targets)


@dataclass
class BatchResult:
    loss: float
    boundary: float
    iou: float
    offset: float
    pairs: int


def run_batch(batch, model, dataset, counter, augmenter=None, backward=True):
    """Forward all pairs of ``batch`` with per-video prefix sharing, then backprop.

    The returned loss is the mean over pairs of L_b + L_iou + L_offset.
    Gradients accumulate into the model's parameters.
    """
    if not batch.groups or batch.total_pairs == 0:
        raise ContractError("empty batch")
    clips, token_groups, targets = batch_inputs(batch, dataset, model.anchors, model.cfg.loss,
                                                augmenter)
    # augmented clips differ every time they are drawn, so only raw clips are cached
    keys = batch.video_ids if augmenter is None or not augmenter.image_ops else None
    output = model.forward_groups(clips, token_groups, counter, keys)
    lb, li, lo = loss_terms(output, targets)
    loss = (lb + li + lo).mean()
    if backward:
        loss.backward()
    return BatchResult(loss.item(), float(lb.data.mean()), float(li.data.mean()),
                       float(lo.data.mean()), batch.total_pairs)
