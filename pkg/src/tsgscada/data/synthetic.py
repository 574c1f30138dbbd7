"""Procedural videos with planted, token-keyed events.

Every event token owns a fixed pseudo-random spatial template (zero mean
per channel).  A video is Gaussian noise plus, for each of its events, the
event token's template added to every frame inside the event's segment.
Queries name one event token and pad it with distractor tokens that never
appear as events.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import DataConfig, validate, RunConfig
from ..errors import ConfigError


@dataclass(frozen=True)
class MomentSegment:
    """Half-open frame interval [start, end)."""

    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"segment needs start < end, got [{self.start}, {self.end})")

    @property
    def length(self):
        return self.end - self.start

    def as_tuple(self):
        return (self.start, self.end)


@dataclass
class VideoSample:
    id: str
    frames: np.ndarray                 # [c0, T, H, W]
    events: list                       # [(token, MomentSegment)]
    split: str = "train"


@dataclass
class QuerySample:
    video_id: str
    tokens: tuple
    target: MomentSegment
    event_token: int = -1


@dataclass
class SyntheticDataset:
    config: DataConfig
    videos: list
    queries: list
    event_tokens: list
    distractor_tokens: list
    synonyms: dict
    templates: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {v.id: v for v in self.videos}

    def video(self, video_id):
        return self._by_id[video_id]

    def queries_by_video(self, split=None):
        """video id -> list of global query indices, in video order."""
        keep = {v.id for v in self.videos if split in (None, "all") or v.split == split}
        groups = {v.id: [] for v in self.videos if v.id in keep}
        for i, q in enumerate(self.queries):
            if q.video_id in groups:
                groups[q.video_id].append(i)
        return groups

    def split_queries(self, split):
        groups = self.queries_by_video(split)
        return [i for ids in groups.values() for i in ids]

    @property
    def mean_queries_per_video(self):
        return len(self.queries) / len(self.videos)

    @property
    def expected_queries_per_video(self):
        return (self.config.events_per_video + 1) / 2.0

    @property
    def num_pairs(self):
        return len(self.queries)


def _vocabulary(cfg):
    n_distract = cfg.distractor_tokens
    event_tokens = list(range(cfg.vocab_size - n_distract))
    distractors = list(range(cfg.vocab_size - n_distract, cfg.vocab_size))
    synonyms = {}
    for a, b in zip(distractors[0::2], distractors[1::2]):
        synonyms[a], synonyms[b] = b, a
    return event_tokens, distractors, synonyms


def make_templates(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7E4]))
    event_tokens, _, _ = _vocabulary(cfg)
    templates = {}
    for tok in event_tokens:
        t = rng.normal(0.0, 1.0, size=(cfg.channels, cfg.height, cfg.width))
        if cfg.height * cfg.width > 1:
            t -= t.mean(axis=(1, 2), keepdims=True)
        templates[tok] = cfg.template_scale * t
    return templates


def _place_segments(rng, cfg):
    """Non-overlapping segments with random lengths, in random temporal order."""
    lengths = rng.integers(cfg.min_event_len, cfg.max_event_len + 1, size=cfg.events_per_video)
    free = cfg.frames - int(lengths.sum())
    cuts = np.sort(rng.integers(0, free + 1, size=cfg.events_per_video))
    gaps = np.diff(np.concatenate([[0], cuts]))
    segments, pos = [], 0
    for gap, length in zip(gaps, lengths):
        pos += int(gap)
        segments.append(MomentSegment(pos, pos + int(length)))
        pos += int(length)
    return segments


def _video(index, cfg, templates, event_tokens, distractors, split):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    tokens = rng.choice(event_tokens, size=cfg.events_per_video, replace=False).tolist()
    segments = _place_segments(rng, cfg)
    order = rng.permutation(cfg.events_per_video)
    events = [(int(tokens[i]), segments[j]) for i, j in enumerate(order)]
    shape = (cfg.channels, cfg.frames, cfg.height, cfg.width)
    frames = cfg.noise * rng.normal(0.0, 1.0, size=shape) if cfg.noise > 0 else np.zeros(shape)
    for tok, seg in events:
        frames[:, int(seg.start):int(seg.end)] += templates[tok][:, None]
    vid = VideoSample(f"v{index:05d}", frames, events, split)

    n_queries = int(rng.integers(1, cfg.events_per_video + 1))
    picked = rng.choice(cfg.events_per_video, size=n_queries, replace=False)
    queries = []
    for e in sorted(picked.tolist()):
        tok, seg = events[e]
        replace = cfg.query_distractors > len(distractors)
        fillers = rng.choice(distractors, size=cfg.query_distractors, replace=replace).tolist() \
            if cfg.query_distractors else []
        words = [tok] + [int(f) for f in fillers]
        words = [words[i] for i in rng.permutation(len(words))]
        queries.append(QuerySample(vid.id, tuple(words), seg, tok))
    return vid, queries


def generate(cfg):
    """Build a dataset as a pure function of ``cfg`` (seed included)."""
    if isinstance(cfg, RunConfig):
        cfg = cfg.data
    validate(RunConfig(data=cfg))
    if cfg.vocab_size < cfg.events_per_video + cfg.distractor_tokens:
        raise ConfigError("vocab_size smaller than events_per_video + distractor_tokens")
    event_tokens, distractors, synonyms = _vocabulary(cfg)
    templates = make_templates(cfg)
    n_test = int(round(cfg.n_videos * cfg.test_fraction))
    videos, queries = [], []
    for i in range(cfg.n_videos):
        split = "test" if i >= cfg.n_videos - n_test else "train"
        v, qs = _video(i, cfg, templates, event_tokens, distractors, split)
        videos.append(v)
        queries.extend(qs)
    return SyntheticDataset(cfg, videos, queries, event_tokens, distractors, synonyms, templates)
