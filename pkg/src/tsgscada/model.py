"""Full grounding model: sentence encoder, adapted backbone, detection head."""
from __future__ import annotations

import numpy as np

from .autograd import Tensor, concat, load_arrays, no_grad, save_arrays, take
from .encoders import SentenceEncoder, VideoBackbone, encode_video, spatial_pool
from .errors import CheckpointError, ConfigError
from .head import DetectorHead
from .nn import Module
from .scada import aggregate, build_adapters


class GroundingModel(Module):
    def __init__(self, cfg):
        """Build every sub-module from a ``RunConfig``; weights are drawn from ``train.seed``."""
        rng = np.random.default_rng(np.random.SeedSequence([cfg.train.seed, 0x5CADA]))
        m, s, data = cfg.model, cfg.scada, cfg.data
        self.cfg = cfg
        self.sentence = SentenceEncoder(data.vocab_size, m.d, rng)
        self.backbone = VideoBackbone(data.channels, m.widths, m.d, m.spatial_strides, rng,
                                      kernel=m.kernel, act=m.activation, eps=m.norm_eps)
        self.insertion_points = list(s.insertion_points)
        self.scada = build_adapters(self.backbone, m.d, self.insertion_points, rng, s.gamma,
                                    s.beta, s.kernel, m.activation, m.norm_eps, s.text_free)
        self._check_spatial(data)
        self.head = DetectorHead(m.d, data.frames, rng, cfg.head.anchor_scales, cfg.head.layers)
        for name, p in self.named_parameters():
            p.name = name
        self.backbone.freeze(m.frozen)
        self._prefix_cache = {}

    def _check_spatial(self, data):
        for point, adapter in zip(self.insertion_points, self.scada):
            h, w = self.backbone.spatial_size(point, data.height, data.width)
            if h % adapter.beta or w % adapter.beta:
                raise ConfigError(
                    f"beta={adapter.beta} does not divide the {h}x{w} features after block {point}")

    @property
    def anchors(self):
        return self.head.anchors

    @property
    def shared_depth(self):
        """Blocks whose output does not depend on the query."""
        return self.insertion_points[0] + 1 if self.insertion_points else len(self.backbone)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def adapter_parameter_count(self):
        return sum(a.num_parameters() for a in self.scada)

    # -- forward paths -----------------------------------------------------
    def video_prefix(self, frames):
        """Query-independent part of the backbone for one clip [c0, T, H, W] -> [1, C, T, h, w]."""
        x = frames if isinstance(frames, Tensor) else Tensor(frames)
        return self.backbone.run(x.reshape((1,) + x.shape), 0, self.shared_depth)

    def forward_from_prefix(self, prefix, q):
        """Finish the forward pass for N queries from their (tiled) prefixes [N, C, T, h, w]."""
        x, outers, start = prefix, [], self.shared_depth
        for k, (adapter, point) in enumerate(zip(self.scada, self.insertion_points)):
            if k > 0:
                x = self.backbone.run(x, start, point + 1)
                start = point + 1
            outers.append(adapter.outer_branch(x, q))
            x = adapter.inner_branch(x, q)
        x = self.backbone.run(x, start)
        features = aggregate(spatial_pool(x), outers, self.cfg.model.norm_eps)
        return self.head(features, q)

    def prefix_is_constant(self):
        """True when no parameter before the first adapter is trainable."""
        blocks = self.backbone.blocks[:self.shared_depth]
        return not any(p.requires_grad for b in blocks for p in b.parameters())

    def clear_prefix_cache(self):
        self._prefix_cache.clear()

    def _prefix(self, clip, key):
        if key is None or not self.prefix_is_constant():
            return self.video_prefix(clip)
        hit = self._prefix_cache.get(key)
        if hit is None:
            with no_grad():
                hit = self._prefix_cache[key] = self.video_prefix(clip)
        return hit

    def forward_groups(self, clips, token_groups, counter=None, keys=None):
        """Forward every (clip, query) pair, computing each clip's shared prefix once.

        ``clips``: list of [c0, T, H, W] arrays; ``token_groups``: for each
        clip, the token sequences of its queries.  Output rows follow the
        flattened query order.  With ``keys`` (one per clip) the prefix of an
        unmodified clip is cached while the prefix blocks are frozen.
        """
        prefixes, index = [], []
        keys = keys if keys is not None else [None] * len(clips)
        for g, (clip, group) in enumerate(zip(clips, token_groups)):
            prefixes.append(self._prefix(clip, keys[g]))
            index.extend([g] * len(group))
            if counter is not None:
                counter.backbone_forwards += 1
                counter.pair_forwards += len(group)
        stacked = prefixes[0] if len(prefixes) == 1 else concat(prefixes, axis=0)
        shared = take(stacked, index, axis=0)
        q = self.sentence.encode_many([t for group in token_groups for t in group])
        return self.forward_from_prefix(shared, q)

    def forward_pair(self, clip, tokens):
        """Unshared single-pair forward (reference path for prefix sharing)."""
        q = self.sentence.encode_many([tokens])
        return self.forward_from_prefix(self.video_prefix(clip), q)

    def encode_video(self, frames, q):
        return encode_video(self.backbone, frames, q, self.scada, self.insertion_points)

    def predict_groups(self, clips, token_groups, keys=None):
        with no_grad():
            return self.forward_groups(clips, token_groups, keys=keys)

    # -- persistence -------------------------------------------------------
    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def save(self, path):
        save_arrays(path, [(name, p.data) for name, p in self.named_parameters()])

    def load(self, path):
        arrays = load_arrays(path)
        own = dict(self.named_parameters())
        missing, extra = set(own) - set(arrays), set(arrays) - set(own)
        if missing or extra:
            raise CheckpointError(
                f"checkpoint does not match model: missing {sorted(missing)[:5]}, "
                f"unexpected {sorted(extra)[:5]}")
        for name, p in own.items():
            if arrays[name].shape != p.shape:
                raise CheckpointError(
                    f"{name}: checkpoint shape {arrays[name].shape} != model shape {p.shape}")
            p.data[...] = arrays[name]
        self.clear_prefix_cache()
        return self
