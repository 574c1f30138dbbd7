"""Detection head: residual BiLSTM with sentence fusion, anchors, refinement, ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Parameter, Tensor, concat, lstm, matmul, sigmoid, take
from .errors import ConfigError, DimensionError, InputError
from .nn import Linear, Module, uniform_init

DEFAULT_SCALES = (4, 8, 16, 32, 64)


class AnchorSet:
    """Multi-scale sliding windows with 50% overlap, clipped to [0, T).

    Scales longer than the video are skipped; at every kept scale the
    windows cover all T frames (the last window is end-aligned if needed).
    """

    def __init__(self, num_frames, scales=DEFAULT_SCALES):
        scales = sorted(int(s) for s in scales)
        if not scales or scales[0] < 2:
            raise ConfigError(f"anchor scales must be >= 2, got {scales}")
        if num_frames < scales[0]:
            raise InputError(f"video of {num_frames} frames is shorter than anchor scale {scales[0]}")
        rows = []
        for s in scales:
            if s > num_frames:
                continue
            stride = s // 2
            starts = list(range(0, num_frames - s + 1, stride))
            if starts[-1] + s < num_frames:
                starts.append(num_frames - s)
            rows.extend((b, b + s) for b in starts)
        self.num_frames = num_frames
        self.scales = tuple(s for s in scales if s <= num_frames)
        self.segments = np.array(rows, dtype=np.float64)

    def __len__(self):
        return len(self.segments)

    def pooling_matrix(self):
        """[l_v, T] matrix averaging the frames each anchor spans."""
        m = np.zeros((len(self), self.num_frames))
        for i, (s, e) in enumerate(self.segments.astype(int)):
            m[i, s:e] = 1.0 / (e - s)
        return m


@dataclass
class HeadOutput:
    start_prob: Tensor   # [N, T]
    end_prob: Tensor     # [N, T]
    iou_score: Tensor    # [N, l_v]
    offsets: Tensor      # [N, l_v, 4]  (start, end, center, width)

    def row(self, i):
        return HeadOutput(*(t.data[i] for t in
                            (self.start_prob, self.end_prob, self.iou_score, self.offsets)))


class BiLstmLayer(Module):
    """fused = h * fuse(q); out = fused + proj([lstm_fwd(fused), lstm_bwd(fused)])."""

    def __init__(self, d, rng):
        self.fuse = Linear(d, d, rng, bias_value=1.0)
        self.fwd_w_ih = Parameter(uniform_init(rng, (4 * d, d), d))
        self.fwd_w_hh = Parameter(uniform_init(rng, (4 * d, d), d))
        self.fwd_b = Parameter(uniform_init(rng, (4 * d,), d))
        self.bwd_w_ih = Parameter(uniform_init(rng, (4 * d, d), d))
        self.bwd_w_hh = Parameter(uniform_init(rng, (4 * d, d), d))
        self.bwd_b = Parameter(uniform_init(rng, (4 * d,), d))
        self.proj = Linear(2 * d, d, rng)

    def __call__(self, h, q):
        n, _, d = h.shape
        fused = h * self.fuse(q).reshape((n, 1, d))
        f = lstm(fused, self.fwd_w_ih, self.fwd_w_hh, self.fwd_b)
        b = lstm(fused, self.bwd_w_ih, self.bwd_w_hh, self.bwd_b, reverse=True)
        return fused + self.proj(concat([f, b], axis=-1))


class DetectorHead(Module):
    def __init__(self, d, num_frames, rng, scales=DEFAULT_SCALES, num_layers=2):
        self.d = d
        self.anchors = AnchorSet(num_frames, scales)
        self._pool = Tensor(self.anchors.pooling_matrix())
        self.layers = [BiLstmLayer(d, rng) for _ in range(num_layers)]
        self.start_fc = Linear(d, 1, rng)
        self.end_fc = Linear(d, 1, rng)
        # anchor features: [mean over the anchor, first frame, last frame]
        self.iou_fc = Linear(3 * d, 1, rng)
        self.offset_fc = Linear(3 * d, 4, rng)

    def __call__(self, features, q):
        """features: [N, d, T] (or [d, T]); q: [N, d] (or [d])."""
        if features.ndim == 2:
            features = features.reshape((1,) + features.shape)
        if q.ndim == 1:
            q = q.reshape((1,) + q.shape)
        n, d, t = features.shape
        if d != self.d:
            raise DimensionError(f"head expects {self.d} channels, got features {features.shape}")
        if t != self.anchors.num_frames:
            raise InputError(
                f"head built for {self.anchors.num_frames} frames, got features {features.shape}")
        h = features.transpose((0, 2, 1))
        for layer in self.layers:
            h = layer(h, q)
        start = sigmoid(self.start_fc(h)).reshape((n, t))
        end = sigmoid(self.end_fc(h)).reshape((n, t))
        segs = self.anchors.segments.astype(int)
        pooled = concat([matmul(self._pool, h), take(h, segs[:, 0], axis=1),
                         take(h, segs[:, 1] - 1, axis=1)], axis=-1)          # N l_v 3d
        iou = sigmoid(self.iou_fc(pooled)).reshape((n, len(self.anchors)))
        offsets = self.offset_fc(pooled)
        return HeadOutput(start, end, iou, offsets)


# ---------------------------------------------------------------------------
# boundary refinement
# ---------------------------------------------------------------------------

def _clip_segment(start, end, num_frames):
    if num_frames is None:
        return start, end
    return min(max(start, 0.0), float(num_frames)), min(max(end, 0.0), float(num_frames))


def refine(anchor, offsets, num_frames=None):
    """Apply (d_start, d_end, d_center, d_width) offsets to an anchor segment.

    center' = c + d_center * w, width' = w * exp(d_width), and the edges of
    the rescaled window are nudged by d_start * w and d_end * w.  The result
    is clipped to [0, num_frames); a degenerate result falls back to the
    clipped anchor.
    """
    s, e = float(anchor[0]), float(anchor[1])
    ds, de, dc, dw = (float(v) for v in offsets)
    w = e - s
    c = 0.5 * (s + e)
    c2 = c + dc * w
    w2 = w * math.exp(min(dw, 50.0))
    start = c2 - 0.5 * w2 + ds * w
    end = c2 + 0.5 * w2 + de * w
    start, end = _clip_segment(start, end, num_frames)
    if not (math.isfinite(start) and math.isfinite(end)) or start >= end:
        return _clip_segment(s, e, num_frames)
    return start, end


def encode_offsets(anchor, target):
    """Offsets that ``refine`` maps ``anchor`` onto ``target`` (edge terms zero)."""
    s, e = float(anchor[0]), float(anchor[1])
    gs, ge = float(target[0]), float(target[1])
    w, gw = e - s, ge - gs
    return np.array([0.0, 0.0, (0.5 * (gs + ge) - 0.5 * (s + e)) / w, math.log(gw / w)])


def infer(output, anchors, top_k=5):
    """Rank refined anchors for one query by predicted IoU.

    ``output`` holds numpy arrays for a single query (see ``HeadOutput.row``).
    Ties fall back to the earlier refined start, then the lower anchor index.
    Returns up to ``top_k`` ``(start, end, score)`` triples.
    """
    scores = np.asarray(output.iou_score, dtype=np.float64)
    offsets = np.asarray(output.offsets, dtype=np.float64)
    if scores.shape != (len(anchors),):
        raise DimensionError(f"{scores.shape} scores for {len(anchors)} anchors")
    refined = [refine(seg, off, anchors.num_frames) for seg, off in zip(anchors.segments, offsets)]
    starts = np.array([r[0] for r in refined])
    order = np.lexsort((np.arange(len(scores)), starts, -scores))
    k = min(int(top_k), len(scores))
    return [(refined[i][0], refined[i][1], float(scores[i])) for i in order[:k]]
