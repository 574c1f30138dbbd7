"""Spatial image and lexical text augmentations; none of them touch time."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError

IMAGE_OPS = ("crop", "hflip", "rotate90", "photometric")
TEXT_OPS = ("swap", "insert", "replace")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def augment_image(frames, ops, seed=None, crop_size=None, flip_prob=0.5, photometric=None):
    """Apply the requested ops, in canonical order, to a [C, T, H, W] clip.

    ``photometric`` may pin the (scale, shift) pair; otherwise scale is drawn
    from [0.8, 1.2] and shift from [-0.1, 0.1], once per clip.
    """
    ops = set(ops)
    unknown = ops - set(IMAGE_OPS)
    if unknown:
        raise ConfigError(f"unknown image augmentation(s) {sorted(unknown)}")
    rng = _rng(seed)
    out = np.asarray(frames, dtype=np.float64)
    _, _, h, w = out.shape
    if "crop" in ops:
        size = crop_size if crop_size is not None else max(1, (3 * min(h, w)) // 4)
        if size > h or size > w or size < 1:
            raise ConfigError(f"crop size {size} does not fit frame {h}x{w}")
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        window = out[:, :, top:top + size, left:left + size]
        rows = (np.arange(h) * size) // h
        cols = (np.arange(w) * size) // w
        out = window[:, :, rows][:, :, :, cols]
    if "hflip" in ops and rng.random() < flip_prob:
        out = out[:, :, :, ::-1]
    if "rotate90" in ops:
        k = int(rng.integers(0, 4)) if h == w else 2 * int(rng.integers(0, 2))
        out = np.rot90(out, k=k, axes=(2, 3))
    if "photometric" in ops:
        if photometric is None:
            a = rng.uniform(0.8, 1.2)
            b = rng.uniform(-0.1, 0.1)
        else:
            a, b = photometric
        out = a * out + b
    return np.ascontiguousarray(out)


def augment_text(tokens, kind, synonym_map=None, seed=None, pool=None):
    """Swap two positions, insert one token from ``pool``, or replace one token by its synonym.

    Returns a new tuple; when the precondition of ``kind`` is not met the
    input comes back unchanged.
    """
    if kind not in TEXT_OPS:
        raise ConfigError(f"unknown text augmentation {kind!r}")
    rng = _rng(seed)
    words = list(tokens)
    if kind == "swap":
        if len(words) < 2:
            return tuple(words)
        i, j = rng.choice(len(words), size=2, replace=False)
        words[i], words[j] = words[j], words[i]
    elif kind == "insert":
        if not pool:
            return tuple(words)
        pos = int(rng.integers(0, len(words) + 1))
        words.insert(pos, int(rng.choice(list(pool))))
    else:
        synonym_map = synonym_map or {}
        candidates = [i for i, t in enumerate(words) if t in synonym_map]
        if not candidates:
            return tuple(words)
        i = int(rng.choice(candidates))
        words[i] = synonym_map[words[i]]
    return tuple(int(t) for t in words)
