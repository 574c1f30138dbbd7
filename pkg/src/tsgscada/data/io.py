"""Dataset directory: ``manifest.json`` plus one raw little-endian f32 file per video."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..config import DataConfig
from ..errors import ConfigError, InputError
from .synthetic import MomentSegment, QuerySample, SyntheticDataset, VideoSample

MANIFEST = "manifest.json"
VIDEO_DIR = "videos"
FORMAT_VERSION = 1


def manifest_dict(ds):
    return {
        "format_version": FORMAT_VERSION,
        "config": {k: getattr(ds.config, k) for k in DataConfig.__dataclass_fields__},
        "vocab": {
            "size": ds.config.vocab_size,
            "event_tokens": list(ds.event_tokens),
            "distractor_tokens": list(ds.distractor_tokens),
        },
        "synonyms": {str(k): v for k, v in sorted(ds.synonyms.items())},
        "videos": [
            {
                "id": v.id,
                "file": f"{VIDEO_DIR}/{v.id}",
                "shape": list(v.frames.shape),
                "split": v.split,
                "events": [{"token": t, "start": s.start, "end": s.end} for t, s in v.events],
            }
            for v in ds.videos
        ],
        "queries": [
            {"index": i, "video_id": q.video_id, "tokens": list(q.tokens),
             "start": q.target.start, "end": q.target.end, "event_token": q.event_token}
            for i, q in enumerate(ds.queries)
        ],
    }


def save_dataset(ds, out_dir, force=False):
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"{out} exists and is not empty (use --force to overwrite)")
    (out / VIDEO_DIR).mkdir(parents=True, exist_ok=True)
    for v in ds.videos:
        (out / VIDEO_DIR / v.id).write_bytes(np.ascontiguousarray(v.frames, dtype="<f4").tobytes())
    (out / MANIFEST).write_text(json.dumps(manifest_dict(ds), indent=1) + "\n")
    return out / MANIFEST


def read_manifest(data_dir):
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise InputError(f"no {MANIFEST} in {data_dir}")
    return json.loads(path.read_text())


def load_dataset(data_dir):
    root = Path(data_dir)
    man = read_manifest(root)
    if man.get("format_version") != FORMAT_VERSION:
        raise InputError(f"unsupported dataset format {man.get('format_version')!r}")
    cfg = DataConfig(**man["config"])
    videos = []
    for rec in man["videos"]:
        raw = np.frombuffer((root / rec["file"]).read_bytes(), dtype="<f4")
        shape = tuple(rec["shape"])
        if raw.size != int(np.prod(shape)):
            raise InputError(f"{rec['file']}: expected {shape} floats, found {raw.size}")
        events = [(e["token"], MomentSegment(e["start"], e["end"])) for e in rec["events"]]
        videos.append(VideoSample(rec["id"], raw.reshape(shape).astype(np.float64), events,
                                  rec["split"]))
    queries = [QuerySample(q["video_id"], tuple(q["tokens"]), MomentSegment(q["start"], q["end"]),
                           q.get("event_token", -1)) for q in man["queries"]]
    synonyms = {int(k): int(v) for k, v in man["synonyms"].items()}
    return SyntheticDataset(cfg, videos, queries, man["vocab"]["event_tokens"],
                            man["vocab"]["distractor_tokens"], synonyms)
