"""Run configuration: one TOML table per module, flat keys inside each table."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class DataConfig:
    vocab_size: int = 32
    n_videos: int = 200
    frames: int = 64
    height: int = 16
    width: int = 16
    channels: int = 4
    events_per_video: int = 3
    distractor_tokens: int = 8
    query_distractors: int = 2
    min_event_len: int = 8
    max_event_len: int = 20
    noise: float = 2.0
    template_scale: float = 1.0
    test_fraction: float = 0.2
    seed: int = 0


@dataclass
class ModelConfig:
    d: int = 64
    widths: list = field(default_factory=lambda: [16, 32, 64])
    spatial_strides: list = field(default_factory=lambda: [2, 2, 2, 2])
    kernel: int = 3
    activation: str = "gelu"
    norm_eps: float = 1e-5
    frozen: bool = True


@dataclass
class ScadaConfig:
    insertion_points: list = field(default_factory=lambda: [1, 2])
    gamma: int = 4
    beta: int = 2
    kernel: int = 3
    text_free: bool = False


@dataclass
class HeadConfig:
    anchor_scales: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    layers: int = 2


@dataclass
class LossConfig:
    iou_threshold: float = 0.7
    boundary_radius: int = 1


@dataclass
class SamplerConfig:
    batch_size: int = 32
    max_queries_per_video: int = 8


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0


@dataclass
class AugmentConfig:
    crop: bool = False
    crop_size: int = 12
    hflip: bool = False
    rotate90: bool = False
    photometric: bool = False
    text: str = "none"
    text_prob: float = 0.5


@dataclass
class EvalConfig:
    ranks: list = field(default_factory=lambda: [1, 5])
    thresholds: list = field(default_factory=lambda: [0.5, 0.7])
    strict: bool = True
    top_k: int = 5
    split: str = "test"


SECTIONS = {
    "data": DataConfig, "model": ModelConfig, "scada": ScadaConfig, "head": HeadConfig,
    "loss": LossConfig, "sampler": SamplerConfig, "train": TrainConfig,
    "augment": AugmentConfig, "eval": EvalConfig,
}


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    scada: ScadaConfig = field(default_factory=ScadaConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.to_toml())

    def replace(self, **sections):
        """Copy with per-section overrides: ``cfg.replace(model={"frozen": False})``."""
        merged = self.to_dict()
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown config section {name!r}")
            merged[name].update(values)
        return from_dict(merged)


def _coerce(section, key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {key} must be a list, got {value!r}")
        kind = type(default[0]) if default else None
        if kind is float:
            return [float(v) for v in value]
        if kind is int and not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"[{section}] {key} must be a list of integers, got {value!r}")
        return list(value)
    return value


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    parts = {}
    for name, cls in SECTIONS.items():
        values = raw.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError(f"[{name}] must be a table")
        defaults = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(values) - known
        if extra:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(extra)}")
        kwargs = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in values.items()}
        parts[name] = cls(**kwargs)
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def loads(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(raw)


def load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def canonical(text):
    """Canonical TOML for a config document (defaults filled in, fixed order)."""
    return loads(text).to_toml()


def validate(cfg):
    d = cfg.data
    for key in ("vocab_size", "n_videos", "frames", "height", "width", "channels",
                "events_per_video", "min_event_len", "max_event_len"):
        if getattr(d, key) < 1:
            raise ConfigError(f"[data] {key} must be positive")
    if d.distractor_tokens < 0 or d.query_distractors < 0:
        raise ConfigError("[data] distractor counts must be non-negative")
    if d.query_distractors > 0 and d.distractor_tokens == 0:
        raise ConfigError("[data] query_distractors > 0 needs distractor_tokens > 0")
    if d.vocab_size < d.events_per_video + d.distractor_tokens:
        raise ConfigError("[data] vocab_size smaller than events_per_video + distractor_tokens")
    if d.min_event_len > d.max_event_len:
        raise ConfigError("[data] min_event_len > max_event_len")
    if d.events_per_video * d.max_event_len > d.frames:
        raise ConfigError("[data] events cannot fit without overlap: "
                          "events_per_video * max_event_len > frames")
    if d.noise < 0 or d.template_scale <= 0:
        raise ConfigError("[data] noise must be >= 0 and template_scale > 0")
    if not 0.0 <= d.test_fraction < 1.0:
        raise ConfigError("[data] test_fraction must be in [0, 1)")
    m = cfg.model
    if m.d < 1 or any(w < 1 for w in m.widths):
        raise ConfigError("[model] widths and d must be positive")
    if len(m.spatial_strides) != len(m.widths) + 1:
        raise ConfigError("[model] spatial_strides needs one entry per block (len(widths) + 1)")
    if m.activation not in ("gelu", "sigmoid", "tanh"):
        raise ConfigError(f"[model] unknown activation {m.activation!r}")
    s = cfg.scada
    if s.gamma < 1 or s.beta < 1 or s.kernel % 2 == 0:
        raise ConfigError("[scada] gamma, beta must be >= 1 and kernel odd")
    if cfg.head.layers < 1 or not cfg.head.anchor_scales:
        raise ConfigError("[head] needs at least one layer and one anchor scale")
    if not 0.0 < cfg.loss.iou_threshold <= 1.0:
        raise ConfigError("[loss] iou_threshold must be in (0, 1]")
    if cfg.sampler.batch_size < 1 or cfg.sampler.max_queries_per_video < 1:
        raise ConfigError("[sampler] batch_size and max_queries_per_video must be >= 1")
    t = cfg.train
    if t.epochs < 0 or t.lr <= 0 or t.weight_decay < 0:
        raise ConfigError("[train] epochs >= 0, lr > 0, weight_decay >= 0 required")
    a = cfg.augment
    if a.text not in ("none", "swap", "insert", "replace"):
        raise ConfigError(f"[augment] unknown text augmentation {a.text!r}")
    if a.crop and not 1 <= a.crop_size <= min(d.height, d.width):
        raise ConfigError("[augment] crop_size must fit inside the frame")
    e = cfg.eval
    if any(n < 1 for n in e.ranks) or any(not 0 < m < 1 for m in e.thresholds):
        raise ConfigError("[eval] ranks must be >= 1 and thresholds in (0, 1)")
    if e.split not in ("train", "test", "all"):
        raise ConfigError("[eval] split must be train, test or all")
    return cfg
