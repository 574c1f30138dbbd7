"""Training loop, batched inference and prediction files."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError, TrainingAborted
from .head import infer
from .metrics import evaluate
from .model import GroundingModel
from .optim import AdamW
from .sampler import Augmenter, ForwardCounter, build_epoch, run_batch

log = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.scg"
CONFIG = "config.toml"
STEP_LOG = "train_log.csv"
EPOCH_LOG = "epoch_log.csv"
STEP_FIELDS = ("step", "epoch", "L_b", "L_iou", "L_offset", "total")
EPOCH_FIELDS = ("epoch", "mean_loss", "batches", "backbone_forwards", "pair_forwards")


@dataclass
class TrainResult:
    model: GroundingModel
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _augmenter(cfg, dataset):
    a = cfg.augment
    if not (a.crop or a.hflip or a.rotate90 or a.photometric or a.text != "none"):
        return None
    return Augmenter.from_config(a, dataset, [cfg.train.seed, 0xA06])


def train(cfg, dataset, out_dir=None, progress=None):
    """Train a fresh model on the ``train`` split; checkpoint each epoch when ``out_dir`` is set."""
    model = GroundingModel(cfg)
    t = cfg.train
    opt = AdamW(model.trainable_parameters(), lr=t.lr, betas=(t.beta1, t.beta2), eps=t.adam_eps,
                weight_decay=t.weight_decay)
    groups = dataset.queries_by_video("train")
    augmenter = _augmenter(cfg, dataset)
    counter = ForwardCounter()
    result = TrainResult(model)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / CONFIG)
        model.save(out / CHECKPOINT)

    step = 0
    for epoch in range(1, t.epochs + 1):
        counter.reset()
        batches = build_epoch(groups, cfg.sampler.batch_size, cfg.sampler.max_queries_per_video,
                              [t.seed, epoch])
        losses = []
        for batch in batches:
            opt.zero_grad()
            res = run_batch(batch, model, dataset, counter, augmenter)
            step += 1
            row = {"step": step, "epoch": epoch, "L_b": res.boundary, "L_iou": res.iou,
                   "L_offset": res.offset, "total": res.loss}
            result.steps.append(row)
            if not math.isfinite(res.loss):
                if out is not None:
                    _write_csv(out / STEP_LOG, STEP_FIELDS, result.steps)
                raise TrainingAborted(step, f"non-finite loss {res.loss}")
            opt.step()
            losses.append(res.loss)
        result.epochs.append({"epoch": epoch, "mean_loss": sum(losses) / len(losses),
                              "batches": len(batches),
                              "backbone_forwards": counter.backbone_forwards,
                              "pair_forwards": counter.pair_forwards})
        if progress is not None:
            progress(result.epochs[-1])
        if out is not None:
            model.save(out / CHECKPOINT)
            _write_csv(out / STEP_LOG, STEP_FIELDS, result.steps)
            _write_csv(out / EPOCH_LOG, EPOCH_FIELDS, result.epochs)
    if out is not None and t.epochs == 0:
        _write_csv(out / STEP_LOG, STEP_FIELDS, [])
        _write_csv(out / EPOCH_LOG, EPOCH_FIELDS, [])
    return result


def predict(model, dataset, split="test", top_k=5, max_pairs=64):
    """Ranked predictions for every query of ``split``; one record per query."""
    groups = dataset.queries_by_video(split)
    records, chunk, size = [], [], 0

    def flush():
        clips = [dataset.video(v).frames for v, _ in chunk]
        tokens = [[dataset.queries[i].tokens for i in qs] for _, qs in chunk]
        out = model.predict_groups(clips, tokens, keys=[v for v, _ in chunk])
        row = 0
        for vid, qs in chunk:
            for i in qs:
                ranked = infer(out.row(row), model.anchors, top_k)
                records.append({"video_id": vid, "query_index": i,
                                "predictions": [[s, e, sc] for s, e, sc in ranked]})
                row += 1

    for vid, qs in groups.items():
        if not qs:
            continue
        if chunk and size + len(qs) > max_pairs:
            flush()
            chunk, size = [], 0
        chunk.append((vid, qs))
        size += len(qs)
    if chunk:
        flush()
    return records


def score_records(records, dataset, eval_cfg):
    if any(not 0 <= r["query_index"] < len(dataset.queries) for r in records):
        raise InputError("prediction record refers to a query outside the dataset")
    preds = [[tuple(p[:2]) for p in r["predictions"]] for r in records]
    targets = [dataset.queries[r["query_index"]].target.as_tuple() for r in records]
    for r in records:
        if dataset.queries[r["query_index"]].video_id != r["video_id"]:
            raise InputError(f"record for query {r['query_index']} names the wrong video")
    return evaluate(preds, targets, eval_cfg.ranks, eval_cfg.thresholds, eval_cfg.strict)


def write_predictions(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def read_predictions(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
