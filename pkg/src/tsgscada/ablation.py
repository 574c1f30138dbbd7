"""Four-variant comparison: head-only, fully trainable, text-free adapters, adapters with text."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .plotting import plot_ablation, plot_losses
from .train import predict, score_records, train

log = logging.getLogger(__name__)

# each variant is the base config plus exactly these overrides
VARIANTS = {
    "frozen_head_only": {"model": {"frozen": True}, "scada": {"insertion_points": []}},
    "e2e_full": {"model": {"frozen": False}, "scada": {"text_free": False}},
    "scada_text_free": {"model": {"frozen": True}, "scada": {"text_free": True}},
    "scada": {"model": {"frozen": True}, "scada": {"text_free": False}},
}
DEFAULT_SEEDS = (0, 1, 2)


def variant_config(base, name, seed):
    over = {k: dict(v) for k, v in VARIANTS[name].items()}
    over["train"] = {"seed": int(seed)}
    return base.replace(**over)


def run_variant(base, dataset, name, seed, out_dir=None):
    cfg = variant_config(base, name, seed)
    result = train(cfg, dataset, out_dir)
    records = predict(result.model, dataset, cfg.eval.split, cfg.eval.top_k)
    return {"variant": name, "seed": int(seed), "metrics": score_records(records, dataset, cfg.eval),
            "losses": [e["mean_loss"] for e in result.epochs]}


def summarize(runs):
    """Mean of every metric per variant, in first-seen variant order."""
    means = {}
    for run in runs:
        means.setdefault(run["variant"], []).append(run["metrics"])
    return {v: {k: float(np.mean([m[k] for m in ms])) for k in ms[0]} for v, ms in means.items()}


def ablate(base, dataset, seeds=DEFAULT_SEEDS, variants=tuple(VARIANTS), out_dir=None,
           progress=None):
    out = Path(out_dir) if out_dir is not None else None
    runs = []
    for name in variants:
        for seed in seeds:
            run_dir = out / "runs" / f"{name}_seed{seed}" if out is not None else None
            run = run_variant(base, dataset, name, seed, run_dir)
            runs.append(run)
            if progress is not None:
                progress(run)
    report = {"seeds": list(seeds), "variants": list(variants), "runs": runs,
              "means": summarize(runs)}
    if out is not None:
        write_report(report, out)
    return report


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(report["runs"][0]["metrics"])
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed"] + keys)
        for run in report["runs"]:
            w.writerow([run["variant"], run["seed"]] + [f"{run['metrics'][k]:.4f}" for k in keys])
        for v, m in report["means"].items():
            w.writerow([v, "mean"] + [f"{m[k]:.4f}" for k in keys])
    (out / "ablation.json").write_text(json.dumps(report, indent=1) + "\n")
    plot_ablation(report, out / "ablation.png")
    plot_losses(report, out / "losses.png")
