"""Report figures, rendered straight to files with the Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {"rank1_iou05": "R1@0.5", "rank1_iou07": "R1@0.7", "rank5_iou05": "R5@0.5",
          "rank5_iou07": "R5@0.7", "miou": "mIoU"}


def plot_ablation(report, path):
    """Grouped bars: one group per metric, one bar per variant, seed spread as error bars."""
    variants = report["variants"]
    keys = list(report["runs"][0]["metrics"])
    width = 0.8 / len(variants)
    x = np.arange(len(keys))
    fig, ax = plt.subplots(figsize=(7.5, 3.6))
    for i, v in enumerate(variants):
        vals = np.array([[r["metrics"][k] for k in keys] for r in report["runs"]
                         if r["variant"] == v])
        ax.bar(x + (i - (len(variants) - 1) / 2) * width, vals.mean(0), width,
               yerr=vals.std(0) if len(vals) > 1 else None, capsize=2, label=v)
    ax.set_xticks(x, [LABELS.get(k, k) for k in keys])
    ax.set_ylabel("%")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_losses(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    colors = {}
    for run in report["runs"]:
        c = colors.setdefault(run["variant"], f"C{len(colors)}")
        label = run["variant"] if run["seed"] == report["seeds"][0] else None
        ax.plot(np.arange(1, len(run["losses"]) + 1), run["losses"], color=c, lw=1, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_log(rows, path):
    """Per-step loss terms from a training run."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    steps = [r["step"] for r in rows]
    for key in ("L_b", "L_iou", "L_offset", "total"):
        ax.plot(steps, [float(r[key]) for r in rows], lw=1, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
