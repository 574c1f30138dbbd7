"""Command line: gen-data, train, predict, eval, ablate."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .errors import ConfigError, ContractError, InputError, TrainingAborted

log = logging.getLogger("tsgscada")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


def _config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    return cfg


def _with_dataset_config(cfg, dataset):
    """The model shape follows the dataset actually on disk."""
    data = {k: getattr(dataset.config, k) for k in config_mod.DataConfig.__dataclass_fields__}
    return cfg.replace(data=data)


def _prepare_out(path, force):
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"{out} exists and is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_for(args):
    from .model import GroundingModel

    ckpt = Path(args.checkpoint)
    cfg_path = Path(args.config) if args.config else ckpt.parent / "config.toml"
    if not cfg_path.exists():
        raise ConfigError(f"no config found for {ckpt} (looked for {cfg_path}; pass --config)")
    cfg = config_mod.load(cfg_path)
    return cfg, GroundingModel(cfg).load(ckpt)


def cmd_gen_data(args):
    from .data import generate, save_dataset

    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.replace(data={"seed": args.seed})
    ds = generate(cfg)
    manifest = save_dataset(ds, args.out, force=args.force)
    print(f"wrote {len(ds.videos)} videos, {ds.num_pairs} queries -> {manifest}")


def cmd_train(args):
    from .data import load_dataset
    from .plotting import plot_training_log
    from .train import STEP_LOG, train

    ds = load_dataset(args.data)
    cfg = _with_dataset_config(_config(args), ds)
    if args.seed is not None:
        cfg = cfg.replace(train={"seed": args.seed})
    out = _prepare_out(args.out, args.force)

    def progress(row):
        print("epoch {epoch:3d}  loss {mean_loss:.4f}  backbone {backbone_forwards}  "
              "pairs {pair_forwards}".format(**row), flush=True)

    result = train(cfg, ds, out, progress)
    if result.steps:
        plot_training_log(result.steps, out / "train_log.png")
    print(f"checkpoint -> {out / 'checkpoint.scg'}; log -> {out / STEP_LOG}")


def cmd_predict(args):
    from .data import load_dataset
    from .train import predict, write_predictions

    cfg, model = _model_for(args)
    ds = load_dataset(args.data)
    records = predict(model, ds, args.split or cfg.eval.split, cfg.eval.top_k)
    write_predictions(records, args.out)
    print(f"{len(records)} predictions -> {args.out}")


def cmd_eval(args):
    from .data import load_dataset
    from .train import predict, read_predictions, score_records

    ds = load_dataset(args.data)
    if args.predictions:
        cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
        records = read_predictions(args.predictions)
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint or --predictions")
        cfg, model = _model_for(args)
        records = predict(model, ds, args.split or cfg.eval.split, cfg.eval.top_k)
    metrics = score_records(records, ds, cfg.eval)
    text = json.dumps(metrics, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def cmd_ablate(args):
    from .ablation import DEFAULT_SEEDS, VARIANTS, ablate, variant_config
    from .data import load_dataset

    ds = load_dataset(args.data)
    cfg = _with_dataset_config(_config(args), ds)
    seeds = tuple(args.seeds) if args.seeds else DEFAULT_SEEDS
    if args.seed is not None:
        seeds = tuple(args.seed + s for s in seeds)
    variants = tuple(args.variants) if args.variants else tuple(VARIANTS)
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ConfigError(f"unknown variants {sorted(unknown)}; choose from {list(VARIANTS)}")
    out = _prepare_out(args.out, args.force)
    (out / "configs").mkdir(exist_ok=True)
    for name in variants:
        variant_config(cfg, name, seeds[0]).save(out / "configs" / f"{name}.toml")

    def progress(run):
        m = run["metrics"]
        print(f"{run['variant']:<18} seed {run['seed']}  R1@0.5 {m['rank1_iou05']:6.2f}  "
              f"mIoU {m['miou']:6.2f}", flush=True)

    report = ablate(cfg, ds, seeds, variants, out, progress)
    with open(out / "ablation.csv") as fh:
        rows = list(csv.reader(fh))
    print("---")
    for row in rows:
        print(",".join(row))
    print("---")
    print(f"report -> {out / 'ablation.csv'}, {out / 'ablation.json'}, {out / 'ablation.png'}")
    return report


def build_parser():
    p = argparse.ArgumentParser(prog="tsgscada", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int)
        return sp

    sp = add("gen-data", cmd_gen_data, "write a synthetic dataset directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")

    sp = add("train", cmd_train, "train a model; writes checkpoint, config and logs")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")

    sp = add("predict", cmd_predict, "ranked predictions as JSON lines")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split")

    sp = add("eval", cmd_eval, "metrics JSON from a checkpoint or a predictions file")
    sp.add_argument("--checkpoint")
    sp.add_argument("--predictions")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out")
    sp.add_argument("--split")

    sp = add("ablate", cmd_ablate, "train all variants over seeds; CSV/JSON report and figures")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--variants", nargs="+")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
