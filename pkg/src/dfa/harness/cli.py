"""Command-line entry point: ``dfa {train,attack,ood,analyze,report}``.

Every subcommand accepts ``--config FILE`` (flat ``key = value``) plus one flag
per config key; flags override the file. Outputs go to ``--out`` and every
metrics record carries the hash of the config that produced it.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from dfa import analysis, attacks, ood
from dfa.errors import ConfigError, DFAError
from dfa.harness import config as cfgmod
from dfa.harness import metrics, report
from dfa.harness.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from dfa.harness.datasets import resolve_dataset
from dfa.trainer import TrainConfig, train

log = logging.getLogger("dfa")
COMMANDS = ("train", "attack", "ood", "analyze", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", help="flat key = value file")
        for key in cfgmod.keys_for(command):
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def _dataset(cfg, source=None, fmt=None, split=None):
    return resolve_dataset(source or cfg["data"], fmt if source else cfg["format"],
                           None if source else cfg["labels"], split or cfg["split"],
                           cfg["test_fraction"], cfg["split_seed"])


def _limit(ds, cfg):
    return ds.subset(np.arange(min(len(ds), cfg["limit"]))) if cfg["limit"] else ds


def _load(cfg):
    if not cfg["checkpoint"]:
        raise ConfigError("a checkpoint path is required")
    snap = load_checkpoint(cfg["checkpoint"])
    manifest = read_manifest(cfg["checkpoint"])
    label = manifest.get("label", snap.config_hash)
    return snap, {"model": label, "model_hash": snap.config_hash}


def cmd_train(cfg, h, out: Path):
    ds = _dataset(cfg)
    arch = {"name": cfg["arch"], "input_shape": list(ds.sample_shape), "embed_dim": cfg["embed_dim"]}
    schedule = cfg["lr_schedule"] or [[cfg["lr"], cfg["epochs"]]]
    tc = TrainConfig(mode=cfg["mode"], alpha=cfg["alpha"], sigma=cfg["sigma"],
                     reduction=cfg["reduction"], epochs=cfg["epochs"],
                     batch_size=cfg["batch_size"], lr_schedule=schedule,
                     momentum=cfg["momentum"], weight_decay=cfg["weight_decay"],
                     rng_seed=cfg["seed"])
    dtype = torch.float64 if cfg["dtype"] == "float64" else torch.float32
    result = train(ds, tc, arch=arch, dtype=dtype, config_hash=h,
                   softmax_scale=cfg["softmax_scale"])
    label = f"{cfg['mode']}@{h[:6]}"
    save_checkpoint(out / "checkpoint", result.snapshot,
                    extra={"label": label, "mode": cfg["mode"], "data": cfg["data"]})
    metrics.append(out / "metrics.jsonl",
                   [metrics.MetricsRecord("epoch", h, {**row, "model": label, "mode": cfg["mode"]})
                    for row in result.history])
    return f"trained {label}: final accuracy {result.history[-1]['accuracy']:.4f}"


def cmd_attack(cfg, h, out: Path):
    snap, ident = _load(cfg)
    ds = _limit(_dataset(cfg), cfg)
    x, y = ds.tensors(snap.dtype)
    if cfg["method"] == "benchmark":
        suite = [attacks.AttackConfig(**{**a.__dict__, "rng_seed": cfg["seed"]})
                 for a in attacks.BENCHMARK]
    else:
        suite = [attacks.AttackConfig(cfg["method"], epsilon=cfg["epsilon"],
                                      step_size=cfg["step_size"], steps=cfg["steps"],
                                      cw_c=cfg["cw_c"], cw_lr=cfg["cw_lr"],
                                      random_start=cfg["random_start"], rng_seed=cfg["seed"])]
    table = attacks.evaluate_robustness(snap.model, x, y, suite)
    recs = [metrics.MetricsRecord("attack", h, {**ident, "attack": "clean",
                                                "accuracy": table["clean"], "n": len(ds)})]
    recs += [metrics.MetricsRecord("attack", h, {**ident, "attack": name, "accuracy": acc,
                                                 "n": len(ds)})
             for name, acc in table["attacks"].items()]
    metrics.append(out / "metrics.jsonl", recs)
    return "; ".join(f"{r.fields['attack']}: {r.fields['accuracy']:.2f}%" for r in recs)


def cmd_ood(cfg, h, out: Path):
    snap, ident = _load(cfg)
    train_ds = _dataset(cfg, cfg["train_data"], cfg["format"], "train") if cfg["train_data"] \
        else _dataset(cfg, split="train")
    id_ds = _limit(_dataset(cfg), cfg)
    ood_ds = _limit(_dataset(cfg, cfg["ood_data"], cfg["ood_format"], "all"), cfg)
    dt = snap.dtype
    protos = ood.compute_prototypes(snap.model, train_ds.tensors(dt)[0], train_ds.y,
                                    source_hash=snap.config_hash)
    rep = ood.evaluate_ood(snap.model, None, None, id_ds.tensors(dt)[0], ood_ds.tensors(dt)[0],
                           prototypes=protos)
    fields = {**ident, **rep.to_fields(), "id_data": cfg["data"], "ood_data": cfg["ood_data"]}
    metrics.append(out / "metrics.jsonl", [metrics.MetricsRecord("ood", h, fields)])
    if cfg["plot"]:
        report.plot_score_histogram(rep.scores, rep.labels, rep.best_threshold,
                                    out / f"ood_scores_{h}.png")
    return f"best F1 {rep.best_f1:.4f} at threshold {rep.best_threshold:.4f}"


def cmd_analyze(cfg, h, out: Path):
    snap, ident = _load(cfg)
    ds = _limit(_dataset(cfg), cfg)
    x, y = ds.tensors(snap.dtype)
    comp = analysis.compactness(snap.model, x, y)
    probe = analysis.probe_dataset(snap.model, x, cfg["pairs"], cfg["alpha"], cfg["seed"])
    fields = {**ident, **comp.to_fields(), **probe.to_fields()}
    metrics.append(out / "metrics.jsonl", [metrics.MetricsRecord("analysis", h, fields)])
    if cfg["plot"]:
        report.plot_compactness([(ident["model"], list(comp.per_class_std), comp.total_std,
                                  probe.mean)], out / f"compactness_{h}.png")
    return (f"class std mean {comp.mean_class_std:.4f}, total {comp.total_std:.4f}, "
            f"mixing residual {probe.mean:.4f}")


def cmd_report(cfg, h, out: Path):
    path = cfg["metrics"] or str(out / "metrics.jsonl")
    files = report.write_report(path, out / "report", plot=cfg["plot"])
    return "wrote " + ", ".join(str(f) for f in files)


def _hashable(cfg: dict) -> dict:
    """Identify a checkpoint by the config that produced it rather than by its path."""
    if not cfg.get("checkpoint"):
        return cfg
    try:
        model = read_manifest(cfg["checkpoint"])["config_hash"]
    except (DFAError, OSError, KeyError, ValueError):
        return cfg
    return {**cfg, "checkpoint": "model:" + model}


HANDLERS = {"train": cmd_train, "attack": cmd_attack, "ood": cmd_ood, "analyze": cmd_analyze,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose") and v is not None}
    try:
        file_values = cfgmod.read_config_file(args.config) if args.config else {}
        cfg = cfgmod.resolve(args.command, file_values, overrides)
    except (ConfigError, OSError) as e:
        print(f"dfa {args.command}: usage error: {e}", file=sys.stderr)
        return 2
    h = cfgmod.config_hash(args.command, _hashable(cfg))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        print(HANDLERS[args.command](cfg, h, out))
    except ConfigError as e:
        print(f"dfa {args.command}: usage error: {e}", file=sys.stderr)
        return 2
    except (DFAError, OSError, KeyError) as e:
        print(f"dfa {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
