"""Run configuration: a schema of typed keys per subcommand, file loading and hashing.

Config files are flat ``key = value`` text; ``#`` starts a comment. Fractions
such as ``4/255`` are parsed exactly before conversion to float.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

from dfa.errors import ConfigError


def parse_real(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a real number: {text!r}")


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_int(text) -> int:
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}")


def parse_schedule(text) -> list[list[float]]:
    """``full`` (the 240-epoch step decay) or comma-separated ``rate:epochs`` pairs, e.g. ``0.05:10,0.01:5``."""
    if isinstance(text, list):
        return text
    if str(text).strip() == "full":
        from dfa.trainer import FULL_SCHEDULE

        return [list(p) for p in FULL_SCHEDULE]
    try:
        pairs = [item.split(":") for item in str(text).split(",") if item.strip()]
        return [[parse_real(r), parse_int(n)] for r, n in pairs]
    except ValueError:
        raise ConfigError(f"bad learning-rate schedule {text!r}")


def choice(*options) -> Callable[[Any], str]:
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ConfigError(f"{t!r} is not one of {options}")
        return t

    return parse


_DATA = {"train", "attack", "ood", "analyze"}
_EVAL = {"attack", "ood", "analyze"}

# key -> (parser, default, subcommands)
SCHEMA: dict[str, tuple[Callable, Any, set[str]]] = {
    "out": (str, "runs/default", {"train", "attack", "ood", "analyze", "report"}),
    "seed": (parse_int, 0, _DATA),
    "data": (str, "digits", _DATA),
    "format": (choice("idx", "cifar-binary", "raw-array"), None, _DATA),
    "labels": (str, None, _DATA),
    "split": (choice("all", "train", "test"), None, _DATA),
    "test_fraction": (parse_real, 0.25, _DATA),
    "split_seed": (parse_int, 0, _DATA),
    "checkpoint": (str, None, _EVAL),
    "limit": (parse_int, 0, _EVAL),
    # train
    "mode": (choice("vanilla", "mixup", "manifold_mixup", "dfa"), "dfa", {"train"}),
    "alpha": (parse_real, 1.0, {"train", "analyze"}),
    "sigma": (parse_real, 0.05, {"train"}),
    "reduction": (choice("mean-squared", "root-of-norm"), "mean-squared", {"train"}),
    "epochs": (parse_int, 20, {"train"}),
    "batch_size": (parse_int, 64, {"train"}),
    "lr": (parse_real, 0.05, {"train"}),
    "lr_schedule": (parse_schedule, None, {"train"}),
    "momentum": (parse_real, 0.9, {"train"}),
    "weight_decay": (parse_real, 5e-4, {"train"}),
    "arch": (choice("small_cnn", "mlp"), "small_cnn", {"train"}),
    "embed_dim": (parse_int, 64, {"train"}),
    "softmax_scale": (parse_real, 1.0, {"train"}),
    "dtype": (choice("float32", "float64"), "float32", {"train"}),
    # attack
    "method": (choice("fgsm", "pgd", "cw", "benchmark"), "pgd", {"attack"}),
    "epsilon": (parse_real, 4 / 255, {"attack"}),
    "step_size": (parse_real, 2 / 255, {"attack"}),
    "steps": (parse_int, 8, {"attack"}),
    "cw_c": (parse_real, 0.01, {"attack"}),
    "cw_lr": (parse_real, 0.01, {"attack"}),
    "random_start": (parse_bool, True, {"attack"}),
    # ood
    "train_data": (str, None, {"ood"}),
    "ood_data": (str, "photo-patches", {"ood"}),
    "ood_format": (choice("idx", "cifar-binary", "raw-array"), None, {"ood"}),
    "plot": (parse_bool, True, {"ood", "analyze", "report"}),
    # analyze
    "pairs": (parse_int, 1000, {"analyze"}),
    # report
    "metrics": (str, None, {"report"}),
}

# the split used when none is given
DEFAULT_SPLIT = {"train": "train", "attack": "test", "ood": "test", "analyze": "test"}


def keys_for(command: str) -> list[str]:
    return [k for k, (_, _, cmds) in SCHEMA.items() if command in cmds]


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, file_values: dict | None = None, overrides: dict | None = None
            ) -> dict[str, Any]:
    """Validate and merge config sources; CLI overrides win over file values."""
    allowed = set(keys_for(command))
    merged: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} for {command!r}")
            merged[key] = value
    config = {}
    for key in keys_for(command):
        parser, default, _ = SCHEMA[key]
        config[key] = parser(merged[key]) if key in merged else default
    if "split" in config and config["split"] is None:
        config["split"] = DEFAULT_SPLIT[command]
    return config


def config_hash(command: str, config: dict) -> str:
    """Stable digest of the canonicalised config; the output directory is excluded."""
    payload = {k: v for k, v in config.items() if k not in ("out", "plot")}
    blob = json.dumps({"command": command, **payload}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
