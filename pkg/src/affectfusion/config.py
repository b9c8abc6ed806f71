"""Pipeline configuration: defaults, JSON overlay, flag overrides, validation."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from affectfusion.data.io import read_json
from affectfusion.errors import ValidationError

DEFAULTS: dict = {
    "manifest": None,
    "work_dir": "work",
    "seed": 0,
    "workers": 1,
    "hog": {
        "window": [64, 128],
        "cell": 8,
        "block": 2,
        "block_stride": 8,
        "bins": 9,
        "template": None,
        "landmarks_modality": None,
    },
    "descriptors": {"top": 50},
    "kmeans": {"k": 32, "max_iter": 300, "tol": 1e-7},
    "gmm": {"max_iter": 100, "tol": 1e-6, "var_floor": 1e-6},
    "fv": {"normalize": True, "power": 0.5, "pca": True},
    "pca": {"variance_ratio": 0.99},
    "boaw": {"codebook_size": 100, "block_size": 6.0, "hop": 1.0, "log_tf": False},
    "train": {
        "hidden": [256, 128, 64],
        "lr": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "epochs": 100,
        "patience": 10,
        "standardize": True,
    },
    "fusion": {"step": 0.05},
}

# (predicate, description) per dotted key; keys absent here only need the right type
_RULES = {
    "seed": (lambda v: v >= 0, ">= 0"),
    "workers": (lambda v: v >= 1, ">= 1"),
    "hog.cell": (lambda v: v >= 1, ">= 1"),
    "hog.block": (lambda v: v >= 1, ">= 1"),
    "hog.block_stride": (lambda v: v >= 1, ">= 1"),
    "hog.bins": (lambda v: v >= 1, ">= 1"),
    "hog.window": (lambda v: len(v) == 2 and min(v) >= 1, "two positive sizes"),
    "descriptors.top": (lambda v: v >= 1, ">= 1"),
    "kmeans.k": (lambda v: v >= 1, ">= 1"),
    "kmeans.max_iter": (lambda v: v >= 1, ">= 1"),
    "kmeans.tol": (lambda v: v >= 0, ">= 0"),
    "gmm.max_iter": (lambda v: v >= 1, ">= 1"),
    "gmm.tol": (lambda v: v >= 0, ">= 0"),
    "gmm.var_floor": (lambda v: v > 0, "> 0"),
    "fv.power": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "pca.variance_ratio": (lambda v: 0 < v <= 1, "in (0, 1]"),
    "boaw.codebook_size": (lambda v: v >= 1, ">= 1"),
    "boaw.block_size": (lambda v: v > 0, "> 0"),
    "boaw.hop": (lambda v: v > 0, "> 0"),
    "train.hidden": (lambda v: all(isinstance(h, int) and h >= 1 for h in v), "positive integers"),
    "train.lr": (lambda v: v > 0, "> 0"),
    "train.momentum": (lambda v: 0 <= v < 1, "in [0, 1)"),
    "train.batch_size": (lambda v: v >= 1, ">= 1"),
    "train.epochs": (lambda v: v >= 1, ">= 1"),
    "train.patience": (lambda v: v is None or v >= 1, ">= 1 or null"),
    "fusion.step": (lambda v: 0 < v <= 1 and abs(round(1 / v) * v - 1) < 1e-9, "a divisor of 1"),
}

_NULLABLE = {"manifest", "hog.template", "hog.landmarks_modality", "train.patience"}


def _merge(base: dict, over: dict, prefix: str = "") -> None:
    for key, val in over.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ValidationError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ValidationError(f"config key {dotted!r} must be an object")
            _merge(base[key], val, dotted + ".")
        else:
            base[key] = val


def _walk(cfg: dict, prefix: str = ""):
    for key, val in cfg.items():
        if isinstance(val, dict):
            yield from _walk(val, f"{prefix}{key}.")
        else:
            yield f"{prefix}{key}", val


def _default_at(dotted: str):
    node = DEFAULTS
    for part in dotted.split("."):
        node = node[part]
    return node


def validate(cfg: dict) -> None:
    for dotted, val in _walk(cfg):
        default = _default_at(dotted)
        if val is None:
            if dotted not in _NULLABLE:
                raise ValidationError(f"config key {dotted!r} may not be null")
            continue
        if isinstance(default, bool) and not isinstance(val, bool):
            raise ValidationError(f"config key {dotted!r} must be a boolean")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ValidationError(f"config key {dotted!r} must be numeric")
            if isinstance(default, int) and not isinstance(val, int) and dotted != "train.patience":
                raise ValidationError(f"config key {dotted!r} must be an integer")
        if isinstance(default, list) and not isinstance(val, list):
            raise ValidationError(f"config key {dotted!r} must be a list")
        rule = _RULES.get(dotted)
        if rule and not rule[0](val):
            raise ValidationError(f"config key {dotted!r} must be {rule[1]}, got {val!r}")


def parse_override(item: str) -> tuple[str, object]:
    """``a.b=value``; the value is parsed as JSON, falling back to a string."""
    if "=" not in item:
        raise ValidationError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def _nest(dotted: str, val) -> dict:
    out: dict = {}
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = val
    return out


def resolve_config(config_path=None, overrides=()) -> dict:
    """Defaults, then the config file (plain or a previous ``run.json``), then flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if config_path:
        doc = read_json(config_path)
        if isinstance(doc, dict) and "command" in doc and "config" in doc:
            doc = doc["config"]
        if not isinstance(doc, dict):
            raise ValidationError(f"{config_path}: config must be a JSON object")
        _merge(cfg, doc)
    for dotted, val in overrides:
        _merge(cfg, _nest(dotted, val))
    validate(cfg)
    for key in ("manifest", "work_dir"):
        if cfg[key] is not None:
            cfg[key] = str(Path(cfg[key]).resolve())
    if cfg["hog"]["template"] is not None:
        cfg["hog"]["template"] = str(Path(cfg["hog"]["template"]).resolve())
    return cfg
