"""Experiment configuration: JSON documents, presets and validation.

A config may name a shipped preset under ``"extends"``; its own keys are then
deep-merged over the preset. Validation errors carry the dotted path of the
offending field.
"""
from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .schedulers import Strategy


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


_triple = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3}
_activation = {
    "oneOf": [
        {"enum": ["identity", "relu", "leaky_relu", "tanh", "softmax"]},
        {"type": "object", "required": ["name"], "additionalProperties": False,
         "properties": {"name": {"enum": ["identity", "relu", "leaky_relu", "tanh", "softmax"]},
                        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}},
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "dataset", "partition", "network", "train", "strategies"],
    "properties": {
        "extends": {"type": "string"},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "dataset": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["blobs", "hetero", "idx", "csv"]},
                "n_classes": {"type": "integer", "minimum": 2},
                "n_c": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 1},
                "separation": {"type": "number", "exclusiveMinimum": 0},
                "grid": _triple,
                "images": {"type": "string"},
                "labels": {"type": "string"},
                "path": {"type": "string"},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "blobs"}}},
                 "then": {"required": ["n_classes", "n_c", "dim", "separation"]}},
                {"if": {"properties": {"kind": {"const": "hetero"}}}, "then": {"required": ["grid"]}},
                {"if": {"properties": {"kind": {"const": "idx"}}}, "then": {"required": ["images", "labels"]}},
                {"if": {"properties": {"kind": {"const": "csv"}}}, "then": {"required": ["path"]}},
            ],
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"valid_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        },
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["class", "spatial"]},
                "extent": _triple,
                "node_count": {"type": ["integer", "null"], "minimum": 1},
            },
            "if": {"properties": {"kind": {"const": "spatial"}}},
            "then": {"required": ["extent"]},
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["hidden", "activations", "output"],
            "properties": {
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "activations": {"oneOf": [_activation, {"type": "array", "items": _activation}]},
                "output": _activation,
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "required": ["optimizer", "eta", "n_b", "n_e", "loss"],
            "properties": {
                "optimizer": {"enum": ["sgd", "adam"]},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "n_b": {"type": "integer", "minimum": 1},
                "n_e": {"type": "integer", "minimum": 0},
                "loss": {"enum": ["mse", "cross_entropy"]},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "strategies": {
            "type": "array", "minItems": 1, "uniqueItems": True,
            "items": {"enum": [s.value for s in Strategy]},
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "jsd": {"type": "boolean"},
                "bins": {"type": "integer", "minimum": 1},
                "epoch": {"type": "integer", "minimum": 0},
                "export_schedule": {"type": "boolean"},
            },
        },
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "split": {"valid_fraction": 0.2},
    "diagnostics": {"jsd": True, "bins": 64, "epoch": 0, "export_schedule": False},
    "out": "runs",
}


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("blockrandom.presets").iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    try:
        text = resources.files("blockrandom.presets").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError("extends", f"unknown preset {name!r} (have {', '.join(preset_names())})") from None
    return json.loads(text)


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(["config", *(str(p) for p in err.absolute_path)])


def resolve(raw: dict) -> dict:
    """Apply ``extends`` and defaults, then validate. Returns a new dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "must be a JSON object")
    cfg = dict(raw)
    name = cfg.pop("extends", None)
    if name is not None:
        if not isinstance(name, str):
            raise ConfigError("config.extends", "must be a preset name")
        base = load_preset(name)
        base.pop("extends", None)
        cfg = deep_merge(base, cfg)
    cfg = deep_merge(DEFAULTS, cfg)
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: dict) -> None:
    ds, part, train = cfg["dataset"], cfg["partition"], cfg["train"]
    classify = ds["kind"] in ("blobs", "idx") or (ds["kind"] == "csv" and train["loss"] == "cross_entropy")
    if part["kind"] == "class" and ds["kind"] == "hetero":
        raise ConfigError("config.partition.kind", "class partitioning needs a classification dataset")
    if train["loss"] == "cross_entropy":
        out = cfg["network"]["output"]
        if (out if isinstance(out, str) else out["name"]) != "softmax":
            raise ConfigError("config.network.output", "cross_entropy loss requires a softmax output")
    if classify != (train["loss"] == "cross_entropy"):
        raise ConfigError("config.train.loss", "classification data needs cross_entropy, regression needs mse")
    acts = cfg["network"]["activations"]
    if isinstance(acts, list) and len(acts) != len(cfg["network"]["hidden"]):
        raise ConfigError("config.network.activations", "need one activation per hidden layer")


def load(source, seed: int | None = None, out: str | None = None) -> dict:
    """Config from a file path, a preset name, or an already-parsed dict."""
    if isinstance(source, dict):
        raw = source
    else:
        p = Path(source)
        if p.is_file():
            try:
                raw = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{p}: invalid JSON ({exc})") from None
        elif str(source) in preset_names():
            raw = {"extends": str(source)}
        else:
            raise ConfigError("config", f"no config file or preset named {source!r}")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return resolve(raw)
