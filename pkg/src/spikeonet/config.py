"""Experiment configuration: defaults, JSON files, overrides and validation.

Precedence is command-line flags > config file > built-in defaults.  Unknown
keys anywhere (including inside ``lif``) are rejected.
"""

import copy
import json
import math
from dataclasses import fields

from spikeonet.encoding import ENCODERS
from spikeonet.membrane import LifConfig, MembraneError

EXPERIMENTS = (
    "naive-regression",
    "mlp-membrane",
    "deeponet-regression",
    "mnist-classification",
    "encode-inspect",
    "lif-trace",
    "compare-encodings",
)


class ConfigError(ValueError):
    pass


_SMOOTHING = {"window": 51, "polyorder": 3}

_REGRESSION = {
    "encoder": "lower_triangular",
    "n_t": 50,
    "n_x": 100,
    "n_samples": 1000,
    "n_train": 800,
    "length_scale": 1.0,
    "branch_widths": [30, 30],
    "trunk_widths": [30, 30],
    "epochs": 1000,
    "lr": 1e-3,
    "batch_size": 32,
    "lif_method": "euler",
    "direct_gain": 1.0,
    "precision": 32,
    "resample_rate": True,
    "smoothing": _SMOOTHING,
}

DEFAULTS = {
    "naive-regression": {
        "functions": ["step", "square", "sin_ode"],
        "noise_sigma": 0.1,
        "sin_k": math.pi,
        "encoder": "latency",
        "n_t": 50,
        "n_x": 100,
        "epochs": 3000,
        "lr": 1e-3,
        "lif_method": "euler",
        "smoothing": _SMOOTHING,
    },
    "deeponet-regression": dict(_REGRESSION),
    "compare-encodings": {**_REGRESSION, "oversample": 10},
    "mnist-classification": {
        "n_t": 25,
        "n_train": 8000,
        "n_test": 2000,
        "mnist_dir": None,
        "mnist_split": "auto",
        "branch_widths": [512, 250, 50],
        "trunk_widths": [50, 50],
        "epochs": 20,
        "lr": 1e-3,
        "batch_size": 32,
        "lif_method": "euler",
    },
    "mlp-membrane": {
        "encoder": "lower_triangular",
        "n_t": 50,
        "grid_points": 100,
        "sigma": 0.4,
        "mnist_dir": None,
        "mnist_split": "auto",
        "emulator_windows": 20000,
        "emulator_epochs": 40,
        "emulator_lr": 1e-3,
        "emulator_batch_size": 128,
        "emulator_source": "euler",
        "emulator_checkpoint": None,
        "readout_width": 100,
        "epochs": 30,
        "lr": 1e-3,
        "batch_size": 64,
        "lif_method": "integral",
        "repeats": 3,
        "timing_repeats": 5,
    },
    "encode-inspect": {
        "encoder": "lower_triangular",
        "n_x": 5,
        "n_t": None,
        "values": None,
        "precision": 32,
    },
    "lif-trace": {
        "input": [1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0],
        "lif_method": "euler",
    },
}

for _d in DEFAULTS.values():
    _d.setdefault("seed", 0)
    _d.setdefault("lif", {})

_LIF_KEYS = {f.name for f in fields(LifConfig)}


def _check_lif(doc):
    if not isinstance(doc, dict):
        raise ConfigError("'lif' must be an object")
    unknown = set(doc) - _LIF_KEYS
    if unknown:
        raise ConfigError(f"unknown lif keys: {sorted(unknown)}")
    try:
        return LifConfig.from_dict({**LifConfig().to_dict(), **doc})
    except (MembraneError, TypeError) as exc:
        raise ConfigError(f"invalid lif settings: {exc}") from exc


def _check_types(name, cfg, defaults):
    for key, default in defaults.items():
        value = cfg[key]
        if default is None or value is None:
            continue
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, type(default))
        if not ok:
            raise ConfigError(f"{name}: '{key}' should be {type(default).__name__}, got {value!r}")


def resolve(experiment, file_cfg=None, overrides=None):
    """Merge defaults, a config mapping and flag overrides into a validated dict."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    defaults = DEFAULTS[experiment]
    cfg = copy.deepcopy(defaults)
    for layer in (file_cfg or {}, overrides or {}):
        layer = dict(layer)
        named = layer.pop("experiment", experiment)
        if named != experiment:
            raise ConfigError(f"config is for {named!r}, not {experiment!r}")
        unknown = set(layer) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys for {experiment}: {sorted(unknown)}")
        for key, value in layer.items():
            if isinstance(defaults[key], dict) and key != "lif":
                if not isinstance(value, dict) or set(value) - set(defaults[key]):
                    raise ConfigError(f"'{key}' accepts only {sorted(defaults[key])}")
                cfg[key] = {**cfg[key], **value}
            elif key == "lif":
                cfg[key] = {**cfg[key], **value} if isinstance(value, dict) else value
            else:
                cfg[key] = value
    _check_types(experiment, cfg, defaults)
    _check_lif(cfg["lif"])
    if "encoder" in cfg and cfg["encoder"] not in ENCODERS:
        raise ConfigError(f"unknown encoder {cfg['encoder']!r}")
    if "lif_method" in cfg and cfg["lif_method"] not in ("euler", "integral"):
        raise ConfigError("lif_method must be 'euler' or 'integral'")
    for key in ("epochs", "n_t", "n_x", "batch_size", "repeats", "n_train", "n_test", "n_samples"):
        if cfg.get(key) is not None and key in cfg and cfg[key] < 1:
            raise ConfigError(f"'{key}' must be positive")
    if cfg.get("timing_repeats") is not None and cfg.get("timing_repeats", 5) < 5:
        raise ConfigError("'timing_repeats' must be at least 5")
    cfg["experiment"] = experiment
    return cfg


def lif_config(cfg):
    return _check_lif(cfg["lif"])


def load_file(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("a config file holds one JSON object")
    return doc
