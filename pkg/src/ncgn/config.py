"""Key=value run configuration.

Files are line-oriented ``key = value`` text with ``#`` comments; dotted keys
namespace modules (``schedule.kind``, ``interpolant.kind``). Precedence:
command-line overrides > file > defaults. Unknown keys are rejected by name,
and the resolved configuration is echoed to ``out_dir/config.resolved`` so a
run can be reproduced from its own artifact.
"""

from __future__ import annotations

import os

DEFAULTS = {
    "out_dir": "out",
    "seed": 0,
    "task": "features",
    "method": "dmp",
    "mp_kind": "gcn",
    "epochs": 300,
    "batch": 128,
    "lr": 1e-3,
    "warmup_epochs": 10,
    "ema_decay": 0.95,
    "hdim": 32,
    "layers": 3,
    "knn_k": 8,
    "nfes": 200,
    "interpolant.kind": "cfm",
    "interpolant.sigma_min": 1e-3,
    "schedule.kind": "exponential",
    "dataset": "",
    "checkpoint": "",
    "n_train": 2000,
    "n_test": 400,
    "n_points": 64,
    "n_shapes": 20,
    "n_seeds": 3,
    "convention": "damped",
    "mask_task": "",
    "n_samples": 0,
    "gw.eps": 0.05,
    "gw.iters": 50,
    "gw.pooling": "mean",
    "attention.bins": 10,
    "attention.epochs": 50,
    "theory.snr_lo": 0.25,
    "theory.snr_hi": 16.0,
    "theory.n_snrs": 12,
    "depths": "2 4 8 16",
}


class ConfigError(ValueError):
    pass


def _convert(key, raw):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if raw not in ("true", "false"):
            raise ConfigError(f"key {key!r}: expected true/false, got {raw!r}")
        return raw == "true"
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected number, got {raw!r}") from None
    return raw


def _parse_pairs(pairs, source):
    seen = {}
    for key, raw in pairs:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r} ({source})")
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} ({source})")
        seen[key] = _convert(key, raw)
    return seen


def read_config_file(path):
    pairs = []
    with open(path) as fh:
        for ln_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path} line {ln_no}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            pairs.append((key, raw))
    return _parse_pairs(pairs, path)


def parse_config(path=None, overrides=()):
    """Resolve defaults <- config file <- key=value override strings."""
    config = dict(DEFAULTS)
    if path:
        config.update(read_config_file(path))
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        pairs.append((key, raw))
    config.update(_parse_pairs(pairs, "command line"))
    return config


def write_resolved(config, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.resolved")
    with open(path, "w") as fh:
        for key in sorted(config):
            val = config[key]
            if isinstance(val, bool):
                val = "true" if val else "false"
            fh.write(f"{key} = {val}\n")
    return path
