"""Flat key=value configuration with dotted section prefixes.

Files are UTF-8 text, one ``section.key=value`` per line, ``#`` comments and
blank lines ignored. CLI ``--set key=value`` overrides file values, which in
turn override the built-in defaults. Unknown keys are rejected up front so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import os

DEFAULTS: dict[str, str] = {
    # architecture
    "model.schedule": "Full",
    "model.width_scale": "1.0",
    "model.mode": "snn",
    "model.time_steps": "4",
    "model.alpha": "2.0",
    "model.tau": "2.0",
    "model.leak_factor": "",          # empty = disabled
    # data
    "data.source": "synth",           # synth | cifar10 | cifar100 | tinyimagenet
    "data.path": "",
    "data.split": "train",
    "data.classes": "4",
    "data.per_class": "50",
    "data.size": "16",
    "data.seed": "42",
    "data.limit": "",                 # empty = use everything
    # training
    "train.lr": "0.001",
    "train.decay_factor": "0.1",
    "train.decay_epochs": "50,100",
    "train.batch_size": "12",
    "train.max_epochs": "120",
    "train.patience": "10",
    "train.seed": "42",
    "train.lambda": "0.1",
    "train.epsilon": "1e-8",
    "train.ga_mode": "monitor",
    "train.val_fraction": "0.1",
    # profiling
    "profile.batch_size": "8",
    "profile.first_layer_macs_once": "true",
    "profile.membrane_update_macs": "true",
    "profile.checkpoint": "",
    "profile.compare_cnn": "true",
    # ablation grid
    "ablate.train": "false",
    # evaluation
    "eval.checkpoint": "",
    # reporting
    "report.input": "",
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path: str) -> dict[str, str]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such config file: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), origin=path)


def validate_keys(cfg: dict) -> None:
    unknown = sorted(k for k in cfg if k not in DEFAULTS)
    if unknown:
        raise ValueError("unknown config keys: " + ", ".join(unknown))


def effective_config(path=None, overrides=()) -> dict[str, str]:
    """Defaults, overlaid by the file, overlaid by --set pairs; validated."""
    cfg = dict(DEFAULTS)
    if path:
        file_cfg = load_config_file(path)
        validate_keys(file_cfg)
        cfg.update(file_cfg)
    extra = parse_config_text("\n".join(overrides), origin="--set")
    validate_keys(extra)
    cfg.update(extra)
    return cfg


def format_config(cfg: dict[str, str]) -> str:
    """Stable text form; reparsing yields the identical mapping."""
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


# -- typed getters ----------------------------------------------------------

def cfg_str(cfg: dict, key: str) -> str:
    return cfg[key]


def cfg_int(cfg: dict, key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ValueError(f"config key {key} needs an integer, got {cfg[key]!r}") from exc


def cfg_float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ValueError(f"config key {key} needs a number, got {cfg[key]!r}") from exc


def cfg_bool(cfg: dict, key: str) -> bool:
    value = cfg[key].lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"config key {key} needs a boolean, got {cfg[key]!r}")


def cfg_opt_float(cfg: dict, key: str):
    return None if cfg[key] == "" else cfg_float(cfg, key)


def cfg_opt_int(cfg: dict, key: str):
    return None if cfg[key] == "" else cfg_int(cfg, key)


def cfg_int_list(cfg: dict, key: str) -> tuple[int, ...]:
    value = cfg[key].strip()
    if not value:
        return ()
    try:
        return tuple(int(v) for v in value.split(","))
    except ValueError as exc:
        raise ValueError(
            f"config key {key} needs comma-separated integers, got {cfg[key]!r}") from exc
