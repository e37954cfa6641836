"""Run configuration files: strict JSON parsing and validation.

A run config mirrors the training config plus a dataset path. Granularity
windows may be given as tick counts or as frequency labels ("4h", "30m",
"1d") together with a base ``tick`` label; labels must be whole multiples
of the tick. Unknown keys are rejected.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

from .model import TrainConfig


class ConfigError(ValueError):
    """Raised on malformed run configuration files."""


_UNIT_MINUTES = {"m": 1, "min": 1, "h": 60, "d": 1440}
_LABEL_RE = re.compile(r"^(\d+)\s*(m|min|h|d)$")

_RUN_ONLY_KEYS = {"dataset", "tick"}


def parse_frequency_label(label: str) -> int:
    """Minutes represented by a label like '30m', '1h' or '2d'."""
    m = _LABEL_RE.match(label.strip().lower())
    if not m:
        raise ConfigError(f"cannot parse frequency label {label!r}")
    return int(m.group(1)) * _UNIT_MINUTES[m.group(2)]


def granularity_ticks(windows, tick: str | None) -> tuple[int, ...]:
    """Convert a granularity dictionary to tick counts."""
    out = []
    for w in windows:
        if isinstance(w, bool):
            raise ConfigError(f"invalid granularity window {w!r}")
        if isinstance(w, int):
            out.append(w)
            continue
        if isinstance(w, str):
            if tick is None:
                raise ConfigError(
                    f"granularity label {w!r} requires a base 'tick' entry"
                )
            base = parse_frequency_label(tick)
            minutes = parse_frequency_label(w)
            if minutes % base != 0:
                raise ConfigError(
                    f"granularity {w!r} is not a whole multiple of tick {tick!r}"
                )
            out.append(minutes // base)
            continue
        raise ConfigError(f"invalid granularity window {w!r}")
    return tuple(out)


def load_run_config(path) -> dict:
    """Parse and validate a run config file; returns the raw dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    return raw


def train_config_from_run(run: dict, seed: int | None = None) -> TrainConfig:
    """Build a validated TrainConfig from a run-config dict."""
    from dataclasses import fields

    known = {f.name for f in fields(TrainConfig)} | _RUN_ONLY_KEYS
    unknown = set(run) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    d = {k: v for k, v in run.items() if k not in _RUN_ONLY_KEYS}
    if "granularity_windows" in d:
        d["granularity_windows"] = granularity_ticks(
            d["granularity_windows"], run.get("tick")
        )
    if seed is not None:
        d["seed"] = seed
    try:
        return TrainConfig.from_dict(d)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
