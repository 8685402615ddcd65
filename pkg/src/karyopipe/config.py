"""Layered configuration: defaults, then a YAML file, then env overrides.

Environment variables use the KARYO_ prefix with double underscores for
nesting: KARYO_DB_PATH, KARYO_ENDPOINTS__SEMSEG, KARYO_CASCADE__MERGE_IOU,
KARYO_NOISE__MISCLASS_RATE. Values parse as JSON when possible, else as
strings. Env overrides take precedence over file values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .cascade import CascadeParams

__all__ = ["AppConfig", "load_config", "ENV_PREFIX"]

ENV_PREFIX = "KARYO_"

_STAGE_KEYS = ("semseg", "instance", "dedup", "classify")


@dataclass
class AppConfig:
    """Everything the CLI roles need; unused sections are ignored per role."""

    db_path: str = "karyopipe.db"
    endpoints: dict[str, str] = field(default_factory=dict)
    timeout_ms: dict[str, int] = field(
        default_factory=lambda: {k: 30_000 for k in _STAGE_KEYS})
    retries: int = 1
    lease_seconds: float = 60.0
    seed: int = 0
    cascade: CascadeParams = field(default_factory=CascadeParams)
    tokens: dict[str, str] = field(default_factory=dict)   # token -> tenant id
    truth_dir: str | None = None                           # oracle corpus
    noise: dict[str, float] = field(
        default_factory=lambda: {"iou_degrade": 0.0, "misclass_rate": 0.0})
    gates: dict[str, float] = field(
        default_factory=lambda: {"min_segmentation_pct": 0.0,
                                 "min_class_recall_pct": 0.0})

    def to_dict(self) -> dict:
        return {
            "db_path": self.db_path,
            "endpoints": dict(self.endpoints),
            "timeout_ms": dict(self.timeout_ms),
            "retries": self.retries,
            "lease_seconds": self.lease_seconds,
            "seed": self.seed,
            "cascade": self.cascade.to_dict(),
            "tokens": dict(self.tokens),
            "truth_dir": self.truth_dir,
            "noise": dict(self.noise),
            "gates": dict(self.gates),
        }


def _deep_merge(base: dict, override: Mapping) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _env_overrides(env: Mapping[str, str]) -> dict:
    tree: dict[str, Any] = {}
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name.removeprefix(ENV_PREFIX).lower().split("__")
        try:
            value: Any = json.loads(raw)
        except (json.JSONDecodeError, ValueError):
            value = raw
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return tree


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None) -> AppConfig:
    data = AppConfig().to_dict()
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must contain a mapping")
        data = _deep_merge(data, loaded)
    data = _deep_merge(data, _env_overrides(os.environ if env is None else env))
    cascade = CascadeParams.from_dict(data.pop("cascade", {}))
    known = set(AppConfig.__dataclass_fields__) - {"cascade"}
    kwargs = {k: v for k, v in data.items() if k in known}
    return AppConfig(cascade=cascade, **kwargs)
