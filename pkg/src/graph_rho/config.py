"""Flat ``key = value`` configuration files with dotted sections.

    # comment
    rho.window_w = 80
    subsolver.max_moves = 20000
    train.lam = 0.5

Values are typed by the dataclass field they land in; ``none`` clears optionals.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from .rho import RhoConfig, SubsolverConfig
from .trainer import ORACLES, TrainConfig

SECTIONS = ("instances", "rho", "subsolver", "train", "labels", "model", "run", "output")


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key or key.split(".", 1)[0] not in SECTIONS:
            raise ConfigError(f"{source}:{lineno}: key {key!r} needs one of the sections {SECTIONS}")
        out[key] = value
    return out


def load_config(path: str | Path | None, overrides: list[str] | tuple[str, ...] = ()) -> dict[str, str]:
    flat = parse_config(Path(path).read_text(), str(path)) if path else {}
    for item in overrides:
        flat.update(parse_config(item, "--set"))
    return flat


def format_config(flat: dict[str, Any]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(flat.items()))


def _coerce(value: str, default: Any, key: str) -> Any:
    if value.lower() == "none":
        return None
    try:
        if isinstance(default, bool):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if isinstance(default, int) or (default is None and value.lstrip("-").isdigit()):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {value!r} as {type(default).__name__}") from exc
    return value


def _build(cls, flat: dict[str, str], section: str, **extra):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = dict(extra)
    for key, value in flat.items():
        sec, name = key.split(".", 1)
        if sec != section:
            continue
        if name not in fields or name in extra:
            raise ConfigError(f"unknown key {key}")
        kwargs[name] = _coerce(value, getattr(defaults, name), key)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def subsolver_config(flat: dict[str, str]) -> SubsolverConfig:
    return _build(SubsolverConfig, flat, "subsolver")


def rho_config(flat: dict[str, str], **over) -> RhoConfig:
    merged = dict(flat)
    merged.update({f"rho.{k}": str(v) for k, v in over.items()})
    return _build(RhoConfig, merged, "rho", subsolver=subsolver_config(flat))


def train_config(flat: dict[str, str], **over) -> TrainConfig:
    merged = dict(flat)
    merged.update({f"train.{k}": str(v) for k, v in over.items() if v is not None})
    return _build(TrainConfig, merged, "train")


def label_oracle(flat: dict[str, str]) -> str:
    oracle = flat.get("labels.oracle", "current_window")
    if oracle not in ORACLES:
        raise ConfigError(f"labels.oracle must be one of {ORACLES}")
    return oracle


def resolved(rho: RhoConfig | None = None, train: TrainConfig | None = None, **extra: Any) -> dict[str, Any]:
    """Flat view of the effective configuration, echoed next to every output."""
    out: dict[str, Any] = {}
    if rho is not None:
        for k, v in dataclasses.asdict(rho).items():
            if k == "subsolver":
                out.update({f"subsolver.{kk}": vv for kk, vv in v.items()})
            else:
                out[f"rho.{k}"] = v
    if train is not None:
        out.update({f"train.{k}": v for k, v in dataclasses.asdict(train).items()})
    out.update(extra)
    return out
