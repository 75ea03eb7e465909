"""Server configuration: defaults, then a JSON file, then environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Unusable server configuration."""


ENV_PREFIX = "MODEL_SERVER_"

_INT_FIELDS = {"max_batch", "port"}


@dataclass(frozen=True)
class ServerConfig:
    generation_model: str = "builtin-seeded"
    metric_model: str = "builtin-overlap"
    device: str = "cpu"
    max_batch: int = 64
    port: int = 8900

    def __post_init__(self) -> None:
        for name in ("generation_model", "metric_model", "device"):
            if not str(getattr(self, name)).strip():
                raise ConfigError(f"{name} must be a non-empty identifier")
        if self.max_batch < 1:
            raise ConfigError(f"max_batch must be >= 1, got {self.max_batch}")
        if not (1 <= self.port <= 65535):
            raise ConfigError(f"port must be in 1..65535, got {self.port}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServerConfig:
    """File values override defaults; MODEL_SERVER_* variables override the file.

    Example: ``MODEL_SERVER_PORT=9000`` wins over the file's ``port``.
    """
    known = {f.name for f in fields(ServerConfig)}
    data: dict = {}
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update(loaded)

    env = os.environ if env is None else env
    for name in known:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is None:
            continue
        if name in _INT_FIELDS:
            try:
                data[name] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"{ENV_PREFIX}{name.upper()} must be an integer, got {raw!r}") from exc
        else:
            data[name] = raw

    try:
        return ServerConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
