"""Registry configuration: YAML file, then ``AGENTTRUST_*`` environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

ENV_PREFIX = "AGENTTRUST_"


@dataclass
class RegistryConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: Path = Path("./registry-data")
    operator_key_path: Path = Path("./operator-key.json")
    anchor_backend: str = "memory"  # "memory" or "file"
    anchor_journal_path: Path | None = None
    batch_size: int = 64
    batch_interval_seconds: int = 600
    snapshot_every: int = 500
    revocation_cache_seconds: int = 60
    guard_allowed_hosts: tuple[str, ...] = ("127.0.0.1", "::1")
    max_body_bytes: int = 256 * 1024
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.anchor_backend not in ("memory", "file"):
            raise ValueError(f"unknown anchor backend {self.anchor_backend!r}")
        if self.batch_size < 1 or self.batch_interval_seconds < 1:
            raise ValueError("batch triggers must be positive")

    @property
    def journal_path(self) -> Path:
        return self.anchor_journal_path or Path(self.data_dir) / "anchors.jsonl"


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    if name in ("port", "batch_size", "batch_interval_seconds", "snapshot_every", "revocation_cache_seconds", "max_body_bytes"):
        return int(value)
    if name in ("data_dir", "operator_key_path", "anchor_journal_path"):
        return Path(value)
    if name == "guard_allowed_hosts":
        if isinstance(value, str):
            value = [h.strip() for h in value.split(",") if h.strip()]
        return tuple(value)
    return value


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> RegistryConfig:
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a mapping")
        values.update(loaded)
    known = {f.name for f in fields(RegistryConfig)} - {"extra"}
    extra = {k: v for k, v in values.items() if k not in known}
    values = {k: v for k, v in values.items() if k in known}
    for name in known:
        key = ENV_PREFIX + name.upper()
        if key in env:
            values[name] = env[key]
    return RegistryConfig(**{k: _coerce(k, v) for k, v in values.items()}, extra=extra)
