"""Run configuration: defaults, flat ``section.key = value`` files, env overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .decode import DecodeConfig
from .losses import LossConfig
from .model import ModelConfig, Variant

ENV_PREFIX = "STORYEND_"


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    train: str = ""
    dev: str = ""
    format: str = "jsonl"
    min_freq: int = 1
    max_context_len: int = 120


@dataclass
class TrainConfig:
    k: int = 5  # keyphrases per story; 0 keeps all
    seed: int = 0
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.001
    selector: str = ""  # module:function dev scorer, lower is better


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    SECTIONS = ("model", "loss", "decode", "data", "train")

    @property
    def k(self) -> int | None:
        return self.train.k or None

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.items():
            out[key] = value.value if isinstance(value, Variant) else value
        return out

    def items(self):
        for section in self.SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    def set(self, key: str, value) -> None:
        section, _, name = key.partition(".")
        if section not in self.SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(self, section)
        types = {f.name: f.type for f in fields(obj)}
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(obj, name)
        try:
            setattr(obj, name, _coerce(value, current))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def validate(self) -> "RunConfig":
        """Re-run each section's checks after piecemeal updates."""
        try:
            self.model.__post_init__()
            self.loss.__post_init__()
            self.decode.__post_init__()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.train.batch_size < 1 or self.train.epochs < 0 or self.train.lr <= 0 or self.train.k < 0:
            raise ConfigError("train.batch_size, train.epochs, train.lr and train.k must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for key, value in d.items():
            cfg.set(key, value)
        return cfg.validate()


def _coerce(value, current):
    if not isinstance(value, str):
        if isinstance(current, Variant):
            return Variant(value)
        return type(current)(value) if current is not None else value
    text = value.strip()
    if isinstance(current, bool):
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, Variant):
        return Variant(text)
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``section.key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    entries = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or "." not in key.strip():
            raise ConfigError(f"{path}:{line_no}: expected 'section.key = value'")
        entries[key.strip()] = value.strip()
    return entries


def env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def load_run_config(path: str | Path | None = None, overrides: dict | None = None,
                    environ=None) -> RunConfig:
    """Defaults, then config file, then environment, then explicit overrides."""
    cfg = RunConfig()
    environ = os.environ if environ is None else environ
    if path:
        for key, value in parse_config_file(path).items():
            cfg.set(key, value)
    for key, _ in list(cfg.items()):
        if env_name(key) in environ:
            cfg.set(key, environ[env_name(key)])
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, value)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = ["# storyend run configuration"]
    for key, value in cfg.to_dict().items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
