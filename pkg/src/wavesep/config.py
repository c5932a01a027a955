"""``key = value`` run-configuration files.

Keys are the field names of :class:`~wavesep.model.ModelConfig` and
:class:`~wavesep.train.TrainConfig` plus the path keys in ``PATH_KEYS``.
Blank lines and ``#`` comments are ignored; unknown keys are errors that
name the offending line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from wavesep.model import ModelConfig
from wavesep.train import TrainConfig

PATH_KEYS = {"data": None, "out": None, "history": None}
_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig) if f.name != "checkpoint_path"}


class ConfigFileError(ValueError):
    pass


def _convert(key: str, raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _default(f: dataclasses.Field):
    return f.default if f.default is not dataclasses.MISSING else f.default_factory()


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    def set(self, key: str, raw: str, where: str = "") -> None:
        try:
            if key in _MODEL_FIELDS:
                self.model[key] = _convert(key, raw, _default(_MODEL_FIELDS[key]))
            elif key in _TRAIN_FIELDS:
                self.train[key] = _convert(key, raw, _default(_TRAIN_FIELDS[key]))
            elif key in PATH_KEYS:
                self.paths[key] = raw
            else:
                raise ConfigFileError(f"{where}unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigFileError):
                raise
            raise ConfigFileError(f"{where}{exc}") from None

    def model_config(self, **overrides) -> ModelConfig:
        return ModelConfig(**{**self.model, **overrides})

    def train_config(self, **overrides) -> TrainConfig:
        return TrainConfig(**{**self.train, **overrides})


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    rc = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        rc.set(key, value, f"{source}:{lineno}: ")
    return rc


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def documented_defaults() -> str:
    """Every recognised key with its default, in config-file syntax."""
    lines = ["# model"]
    lines += [f"{k} = {_default(f)}" for k, f in _MODEL_FIELDS.items()]
    lines.append("# training")
    lines += [f"{k} = {_default(f)}" for k, f in _TRAIN_FIELDS.items()]
    lines.append("# paths (no defaults)")
    lines += [f"# {k} =" for k in PATH_KEYS]
    return "\n".join(lines) + "\n"
