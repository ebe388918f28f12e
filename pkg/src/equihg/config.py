"""Run configuration: ``key = value`` files with [model], [train] and [data] sections.

Values are layered defaults <- config file <- command-line overrides.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    molecules: str | None = None  # SDF file or directory of .xyz files
    targets: str | None = None  # CSV keyed by molecule name
    bundled: bool = False  # use the sample set shipped with the package
    n: int | None = None  # keep only the first n records before splitting
    split_seed: int = 0
    key_column: str = "name"

    @property
    def has_source(self) -> bool:
        return self.bundled or self.molecules is not None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _convert(cls, key: str, raw: str):
    """Coerce a string value to the type of ``cls``'s default for ``key``."""
    defaults = {f.name: f for f in fields(cls)}
    if key not in defaults:
        raise ConfigError(f"unknown key {key!r} for section [{_section_of(cls)}]")
    spec = defaults[key]
    kind = spec.type if isinstance(spec.type, str) else getattr(spec.type, "__name__", str(spec.type))
    text = raw.strip()
    if "None" in kind and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("bool"):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"[{_section_of(cls)}] {key}: cannot parse {raw!r} as {kind}") from None
    return text


def _section_of(cls) -> str:
    return next(name for name, c in _SECTIONS.items() if c is cls)


def _values(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (optional) and apply ``overrides`` of the form {"train.epochs": 5}.

    Unknown sections or keys are errors, so typos do not silently fall back to defaults.
    """
    layers = {name: {} for name in _SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                layers[section][key] = _convert(_SECTIONS[section], key, raw)
        base = Path(path).parent
        for key in ("molecules", "targets"):
            value = layers["data"].get(key)
            if value is not None and not Path(value).is_absolute():
                layers["data"][key] = str(base / value)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or key not in {f.name for f in fields(_SECTIONS[section])}:
            raise ConfigError(f"unknown override {dotted!r}")
        layers[section][key] = value
    try:
        model = ModelConfig(**{**_values(ModelConfig()), **layers["model"]})
        train = TrainConfig(**{**_values(TrainConfig()), **layers["train"]})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data = DataConfig(**{**_values(DataConfig()), **layers["data"]})
    if data.n is not None and data.n < 1:
        raise ConfigError("[data] n must be positive")
    return RunConfig(model, train, data)
