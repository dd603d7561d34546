"""Run configuration files: ``key = value`` lines with dotted keys.

Keys are ``model.<field>`` for ModelConfig and ``train.<field>`` for
TrainConfig. ``#`` starts a comment. Missing keys keep their defaults.
Special value syntaxes::

    model.logsigma_clamp = -10.0, 5.0
    model.latent_enable  = true, false, true     (or "all")
    train.lr_schedule    = 0:1e-3, 3000:5e-4
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, Tuple

from hpunet.errors import ConfigError
from hpunet.model.config import ModelConfig
from hpunet.trainer.config import TrainConfig

_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.validate()
        return self


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_clamp(text: str) -> Tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo, hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_enable(text: str):
    if text.strip().lower() == "all":
        return None
    return tuple(_parse_bool(p) for p in text.split(","))


def _parse_schedule(text: str) -> Tuple[Tuple[int, float], ...]:
    pairs = []
    for item in text.split(","):
        step, sep, value = item.partition(":")
        if not sep:
            raise ValueError(f"expected 'step:value', got {item.strip()!r}")
        pairs.append((int(step), float(value)))
    return tuple(pairs)


def _parse_int(text: str) -> int:
    return int(text.strip())


_SPECIAL: Dict[str, Callable[[str], Any]] = {
    "model.logsigma_clamp": _parse_clamp,
    "model.latent_enable": _parse_enable,
    "train.lr_schedule": _parse_schedule,
}


def _parser_for(key: str, default: Any) -> Callable[[str], Any]:
    if key in _SPECIAL:
        return _SPECIAL[key]
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return _parse_int
    if isinstance(default, float):
        return float
    return str.strip


def known_keys() -> Dict[str, Any]:
    """Every accepted key with its default value."""
    keys: Dict[str, Any] = {}
    for prefix, cls in (("model", ModelConfig), ("train", TrainConfig)):
        defaults = cls()
        for f in fields(cls):
            keys[f"{prefix}.{f.name}"] = getattr(defaults, f.name)
    return keys


def parse_config(text: str) -> RunConfig:
    defaults = known_keys()
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parser_for(key, defaults[key])(value.strip())
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None

    model = replace(ModelConfig(), **{k[6:]: v for k, v in values.items() if k.startswith("model.")})
    train = replace(TrainConfig(), **{k[6:]: v for k, v in values.items() if k.startswith("train.")})
    return RunConfig(model=model, train=train).validate()


def _render_value(key: str, value: Any) -> str:
    if key == "model.latent_enable":
        return "all" if value is None else ", ".join("true" if v else "false" for v in value)
    if key == "model.logsigma_clamp":
        return f"{value[0]!r}, {value[1]!r}"
    if key == "train.lr_schedule":
        return ", ".join(f"{s}:{v!r}" for s, v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(config: RunConfig) -> str:
    """Every key with its resolved value; parse_config() reads it back unchanged."""
    lines = ["# hpunet run configuration"]
    for prefix, section in (("model", config.model), ("train", config.train)):
        for f in fields(section):
            key = f"{prefix}.{f.name}"
            lines.append(f"{key} = {_render_value(key, getattr(section, f.name))}")
    return "\n".join(lines) + "\n"
