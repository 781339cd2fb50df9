"""Flat ``key = value`` config files and the run configuration.

    # comment
    variant = nano          # optional base to override
    heads = [-, 4, 8, 14]   # a leading '-' (the conv stage) is dropped
    mlp_ratios = [5, 4, 3]

Unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import MISSING, dataclass, field, fields, replace
from pathlib import Path

from .backbone import ConfigError, ModelConfig, get_variant

DEFAULT_SEED = 42
_LIST_KEYS = {"heads", "depths", "mlp_ratios", "windows", "interaction", "dims"}


def _scalar(text: str):
    t = text.strip()
    if t in ("-", ""):
        return None
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def parse_value(text: str):
    t = text.strip()
    if t.startswith("["):
        if not t.endswith("]"):
            raise ConfigError(f"unterminated list: {text!r}")
        inner = t[1:-1].strip()
        return [] if not inner else [_scalar(x) for x in inner.split(",")]
    return _scalar(t)


def parse_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def model_config_from_dict(values: dict) -> ModelConfig:
    values = dict(values)
    known = {f.name for f in fields(ModelConfig)}
    base_name = values.pop("variant", None)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in _LIST_KEYS & set(values):
        v = values[key]
        if not isinstance(v, list):
            raise ConfigError(f"{key} must be a list, got {v!r}")
        if key != "dims" and key != "depths" and len(v) == 4 and v[0] is None:
            v = v[1:]
        if any(x is None for x in v):
            raise ConfigError(f"{key}: '-' is only allowed as the leading conv-stage entry")
        values[key] = v
    if base_name is not None:
        cfg = replace(get_variant(str(base_name)), **values)
    else:
        missing = [f.name for f in fields(ModelConfig)
                   if f.default is MISSING and f.default_factory is MISSING and f.name not in values]
        if missing:
            raise ConfigError(f"missing required keys: {', '.join(missing)}")
        cfg = ModelConfig(**values)
    return cfg.validate()


def parse_model_config(text: str) -> ModelConfig:
    return model_config_from_dict(parse_text(text))


def load_model_config(path) -> ModelConfig:
    return parse_model_config(Path(path).read_text(encoding="utf-8"))


@dataclass
class RunConfig:
    command: str
    variant: str | None = None
    config_path: str | None = None
    seed: int = DEFAULT_SEED
    precision: str = "f32"
    out: str | None = None
    options: dict = field(default_factory=dict)

    def model_config(self) -> ModelConfig:
        if self.variant and self.config_path:
            raise ConfigError("give either --variant or --config, not both")
        if self.config_path:
            return load_model_config(self.config_path)
        return get_variant(self.variant or "nano").validate()
