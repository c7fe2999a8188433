"""JSON configuration: one document mirroring the nested dataclasses.

Every field has a default, so ``{}`` is a valid config. Unknown keys are
rejected with their dotted path.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path


class ConfigError(ValueError):
    pass


def _nested_default(f):
    if f.default_factory is not dataclasses.MISSING:
        value = f.default_factory()
        if dataclasses.is_dataclass(value):
            return value
    return None


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def from_dict(cls, data, path="", base=None):
    """Build dataclass ``cls`` from a JSON object, recursing into nested configs.

    Keys missing from ``data`` keep their value in ``base`` (a default
    instance of ``cls``), so a partial nested object only overrides what it
    names.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(path + k for k in unknown)}")
    kwargs = {}
    if base is not None:
        kwargs = {name: getattr(base, name) for name, f in fields.items() if f.init}
    for name, value in data.items():
        f = fields[name]
        nested = getattr(base, name) if base is not None else _nested_default(f)
        if dataclasses.is_dataclass(nested):
            kwargs[name] = from_dict(type(nested), value, f"{path}{name}.", nested)
        elif isinstance(f.default, tuple):
            kwargs[name] = _tupleize(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, RuntimeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def to_dict(obj):
    def conv(v):
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        if isinstance(v, list):
            return [conv(x) for x in v]
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        return v
    return conv(dataclasses.asdict(obj))


def load_config(path=None, seed=None):
    """Read a pipeline config (``None`` gives the defaults); ``seed`` overrides all seeds."""
    from .pipeline import PipelineConfig

    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = from_dict(PipelineConfig, data)
    if seed is not None:
        apply_seed(cfg, seed)
    return cfg


def apply_seed(cfg, seed: int):
    seed = int(seed)
    cfg.seed = seed
    cfg.train.seed = seed
    cfg.train.sampler.seed = seed
    cfg.pyramid.seed = seed
    return cfg
