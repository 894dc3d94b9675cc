"""Flat ``section.key=value`` config files for GP and GAN settings.

Example::

    gp.n=10
    gp.T=50
    gp.constraints.max_size=100
    gan.lr=0.0002
    gan.dataset.sigma=0.02
"""
from __future__ import annotations

import dataclasses

from .expr import GenConstraints
from .gan import DatasetSpec, GanConfig
from .genetics import GpConfig


class ConfigError(ValueError):
    pass


_NESTED = {"constraints": GenConstraints, "dataset": DatasetSpec}


def parse_config_text(text):
    """Return ``{"gp": {...}, "gan": {...}}`` of raw string values (dotted sub-keys kept)."""
    out = {"gp": {}, "gan": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, rest = key.partition(".")
        if section not in out or not rest:
            raise ConfigError(f"line {lineno}: key must start with 'gp.' or 'gan.', got {key!r}")
        out[section][rest] = value
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _coerce(value, default, name):
    try:
        if isinstance(default, bool):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(value)
            return value.lower() in ("true", "1")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(int(v) for v in value.replace(",", " ").split())
        return value
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def _apply(cls, base, raw, prefix):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    nested = {}
    for key, value in raw.items():
        head, _, tail = key.partition(".")
        if head not in fields:
            raise ConfigError(f"unknown key {prefix}{key}")
        if tail:
            if head not in _NESTED:
                raise ConfigError(f"{prefix}{head} has no sub-keys")
            nested.setdefault(head, {})[tail] = value
        else:
            kwargs[head] = _coerce(value, getattr(base, head), prefix + key)
    for head, sub in nested.items():
        kwargs[head] = _apply(_NESTED[head], getattr(base, head), sub, f"{prefix}{head}.")
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def build_gan_config(raw=None, **overrides):
    cfg = _apply(GanConfig, GanConfig(), raw or {}, "gan.")
    try:
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_gp_config(config_id=None, raw=None, **overrides):
    try:
        base = GpConfig.from_table(config_id) if config_id is not None else GpConfig()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = _apply(GpConfig, base, raw or {}, "gp.")
    try:
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
