"""Flat ``key = value`` config files mapped onto dataclass fields."""

from __future__ import annotations

import configparser
import dataclasses
import typing
from pathlib import Path

_SECTION = "config"


class ConfigError(ValueError):
    pass


def parse_flat(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if parser.sections() != [_SECTION]:
        raise ConfigError(f"{source}: sections are not allowed in flat config files")
    return dict(parser[_SECTION])


def _coerce(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    if origin is tuple:
        parts = [p.strip() for p in raw.split(",")]
        args = typing.get_args(tp)
        if len(parts) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(_coerce(p, a, key) for p, a in zip(parts, args))
    if origin is typing.Union:  # Optional[...]
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        return _coerce(raw, args[0], key)
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp.__name__}") from None
    return raw


def coerce_fields(values: dict[str, str], cls, source: str = "<config>") -> dict:
    """Type-convert string values against the fields of dataclass ``cls``; unknown keys are errors."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    return {k: _coerce(v, hints[k], k) for k, v in values.items()}


def load_flat_config(path: str | Path, cls) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return coerce_fields(parse_flat(text, str(path)), cls, str(path))


def dump_flat(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
