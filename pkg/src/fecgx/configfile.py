"""Plain-text key=value config files with dataclass round-tripping.

Lines are ``key = value``; ``#`` starts a comment. Nested dataclasses
flatten with dotted keys, tuples as comma lists, matrices as
semicolon-separated rows. parse -> serialize -> parse is a fixed point.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError

__all__ = ["parse_kv", "serialize_kv", "dataclass_to_kv", "kv_to_dataclass",
           "load_config", "save_config"]


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def serialize_kv(kv: dict[str, str]) -> str:
    return "".join(f"{k} = {kv[k]}\n" for k in sorted(kv))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, np.ndarray):
        if value.ndim == 1:
            return ",".join(repr(float(v)) for v in value)
        if value.ndim == 2:
            return ";".join(",".join(repr(float(v)) for v in row) for row in value)
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def _coerce(text: str, template):
    try:
        if isinstance(template, bool):
            if text.lower() not in ("true", "false", "0", "1"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(template, (int, np.integer)):
            return int(text)
        if isinstance(template, (float, np.floating)):
            return float(text)
        if isinstance(template, str):
            return text
        if isinstance(template, tuple):
            return tuple(float(v) for v in text.split(","))
        if isinstance(template, np.ndarray):
            if ";" in text or template.ndim == 2:
                return np.array([[float(v) for v in row.split(",")]
                                 for row in text.split(";")])
            return np.array([float(v) for v in text.split(",")])
    except ValueError as err:
        raise ConfigError(f"cannot parse {text!r} as {type(template).__name__}") from err
    raise ConfigError(f"unsupported field type {type(template).__name__}")


def dataclass_to_kv(obj, prefix: str = "") -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(obj):
        val = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(val):
            out.update(dataclass_to_kv(val, prefix=f"{key}."))
        else:
            out[key] = _fmt(val)
    return out


def kv_to_dataclass(cls, kv: dict[str, str], prefix: str = ""):
    """Build ``cls`` from flat keys; unknown keys under the prefix error."""
    defaults = cls()
    kwargs = {}
    consumed = set()
    for f in dataclasses.fields(cls):
        key = f"{prefix}{f.name}"
        template = getattr(defaults, f.name)
        if dataclasses.is_dataclass(template):
            sub_prefix = f"{key}."
            if any(k.startswith(sub_prefix) for k in kv):
                kwargs[f.name] = kv_to_dataclass(type(template), kv, sub_prefix)
                consumed.update(k for k in kv if k.startswith(sub_prefix))
        elif key in kv:
            kwargs[f.name] = _coerce(kv[key], template)
            consumed.add(key)
    if prefix == "":
        unknown = set(kv) - consumed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cls(**kwargs)


def load_config(cls, path, prefix: str = ""):
    with open(path) as fh:
        return kv_to_dataclass(cls, parse_kv(fh.read()), prefix=prefix)


def save_config(obj, path):
    import os
    import tempfile
    body = serialize_kv(dataclass_to_kv(obj))
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".cfg-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
