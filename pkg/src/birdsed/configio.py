"""Flat key=value config files.

One `key = value` pair per line; blank lines and #-comments ignored. Values
keep their dataclass field types: numbers, booleans, strings, and 2-tuples of
numbers written as "low,high". Dataclass round trips go through
`dataclass_to_flat` / `dataclass_from_flat`.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Mapping, TypeVar, get_args, get_origin

T = TypeVar("T")


def load_flat(path: str | Path) -> dict[str, str]:
    """Parse a flat key=value file into a string map."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{Path(path).name}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def dump_flat(mapping: Mapping[str, Any], path: str | Path) -> None:
    lines = [f"{k} = {_format_value(v)}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_value(v: Any) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, frozenset) or isinstance(v, set):
        return ",".join(sorted(str(x) for x in v))
    return repr(v) if isinstance(v, float) else str(v)


def dataclass_to_flat(obj: Any, prefix: str = "") -> dict[str, str]:
    """Flatten a dataclass instance to string key=value pairs."""
    out: dict[str, str] = {}
    for f in dataclasses.fields(obj):
        out[prefix + f.name] = _format_value(getattr(obj, f.name))
    return out


def _parse_value(text: str, annotation: Any) -> Any:
    origin = get_origin(annotation)
    if origin is tuple:
        parts = [p.strip() for p in text.split(",")]
        args = get_args(annotation)
        elem_types = args[: len(parts)] if args and args[-1] is not Ellipsis else [args[0]] * len(parts)
        return tuple(_parse_value(p, t) for p, t in zip(parts, elem_types))
    if origin is frozenset or annotation is frozenset:
        return frozenset(p.strip() for p in text.split(",") if p.strip())
    if annotation is float:
        return float(text)
    if annotation is int:
        return int(text)
    if annotation is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return text


def dataclass_from_flat(cls: type[T], mapping: Mapping[str, str], prefix: str = "") -> T:
    """Build a dataclass from flat string pairs; absent keys keep defaults.

    Unknown prefixed keys raise so config typos fail loudly.
    """
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    hints = _resolve_types(cls)
    kwargs: dict[str, Any] = {}
    known = set(field_types)
    for key, raw in mapping.items():
        if prefix:
            if not key.startswith(prefix):
                continue
            name = key[len(prefix):]
        else:
            name = key
        if name not in known:
            raise ValueError(f"unknown config key {key!r} for {cls.__name__}")
        kwargs[name] = _parse_value(raw, hints[name])
    return cls(**kwargs)


def _resolve_types(cls: type) -> dict[str, Any]:
    import typing

    return typing.get_type_hints(cls)
