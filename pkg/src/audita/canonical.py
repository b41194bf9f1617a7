"""Canonical JSON serialization.

Digests over serialized records must be reproducible byte for byte, so every
document this package writes goes through :func:`canonical_bytes`:

- UTF-8, no ASCII escaping
- object keys sorted lexicographically
- no insignificant whitespace
- integers only; floats, NaN and Infinity are rejected
- byte strings are written as lowercase hex by the callers
"""

from __future__ import annotations

import json
from typing import Any


class CanonicalError(ValueError):
    """Raised when a value has no canonical serialization."""


def _check(obj: Any, path: str = "$") -> None:
    if obj is None or isinstance(obj, (bool, int, str)):
        return
    if isinstance(obj, float):
        raise CanonicalError(f"float at {path} is not canonical; use an integer or string")
    if isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(obj, dict):
        for key, value in obj.items():
            if not isinstance(key, str):
                raise CanonicalError(f"non-string key {key!r} at {path}")
            _check(value, f"{path}.{key}")
        return
    raise CanonicalError(f"unsupported type {type(obj).__name__} at {path}")


def canonical_dumps(obj: Any) -> str:
    """Return the canonical JSON text for ``obj``."""
    _check(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def _reject_float(text: str) -> Any:
    raise CanonicalError(f"float literal {text} is not allowed")


def canonical_loads(data: str | bytes) -> Any:
    """Parse JSON, rejecting float literals and non-finite constants."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data, parse_float=_reject_float, parse_constant=_reject_float)
