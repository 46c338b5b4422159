"""Runtime values shared by tools, the expression language and the executor.

Values are plain Python objects: ``float`` (Number), ``str`` (Text),
``bool`` (Boolean), ``list`` (List). Graph-construction tools additionally
accept ``dict`` arguments. JSON integers are widened to ``float`` on entry.
"""

from __future__ import annotations

import math
from typing import Any

Value = Any


def normalize(value: Any) -> Any:
    """Widen ints to floats recursively; leave bools, text and None alone."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    return value


def tag_of(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "text"
    if isinstance(value, (list, tuple)):
        return "list"
    if isinstance(value, dict):
        return "object"
    return type(value).__name__


def number_text(x: float) -> str:
    if math.isfinite(x) and float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def canonical_text(value: Any) -> str:
    """Deterministic text form used for exact-match answer comparison.

    >>> canonical_text(6.0)
    '6'
    >>> canonical_text([1.0, 2.5])
    '[1, 2.5]'
    >>> canonical_text(" ok ")
    'ok'
    """
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return number_text(value)
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(canonical_text(v) for v in value) + "]"
    if isinstance(value, dict):
        inner = ", ".join(f"{k}: {canonical_text(v)}" for k, v in sorted(value.items()))
        return "{" + inner + "}"
    if value is None:
        return "null"
    return str(value).strip()
