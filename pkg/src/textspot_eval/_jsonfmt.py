"""Canonical JSON writer with fixed-precision floats.

``json.dumps`` cannot format floats to a fixed number of decimals, so this
writes the small subset of JSON the package emits by hand.
"""

from __future__ import annotations

import json
from typing import Any


class Fixed(float):
    """A float that serializes with a fixed number of decimals."""

    digits: int

    def __new__(cls, value: float, digits: int) -> "Fixed":
        obj = super().__new__(cls, value)
        obj.digits = digits
        return obj


def format_fixed(value: float, digits: int) -> str:
    text = f"{value:.{digits}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def dumps(obj: Any, float_digits: int | None = None) -> str:
    """Serialize with sorted keys and no insignificant whitespace.

    Plain floats use ``float_digits`` decimals when given, else ``repr``.
    """
    parts: list[str] = []
    _write(obj, parts, float_digits)
    return "".join(parts)


def _write(obj: Any, out: list[str], float_digits: int | None) -> None:
    if obj is None or obj is True or obj is False or isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, Fixed):
        out.append(format_fixed(obj, obj.digits))
    elif isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            raise ValueError(f"cannot serialize non-finite float {obj}")
        out.append(format_fixed(obj, float_digits) if float_digits is not None else repr(obj))
    elif isinstance(obj, int):
        out.append(str(int(obj)))
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj, key=str)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key), ensure_ascii=False))
            out.append(":")
            _write(obj[key], out, float_digits)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write(item, out, float_digits)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
