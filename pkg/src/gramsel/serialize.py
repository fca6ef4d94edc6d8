"""Deterministic JSON emission.

Floats are printed with 17 significant digits so repeated runs produce
byte-identical output and every value round-trips exactly. Negative
infinity (the uncontrollable-metric sentinel) is emitted as the string
"-inf" to keep the output strict JSON.
"""

from __future__ import annotations

import math

import numpy as np


def format_float(x: float) -> str:
    if math.isinf(x):
        return '"-inf"' if x < 0 else '"inf"'
    if math.isnan(x):
        return '"nan"'
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _encode(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(_quote(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(_quote(str(k)))
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        out.append("[")
        for i, v in enumerate(seq):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _quote(s: str) -> str:
    body = "".join(_ESCAPES.get(ch, ch) if ord(ch) >= 0x20 else f"\\u{ord(ch):04x}"
                   for ch in s)
    return f'"{body}"'


def dumps(obj) -> str:
    out: list[str] = []
    _encode(obj, out)
    out.append("\n")
    return "".join(out)


def parse_float(v) -> float:
    """Inverse of format_float for values read back from our JSON."""
    if v == "-inf":
        return float("-inf")
    if v == "inf":
        return float("inf")
    if v == "nan":
        return float("nan")
    return float(v)
