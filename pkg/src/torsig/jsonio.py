"""Deterministic serialization: sorted keys, 17-significant-digit floats.

Identical payloads serialize to identical bytes on every run, which is
what the verify pipeline's reproducibility contract requires.
"""

from __future__ import annotations

import numpy as np


def _format_float(x):
    if x != x:
        raise ValueError("refusing to serialize NaN")
    if x in (float("inf"), float("-inf")):
        raise ValueError("refusing to serialize infinities")
    return format(float(x), ".17g")


def _encode(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(float(obj)))
    elif isinstance(obj, (complex, np.complexfloating)):
        out.append("[" + _format_float(obj.real) + ", " + _format_float(obj.imag) + "]")
    elif isinstance(obj, str):
        import json

        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r}")
            if not first:
                out.append(", ")
            first = False
            import json

            out.append(json.dumps(key, ensure_ascii=True))
            out.append(": ")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        out.append("[")
        for i, item in enumerate(seq):
            if i:
                out.append(", ")
            _encode(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    out = []
    _encode(obj, out)
    return "".join(out)


def write_json(path, obj):
    text = dumps(obj) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def write_csv(path, header, rows):
    """Rows of numbers/strings with 17-significant-digit float formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, (float, np.floating)):
                cells.append(_format_float(float(cell)))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text
