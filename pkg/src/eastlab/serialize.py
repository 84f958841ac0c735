"""Text output with every float written to 17 significant digits."""

from __future__ import annotations

import csv
import json
import math
from typing import Iterable, Sequence

import numpy as np

__all__ = ["format_value", "to_json", "write_csv"]


def _json_value(value, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}"
                 for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        seq = list(value)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _json_value(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json(value, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits; inf and nan as strings."""
    return _json_value(value, indent, 0) + "\n"


def format_value(value) -> str:
    """CSV cell text: floats to 17 significant digits, sites space-separated."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (np.integer, np.bool_)):
        return str(value.item())
    if isinstance(value, (tuple, list)):
        return " ".join(format_value(v) for v in value)
    return str(value)


def write_csv(fh, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a header line."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_value(v) for v in row])
