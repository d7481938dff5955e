"""Small helpers for aligned text tables and JSON-safe values."""

from __future__ import annotations

import math


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(cells):
        return "  ".join(c.rjust(w) for c, w in zip(cells, widths))

    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def json_safe(obj):
    """Recursively replace NaN and infinities with None for strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def fmt3(x: float) -> str:
    """Three decimals, or a dot for undefined values."""
    return f"{x:.3f}" if isinstance(x, (int, float)) and math.isfinite(x) else "."


def fmtp(p) -> str:
    """Three significant figures for p-values."""
    if p is None or (isinstance(p, float) and not math.isfinite(p)):
        return "."
    return f"{p:.3g}"
