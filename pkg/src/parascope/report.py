"""Markdown and CSV rendering of result rows."""

from __future__ import annotations

import csv
import io
import math
from typing import Any, Iterable, Sequence

DAY = 86400.0
YEAR_DAYS = 365.0


def format_duration(seconds: float) -> str:
    """Days below one year, years above, three significant digits."""
    if seconds is None or math.isnan(seconds):
        return ""
    if math.isinf(seconds):
        return "inf"
    days = seconds / DAY
    if days < YEAR_DAYS:
        return f"{days:.3g} d"
    return f"{days / YEAR_DAYS:.3g} y"


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if value == int(value) and abs(value) < 1e9:
            return str(int(value))
        return f"{value:.4g}"
    return str(value)


def markdown_table(rows: Sequence[dict[str, Any]], columns: Sequence[str] | None = None) -> str:
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    cells = [[format_value(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = [
        "| " + " | ".join(c.ljust(w) for c, w in zip(columns, widths)) + " |",
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    for row in cells:
        lines.append("| " + " | ".join(v.ljust(w) for v, w in zip(row, widths)) + " |")
    return "\n".join(lines) + "\n"


def csv_table(rows: Iterable[dict[str, Any]], columns: Sequence[str] | None = None) -> str:
    rows = list(rows)
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns])
    return buf.getvalue()


def render(rows: Sequence[dict[str, Any]], fmt: str, columns: Sequence[str] | None = None) -> str:
    if fmt == "csv":
        return csv_table(rows, columns)
    if fmt == "markdown":
        return markdown_table(rows, columns)
    raise ValueError(f"unknown format {fmt!r}")
