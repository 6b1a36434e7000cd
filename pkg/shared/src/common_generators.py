"""Markdown report generators for case runs."""
from __future__ import annotations

from typing import Iterable, List

import pandas as pd

from .common_metrics import MetricRecord


def format_number(value: float | int | None, digits: int = 4) -> str:
    if value is None:
        return "N/A"
    try:
        return f"{value:,.{digits}f}"
    except (TypeError, ValueError):
        return str(value)


def render_table_md(df: pd.DataFrame, digits: int = 4) -> str:
    """Pipe table; floats rounded to `digits`."""
    if df.empty:
        return "_no rows_"
    header = "| " + " | ".join(str(c) for c in df.columns) + " |"
    rule = "|" + "|".join("---" for _ in df.columns) + "|"
    rows = []
    for _, row in df.iterrows():
        cells = [format_number(v, digits) if isinstance(v, float) else str(v) for v in row.tolist()]
        rows.append("| " + " | ".join(cells) + " |")
    return "\n".join([header, rule, *rows])


def render_records_md(records: Iterable[MetricRecord]) -> List[str]:
    lines = []
    for r in records:
        op = "<=" if r.upper else ">="
        status = "pass" if r.passed else "FAIL"
        lines.append(f"- {r.name}: {format_number(r.value)} ({op} {r.tolerance:g}) {status}")
    return lines


def render_run_summary_md(
    case_name: str,
    headline: List[str],
    sections: dict[str, List[str]],
    limitations: List[str],
) -> str:
    lines = [
        f"# Run Summary: {case_name}",
        "",
        "## Headline Findings",
        *[f"- {h}" for h in headline],
        "",
    ]
    for title, body in sections.items():
        lines.extend([f"## {title}", *body, ""])
    lines.extend(["## Limitations", *[f"- {item}" for item in limitations], ""])
    return "\n".join(lines)
