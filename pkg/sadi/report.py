"""
CSV and markdown emitters for evaluation tables.

Pixel table: one row per configuration with MSE and VE.
Distance table: one row per configuration, each distance metric split into
Depth and Surface columns.

Every file starts with the flags that produced it, one ``key=value`` per
comment line.
"""

import csv
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .constants import DISTANCE_METRICS, DISTANCE_TITLES
from .metrics import MetricReport

UNDEFINED = "undefined"

Row = Tuple[str, MetricReport]


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return UNDEFINED
    if value != 0 and abs(value) < 10 ** -(digits - 1):
        return f"{value:.{digits}g}"
    return f"{value:.{digits}f}"


def _flatten(header: Dict[str, Any], prefix: str = "") -> List[str]:
    lines = []
    for key, value in header.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            lines.extend(_flatten(value, f"{name}."))
        else:
            lines.append(f"{name}={value}")
    return lines


def pixel_table(rows: Sequence[Row]) -> Tuple[List[str], List[List[str]]]:
    columns = ["", "MSE", "VE"]
    body = [[name, _fmt(r.mse, 3), _fmt(r.ve, 4)] for name, r in rows]
    return columns, body


def distance_table(rows: Sequence[Row]) -> Tuple[List[str], List[List[str]]]:
    columns = [""]
    for key in DISTANCE_METRICS:
        columns += [f"{DISTANCE_TITLES[key]} Depth", f"{DISTANCE_TITLES[key]} Surface"]
    body = []
    for name, r in rows:
        line = [name]
        for key in DISTANCE_METRICS:
            line += [_fmt(r.depth.get(key)), _fmt(r.surface.get(key))]
        body.append(line)
    return columns, body


def write_csv(path, columns: List[str], body: List[List[str]], header: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for line in _flatten(header or {}):
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["config" if not c else c for c in columns])
        writer.writerows(body)
    return path


def markdown(columns: List[str], body: List[List[str]], title: str = "",
             header: Optional[Dict[str, Any]] = None) -> str:
    out = []
    if title:
        out += [f"### {title}", ""]
    for line in _flatten(header or {}):
        out.append(f"<!-- {line} -->")
    if header:
        out.append("")
    out.append("| " + " | ".join(columns) + " |")
    out.append("|" + "|".join("---" for _ in columns) + "|")
    for row in body:
        out.append("| " + " | ".join(row) + " |")
    return "\n".join(out) + "\n"


def write_reports(out_dir, rows: Sequence[Row], header: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
    """Write pixel and distance tables as CSV and markdown into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for stem, title, builder in (
        ("pixel_errors", "Mean-Squared Error and Vectorial Error", pixel_table),
        ("distribution_distances", "Distribution distances (ground truth vs reconstruction)", distance_table),
    ):
        columns, body = builder(rows)
        paths[f"{stem}.csv"] = write_csv(out_dir / f"{stem}.csv", columns, body, header)
        md = out_dir / f"{stem}.md"
        md.write_text(markdown(columns, body, title, header), encoding="utf-8")
        paths[f"{stem}.md"] = md
    return paths
