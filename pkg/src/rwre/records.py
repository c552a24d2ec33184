"""Records and summary files.

Records are columnar text: ``#``-prefixed ``key=value`` header lines, a
``# columns=...`` line, then one whitespace-separated row per record.
Summaries are flat ``key=value`` lines. Floats use the shortest repr that
round-trips, so reruns produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FORMAT = "rwre-records v1"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text[:1] in "{[":
        try:
            return json.loads(text)
        except ValueError:
            pass
    return text


def write_records(path: str | Path, header: dict, rows: list[dict], truncated: str | None = None) -> None:
    cols = list(rows[0]) if rows else []
    lines = [f"# {FORMAT}"]
    lines += [f"# {k}={fmt(v)}" for k, v in header.items()]
    lines.append("# columns=" + " ".join(cols))
    for r in rows:
        lines.append(" ".join(fmt(r[c]) for c in cols))
    if truncated is not None:
        lines.append(f"# truncated={truncated}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    header: dict = {}
    cols: list[str] = []
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                if k == "columns":
                    cols = v.split()
                else:
                    header[k] = parse_value(v)
            continue
        if line.strip():
            rows.append(dict(zip(cols, (parse_value(x) for x in line.split()))))
    return header, rows


def write_summary(path: str | Path, summary: dict) -> None:
    Path(path).write_text("".join(f"{k}={fmt(v)}\n" for k, v in summary.items()))


def read_summary(path: str | Path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = parse_value(v)
    return out
