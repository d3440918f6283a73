"""CSV loading and validation for experiment outputs."""

from __future__ import annotations

import csv
import math
from pathlib import Path


class FigureInputError(ValueError):
    """Missing file, missing column, or unusable (empty) input."""


def load_csv(path: Path, required: tuple[str, ...]) -> list[dict]:
    """Read a CSV into dicts, insisting on the required columns and at
    least one data row."""
    if not path.exists():
        raise FigureInputError(f"missing input file: {path}")
    with path.open() as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureInputError(
                f"{path}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise FigureInputError(f"{path}: no data rows")
    return rows


def fnum(row: dict, column: str) -> float:
    """Float cell value; blank cells become nan, 'inf' parses."""
    text = (row.get(column) or "").strip()
    if not text:
        return math.nan
    return float(text)


def parse_config_id(config_id: str) -> dict[str, float]:
    """Split 'a.b=1,c.d=2' sweep labels into {'a.b': 1.0, 'c.d': 2.0}."""
    out: dict[str, float] = {}
    if config_id in ("", "base"):
        return out
    for part in config_id.split(","):
        key, _, value = part.partition("=")
        try:
            out[key] = float(value)
        except ValueError:
            continue
    return out


def sweep_table(rows: list[dict], axes: tuple[str, ...]) -> list[dict]:
    """Summary rows annotated with parsed sweep-axis values; errors if an
    axis is absent from the config ids."""
    table = []
    for row in rows:
        params = parse_config_id(row["config_id"])
        missing = [a for a in axes if a not in params]
        if missing:
            raise FigureInputError(
                f"summary row {row['config_id']!r} lacks sweep axes "
                f"{', '.join(missing)}")
        entry = dict(row)
        entry.update(params)
        table.append(entry)
    return table
