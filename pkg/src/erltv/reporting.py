"""CSV and summary writers shared by every CLI artifact.

Each file starts with ``# key: value`` comment lines carrying at least the
resolved-config hash and the seed. Floats are written with ``repr`` so a
value read back is bit-identical; files use ``,`` as delimiter, ``.`` as
decimal separator and LF line endings. No timestamps or host data are
written, so equal inputs give equal bytes.
"""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def format_value(value) -> str:
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
    if value is None:
        return ""
    return str(value)


def _header(fh, header: Mapping) -> None:
    for key, value in header.items():
        fh.write(f"# {key}: {format_value(value)}\n")


def write_csv(path, header: Mapping, fieldnames: list, rows: Iterable[Mapping]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _header(fh, header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([format_value(row[k]) for k in fieldnames])
    return path


def write_summary(path, header: Mapping, summary: Mapping) -> Path:
    """Human-readable ``key,value`` block, still valid CSV."""
    return write_csv(path, header, ["key", "value"],
                     ({"key": k, "value": v} for k, v in summary.items()))


def read_csv_body(path) -> list[list[str]]:
    """Rows of a written CSV without its comment header (header row included)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.reader(lines))
