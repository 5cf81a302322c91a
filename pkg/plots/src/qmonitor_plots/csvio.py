"""Readers for the simulation CLI's public file contract.

The CLI writes CSVs whose header comments start with '#', followed by
one column-name row and float rows (empty cells mean "not available",
string cells label categorical columns).  Runs also carry a JSON
manifest with the config, tags, and output hashes.  Everything here is
read-only.
"""

import json
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError


def read_table(path):
    """Parse one CLI CSV into (comment_lines, {name: column_array}).

    Numeric columns come back as float arrays with NaN for empty
    cells; columns with non-numeric cells stay as object arrays of
    stripped strings.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such input CSV: {path}")
    comments, header, rows = [], None, []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            comments.append(line.lstrip("#").strip())
            continue
        cells = line.split(",")
        if header is None:
            header = [c.strip() for c in cells]
            continue
        if len(cells) != len(header):
            raise DataError(
                f"{path}: data row has {len(cells)} cells but the header "
                f"names {len(header)} columns")
        rows.append(cells)
    if header is None:
        raise DataError(f"{path} has no header row")
    if not rows:
        raise DataError(f"{path} has no data rows")
    columns = {}
    for j, name in enumerate(header):
        raw = [r[j].strip() for r in rows]
        try:
            columns[name] = np.array(
                [float(v) if v else float("nan") for v in raw])
        except ValueError:
            columns[name] = np.array(raw, dtype=object)
    return comments, columns


def require_columns(columns, needed, path):
    missing = [n for n in needed if n not in columns]
    if missing:
        raise SchemaError(
            f"{path} lacks required column(s) "
            + ", ".join(f"'{n}'" for n in missing)
            + "; header has: " + ", ".join(columns))


def read_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such manifest: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"{path} is not valid JSON: {err}") from None


def manifest_param(manifest, key, path="manifest"):
    """Fetch one numeric parameter from a run manifest."""
    params = manifest.get("config", {}).get("params", {})
    if key not in params:
        raise SchemaError(f"{path} lacks parameter '{key}' under "
                          "config.params")
    try:
        return float(params[key])
    except (TypeError, ValueError):
        raise SchemaError(
            f"{path}: parameter '{key}' is not numeric: "
            f"{params[key]!r}") from None
