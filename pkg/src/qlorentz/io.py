"""Text-headed columnar tables and array checkpoints with a JSON sidecar.

Columnar layout::

    # format: <kind>
    # <key>: <json value>
    # columns: c1 c2 ...
    <whitespace separated rows>

Every number is written with repr-level precision so a write/read cycle is
lossless.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def write_table(path, kind: str, meta: dict, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(columns):
        raise FormatError(f"{len(columns)} columns declared, rows have {rows.shape[1]}")
    with open(path, "w") as fh:
        fh.write(f"# format: {kind}\n")
        for k, v in meta.items():
            fh.write(f"# {k}: {json.dumps(v)}\n")
        fh.write("# columns: " + " ".join(columns) + "\n")
        for row in rows if rows.size else []:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    return path


def read_table(path, kind: str | None = None):
    """Returns (meta, columns, rows)."""
    meta, columns, data = {}, None, []
    found_kind = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(":")
                key, val = key.strip(), val.strip()
                if key == "format":
                    found_kind = val
                elif key == "columns":
                    columns = val.split()
                else:
                    try:
                        meta[key] = json.loads(val)
                    except json.JSONDecodeError as exc:
                        raise FormatError(f"{path}: bad header value for {key!r}") from exc
                continue
            try:
                data.append([float(x) for x in line.split()])
            except ValueError as exc:
                raise FormatError(f"{path}: non-numeric row {line[:40]!r}") from exc
    if kind is not None and found_kind != kind:
        raise FormatError(f"{path}: expected format {kind!r}, found {found_kind!r}")
    if columns is None:
        raise FormatError(f"{path}: missing columns header")
    if any(len(r) != len(columns) for r in data):
        raise FormatError(f"{path}: row length differs from the {len(columns)} declared columns")
    rows = np.array(data, dtype=float).reshape(-1, len(columns))
    return meta, columns, rows


def save_array(path, array, meta: dict) -> Path:
    """Binary .npy dump plus a ``.json`` sidecar with the metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path.with_suffix(".npy"), np.asarray(array))
    side = dict(meta)
    side["shape"] = list(np.shape(array))
    side["dtype"] = str(np.asarray(array).dtype)
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path.with_suffix(".npy")


def load_array(path):
    path = Path(path)
    arr = np.load(path.with_suffix(".npy"))
    meta = json.loads(path.with_suffix(".json").read_text())
    if list(arr.shape) != meta.get("shape", list(arr.shape)):
        raise FormatError(f"{path}: array shape {arr.shape} disagrees with sidecar")
    return arr, meta
