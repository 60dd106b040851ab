"""Deterministic CSV / JSON / text writers.

Every file starts with (or contains) the schema tag and the config hash.
Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

FORMATS = ("csv", "json", "text")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_atomic(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(rows, columns, schema: str, config_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={schema}\n# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _cell(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return "" if v is None else v


def json_text(payload: dict, schema: str, config_hash: str) -> str:
    doc = {"schema": schema, "config_hash": config_hash}
    doc.update(_plain(payload))
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def table_text(rows, columns, schema: str, config_hash: str, title: str = "") -> str:
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append([_short(r.get(c)) for c in columns])
    widths = [max(len(row[k]) for row in cells) for k in range(len(columns))]
    lines = [f"# schema={schema}  config_hash={config_hash}"]
    if title:
        lines.append(title)
    for row in cells:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def kv_text(payload: dict, schema: str, config_hash: str) -> str:
    """Aligned ``key  value`` listing of the scalar entries of ``payload``."""
    flat = [(k, v) for k, v in sorted(_plain(payload).items()) if not isinstance(v, (dict, list))]
    width = max((len(k) for k, _ in flat), default=0)
    lines = [f"# schema={schema}  config_hash={config_hash}"]
    lines += [f"{k.ljust(width)}  {_short(v)}" for k, v in flat]
    return "\n".join(lines) + "\n"


def _short(v):
    v = _plain(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ",".join(_short(x) for x in v)
    return "" if v is None else str(v)


def write_table(stem: Path, rows, columns, formats, schema, config_hash, payload=None, title=""):
    """Write tabular data in each requested format; returns the paths."""
    rows = list(rows)
    out = []
    for fmt in formats:
        if fmt == "csv":
            out.append(write_atomic(stem.with_suffix(".csv"), csv_text(rows, columns, schema, config_hash)))
        elif fmt == "json":
            body = {"columns": list(columns), "rows": rows}
            body.update(payload or {})
            out.append(write_atomic(stem.with_suffix(".json"), json_text(body, schema, config_hash)))
        elif fmt == "text":
            out.append(write_atomic(stem.with_suffix(".txt"), table_text(rows, columns, schema, config_hash, title)))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return out


def write_record(stem: Path, payload: dict, formats, schema, config_hash):
    """Write a single report object as JSON and/or aligned text."""
    out = []
    for fmt in formats:
        if fmt == "json":
            out.append(write_atomic(stem.with_suffix(".json"), json_text(payload, schema, config_hash)))
        elif fmt in ("text", "csv"):
            # a record has no natural column layout; csv falls back to key,value pairs
            if fmt == "text":
                out.append(write_atomic(stem.with_suffix(".txt"), kv_text(payload, schema, config_hash)))
            else:
                rows = [{"key": k, "value": v} for k, v in sorted(_plain(payload).items()) if not isinstance(v, (dict, list))]
                out.append(write_atomic(stem.with_suffix(".csv"), csv_text(rows, ["key", "value"], schema, config_hash)))
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return out
