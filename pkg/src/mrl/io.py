"""CSV and JSON artifact writers; every artifact carries the config hash and code version."""

import csv
import json
import math
import os

import numpy as np

VERSION = "0.1.0"


def header_line(cfg_hash):
    return f"# config_sha256={cfg_hash} code_version={VERSION}"


def fmt(value):
    """Round-trip exact text for numbers; everything else via str."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_csv(path, rows, columns, cfg_hash):
    """RFC-4180 CSV (UTF-8, '.' decimal) preceded by a '#' header comment line."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header_line(cfg_hash) + "\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c, "")) for c in columns])


def read_csv(path):
    """(header comment, rows as dicts of strings)."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        return first, list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, payload, cfg_hash):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = {"config_sha256": cfg_hash, "code_version": VERSION}
    doc.update(_jsonable(payload))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
