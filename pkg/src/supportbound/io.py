"""Text formats: matrices, JSON records, JSON-lines and flat CSV tables."""

import csv
import io
import json
import math

import numpy as np

from .errors import DimensionMismatch


def format_matrix(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in A]
    return "\n".join(lines) + "\n"


def write_matrix(path, A):
    """Header ``rows cols`` then one row per line, 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(format_matrix(A))


def read_matrix(path):
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise DimensionMismatch(f"{path}: missing 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = tokens[2:]
    if len(values) != rows * cols:
        raise DimensionMismatch(f"{path}: header says {rows}x{cols} but found {len(values)} values")
    return np.array([float(v) for v in values]).reshape(rows, cols)


def read_vector(path):
    """A vector stored as a single-row or single-column matrix."""
    A = read_matrix(path)
    if min(A.shape) != 1:
        raise DimensionMismatch(f"{path}: expected a vector, got a {A.shape[0]}x{A.shape[1]} matrix")
    return A.ravel()


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("+inf" if value > 0 else "-inf")
    return value


def dumps(record):
    """JSON text with non-finite floats spelled ``"+inf"``, ``"-inf"``, ``"nan"``."""
    return json.dumps(_clean(record), indent=2)


def dumps_lines(records):
    return "".join(json.dumps(_clean(r)) + "\n" for r in records)


def _flatten(record, prefix=""):
    flat = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        elif isinstance(value, (list, tuple)):
            flat[name] = ";".join(_cell(v) for v in value)
        else:
            flat[name] = _cell(value)
    return flat


def _cell(value):
    value = _clean(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_csv(records):
    """Flat table: nested keys joined with dots, lists joined with ';'."""
    rows = [_flatten(r) for r in records]
    header = []
    for row in rows:
        header += [k for k in row if k not in header]
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()
