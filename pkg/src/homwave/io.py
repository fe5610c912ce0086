"""CSV and JSON readers/writers with atomic replacement."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .space import MetricMeasureSpace
from .wavelet import CoeffSeq, WaveletBasis

__all__ = [
    "FormatError",
    "atomic_write",
    "write_json",
    "write_csv",
    "read_function",
    "function_rows",
    "read_coefficients",
    "coefficient_rows",
    "to_jsonable",
]


class FormatError(ValueError):
    pass


def atomic_write(path, text: str) -> Path:
    """Write to a temporary sibling and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps(obj))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))


def _read_rows(source, header):
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        head = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty CSV") from None
    if head != list(header):
        raise FormatError(f"expected header {','.join(header)}, got {','.join(head)}")
    return [r for r in reader if r]


def function_rows(S: MetricMeasureSpace, f):
    return [(pid, float(v)) for pid, v in zip(S.ids, S.function(f))]


def read_function(S: MetricMeasureSpace, source) -> np.ndarray:
    """Function CSV ``point_id,value``; every point must appear exactly once."""
    rows = _read_rows(source, ("point_id", "value"))
    out = np.full(S.n, np.nan)
    for r in rows:
        if len(r) != 2:
            raise FormatError(f"bad row {r!r}")
        i = S.index.get(r[0])
        if i is None:
            raise FormatError(f"unknown point id {r[0]!r}")
        if not np.isnan(out[i]):
            raise FormatError(f"duplicate point id {r[0]!r}")
        try:
            out[i] = float(r[1])
        except ValueError:
            raise FormatError(f"bad value {r[1]!r} for {r[0]!r}") from None
    if np.isnan(out).any():
        missing = [S.ids[i] for i in np.flatnonzero(np.isnan(out))]
        raise FormatError(f"missing values for {missing[:5]}")
    return S.function(out)


def coefficient_rows(c: CoeffSeq):
    return [(kind, level, beta, float(v)) for kind, level, beta, v in c.rows()]


def read_coefficients(W: WaveletBasis, source) -> CoeffSeq:
    rows = _read_rows(source, ("kind", "level", "beta_id", "value"))
    try:
        parsed = [(r[0], int(r[1]), r[2], float(r[3])) for r in rows]
    except (ValueError, IndexError) as e:
        raise FormatError(f"bad coefficient row: {e}") from None
    return CoeffSeq.from_rows(W, parsed)
