"""Data ingestion and deterministic result writers."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import DataFormatError

HPV_HEADER = ["pop_id", "ncases", "person_years", "ninf", "npart"]
HPV_SHA256 = "b0174578f9d6d01d3555c5f83f96a93be6b426e78b64cbfff407b5664ec36797"
# person-years are expressed in thousands inside the model
T_SCALE = 1e-3


@dataclass(frozen=True)
class HpvRecord:
    pop_id: str
    cases: int
    person_years: float
    positives: int
    sample_size: int


def bundled_hpv_path():
    return resources.files("smi") / "data" / "hpv.csv"


def _int(text):
    v = float(text)
    if v != math.floor(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def load_hpv(path=None):
    """Read an HPV CSV (header ``pop_id,ncases,person_years,ninf,npart``).

    Every malformed row is reported in the raised :class:`DataFormatError`.
    """
    if path is None:
        text = bundled_hpv_path().read_text()
        source = "bundled hpv.csv"
    else:
        text = Path(path).read_text()
        source = str(path)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataFormatError(f"{source}: empty file") from None
    if header != HPV_HEADER:
        raise DataFormatError(f"{source}: expected header {','.join(HPV_HEADER)}",
                              rows=[(1, f"got {','.join(header)}")])
    records, errors = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HPV_HEADER):
            errors.append((lineno, f"expected {len(HPV_HEADER)} fields, got {len(row)}"))
            continue
        try:
            pop, y, t, z, n = row[0].strip(), _int(row[1]), float(row[2]), _int(row[3]), _int(row[4])
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        problems = []
        if y < 0:
            problems.append("ncases < 0")
        if not (t > 0 and math.isfinite(t)):
            problems.append("person_years must be positive")
        if n < 1:
            problems.append("npart must be >= 1")
        if not 0 <= z <= n:
            problems.append("need 0 <= ninf <= npart")
        if problems:
            errors.append((lineno, "; ".join(problems)))
            continue
        records.append(HpvRecord(pop, y, t, z, n))
    if errors:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in errors)
        raise DataFormatError(f"{source}: {len(errors)} malformed row(s): {detail}", rows=errors)
    if not records:
        raise DataFormatError(f"{source}: no data rows")
    return records


def hpv_arrays(records, t_scale=T_SCALE):
    """Y rows (cases, T, pop) and Z rows (positives, N, pop) for :func:`smi.core.hpv_model`."""
    idx = np.arange(len(records), dtype=float)
    Y = np.column_stack([[r.cases for r in records], [r.person_years * t_scale for r in records], idx])
    Z = np.column_stack([[r.positives for r in records], [r.sample_size for r in records], idx])
    return Y.astype(float), Z.astype(float)


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt(v) -> str:
    """Round-trip float formatting used in every CSV."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
