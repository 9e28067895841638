"""Location CSV and result JSON formats (see docs/formats.md)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from geostat.covariance import MaternParams
from geostat.errors import GeostatError
from geostat.geometry import LocationSet, Metric


class FormatError(GeostatError, ValueError):
    """Malformed input file; the message carries file and line number."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def read_locations_csv(path, metric: Metric | None = None, require_z: bool = False):
    """Read a ``x,y[,z]`` CSV.

    Returns
    -------
    locations : LocationSet
    z : ndarray or None
        Measurements when the file has a ``z`` column.
    """
    path = Path(path)
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header not in (["x", "y"], ["x", "y", "z"]):
            raise FormatError(f"{path}:1: expected header 'x,y' or 'x,y,z', got {','.join(header)!r}")
        if require_z and len(header) != 3:
            raise FormatError(f"{path}:1: a 'z' measurement column is required")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(f"{path}:{lineno}: non-finite value in {row!r}")
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.array(rows)
    try:
        locs = LocationSet(data[:, :2], metric)
    except GeostatError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    z = data[:, 2].copy() if data.shape[1] == 3 else None
    return locs, z


def write_locations_csv(path, locations: LocationSet, z=None, extra: dict | None = None) -> None:
    """Write locations (and optionally measurements / extra columns) with
    17 significant digits, so that reading back is value-identical."""
    cols = {"x": locations.points[:, 0], "y": locations.points[:, 1]}
    if z is not None:
        cols["z"] = np.asarray(z, dtype=float).reshape(-1)
    for name, values in (extra or {}).items():
        cols[name] = np.asarray(values, dtype=float).reshape(-1)
    n = locations.n
    for name, values in cols.items():
        if values.shape[0] != n:
            raise ValueError(f"column {name!r} has {values.shape[0]} rows, expected {n}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(cols))
        for i in range(n):
            writer.writerow([_fmt(c[i]) for c in cols.values()])


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, allow_nan=True)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def read_theta(spec: str, nugget: float | None = None) -> MaternParams:
    """Parse ``"t1,t2,t3"`` or a JSON file holding ``theta_hat`` / ``theta``."""
    p = Path(spec)
    if p.suffix == ".json" or p.exists():
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{p}: cannot read parameter JSON: {exc}") from exc
        vals = obj.get("theta_hat", obj.get("theta"))
        if vals is None or len(vals) != 3:
            raise FormatError(f"{p}: expected a 3-element 'theta_hat' or 'theta' array")
        nug = obj.get("nugget", 0.0) if nugget is None else nugget
        return MaternParams(*map(float, vals), nugget=float(nug))
    return MaternParams(*parse_triple(spec, "theta"), nugget=nugget or 0.0)


def parse_triple(text: str, what: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise FormatError(f"{what}: expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise FormatError(f"{what}: expected three comma-separated numbers, got {text!r}")
    return vals
