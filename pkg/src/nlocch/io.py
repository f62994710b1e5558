"""On-disk formats: field snapshots, trajectory indexes and sweep reports.

Snapshot files start with one ASCII header line::

    NLOCCH-FIELD v1 dim=2 points=128,128 extent=1.0,1.0

followed by the nodal values as little-endian float64 in row-major order.
Floats in headers and CSV files are written with ``repr`` so every value
reads back bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
import re
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import Field, Grid
from .lab import COLUMNS, ConvergenceReport, RateFit
from .solver_local import LocalState, Trajectory
from .solver_nonlocal import NonlocalState

MAGIC = "NLOCCH-FIELD v1"
_HEADER = re.compile(r"^NLOCCH-FIELD v1 dim=(\d+) points=([\d,]+) extent=(\S+)$")
_DTYPE = np.dtype("<f8")
STATE_FIELDS = ("phi", "mu", "sigma")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# ------------------------------------------------------------------ snapshots


def encode_field(field: Field) -> bytes:
    g = field.grid
    header = (
        f"{MAGIC} dim={g.dim} points={','.join(str(p) for p in g.points)} "
        f"extent={','.join(repr(float(e)) for e in g.extents)}\n"
    )
    return header.encode("ascii") + np.ascontiguousarray(field.values, dtype=_DTYPE).tobytes(order="C")


def decode_field(data: bytes) -> Field:
    end = data.find(b"\n")
    if end < 0:
        raise FormatError("missing header line")
    m = _HEADER.match(data[:end].decode("ascii", errors="replace"))
    if not m:
        raise FormatError(f"bad header {data[:end][:80]!r}")
    dim = int(m.group(1))
    points = tuple(int(p) for p in m.group(2).split(","))
    extents = tuple(float(e) for e in m.group(3).split(","))
    if len(points) != dim or len(extents) != dim:
        raise FormatError("header dim does not match points/extent")
    payload = data[end + 1 :]
    n = int(np.prod(points))
    if len(payload) != n * _DTYPE.itemsize:
        raise FormatError(f"expected {n} float64 values, found {len(payload)} bytes")
    values = np.frombuffer(payload, dtype=_DTYPE).reshape(points).astype(float)
    return Field(Grid(points, extents), values)


def write_field(path, field: Field) -> Path:
    path = Path(path)
    path.write_bytes(encode_field(field))
    return path


def read_field(path) -> Field:
    return decode_field(Path(path).read_bytes())


# --------------------------------------------------------------- trajectories


def write_trajectory(directory, traj: Trajectory) -> Path:
    """Write every snapshot plus ``index.csv`` (time and file name per field) and ``info.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "index.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + STATE_FIELDS)
        for i, state in enumerate(traj):
            names = []
            for name in STATE_FIELDS:
                fname = f"{name}_{i:06d}.nlf"
                write_field(directory / fname, getattr(state, name))
                names.append(fname)
            w.writerow([repr(float(state.t))] + names)
    info = dict(traj.info)
    (directory / "info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return directory / "index.csv"


def read_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    info_path = directory / "info.json"
    info = json.loads(info_path.read_text(encoding="utf-8")) if info_path.exists() else {}
    eps = info.get("epsilon")
    traj = Trajectory(info=info)
    with open(directory / "index.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            t = float(row["t"])
            phi, mu, sigma = (read_field(directory / row[k]) for k in STATE_FIELDS)
            if eps is None:
                traj.states.append(LocalState(t, phi, mu, sigma))
            else:
                traj.states.append(NonlocalState(t, phi, mu, sigma, float(eps)))
    return traj


# -------------------------------------------------------------------- reports


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def report_to_dict(report: ConvergenceReport, config: Optional[dict] = None) -> dict:
    return {
        "columns": list(COLUMNS),
        "config": config or {},
        "rows": report.rows,
        "fits": {k: _fit_dict(v) for k, v in report.fits.items()},
        "flags": report.flags,
        "metadata": report.metadata,
    }


def _fit_dict(fit: RateFit) -> dict:
    return {
        "slope": fit.slope,
        "prefactor": fit.prefactor,
        "residual": fit.residual,
        "n_points": fit.n_points,
        "excluded": list(fit.excluded),
    }


def write_report_csv(path, report: ConvergenceReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in report.rows:
            w.writerow([_cell(row.get(c)) for c in COLUMNS])
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise FormatError(f"unexpected report columns {reader.fieldnames}")
        return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in reader]


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_report_json(path, report: ConvergenceReport, config: Optional[dict] = None) -> Path:
    path = Path(path)
    path.write_text(dumps_json(report_to_dict(report, config)), encoding="utf-8")
    return path


def read_report_json(path) -> tuple[ConvergenceReport, dict]:
    """Return the report and the embedded resolved config."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    fits = {
        k: RateFit(v["slope"], v["prefactor"], v["residual"], v["n_points"], tuple(v["excluded"]))
        for k, v in data["fits"].items()
    }
    report = ConvergenceReport(rows=data["rows"], fits=fits, flags=data["flags"], metadata=data["metadata"])
    return report, data["config"]


def write_report(directory, report: ConvergenceReport, formats=("csv", "json"), config=None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    if "csv" in formats:
        out.append(write_report_csv(directory / "report.csv", report))
    if "json" in formats:
        out.append(write_report_json(directory / "report.json", report, config))
    return out


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
