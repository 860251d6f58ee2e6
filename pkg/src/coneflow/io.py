"""CSV and JSON serialization of profiles, flows, sequences and reports.

CSVs are RFC-4180 with a header row and floats written as ``%.17g`` so
values round-trip exactly. JSON is UTF-8 with sorted keys; NaN and inf
become null. Nothing written here depends on the wall clock.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .metric import CurvatureProfile, Profile, RadialGrid
from .solver import FlowResult
from .truncation import TruncationSequence

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_csv(path, header, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple:
    """Return (header, dict of float arrays keyed by column name)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    data = data.reshape(-1, len(header))
    return header, {name: data[:, i] for i, name in enumerate(header)}


def write_profile(path, p: Profile) -> Path:
    return write_csv(path, ("r", "u"), (p.grid.nodes, p.u))


def read_profile(path, grid: RadialGrid) -> Profile:
    _, cols = read_csv(path)
    if not np.array_equal(cols["r"], grid.nodes):
        raise ValueError(f"{path}: radii do not match the grid")
    return Profile(grid, cols["u"])


def write_curvature(path, c: CurvatureProfile) -> Path:
    return write_csv(path, ("r", "K"), (c.r, c.K))


def write_barrier_surface(path, r, times, U) -> Path:
    """Sampled barrier U[t_index, r_index] as long-format rows r,t,U."""
    r = np.asarray(r, float)
    times = np.asarray(times, float)
    U = np.asarray(U, float)
    rr = np.tile(r, len(times))
    tt = np.repeat(times, len(r))
    return write_csv(path, ("r", "t", "U"), (rr, tt, U.ravel()))


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_flow(directory, f: FlowResult) -> Path:
    """meta.json plus t_<index>.csv per stored snapshot."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(f.times) - 1)))
    files = []
    for i, p in enumerate(f.profiles):
        name = f"t_{i:0{width}d}.csv"
        write_profile(d / name, p)
        files.append(name)
    meta = {
        "grid": f.grid.to_dict(),
        "params": f.params.to_dict(),
        "status": f.status,
        "stop_reason": f.stop_reason,
        "steps": f.steps,
        "dt_max": f.dt_max,
        "times": f.times,
        "files": files,
        "diagnostics": f.diagnostics,
    }
    write_json(d / "meta.json", meta)
    return d


def write_sequence(directory, seq: TruncationSequence) -> Path:
    """One r,u CSV per level plus manifest.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for j, p in enumerate(seq.profiles):
        name = f"level_{j:02d}.csv"
        write_profile(d / name, p)
        files.append(name)
    manifest = seq.to_manifest()
    manifest["files"] = files
    write_json(d / "manifest.json", manifest)
    return d
