"""Plain-text snapshots, CSV time series and diagnostics report files.

A snapshot is a short ``key: value`` header followed by numeric blocks::

    # selmut snapshot
    schema: 1
    kind: eps
    t: 0.5
    params: {"trait": [-1.0, 1.0, 201], "r": [...], ...}
    space: {"extents": [[0.0, 1.0]], "n": [101]}
    ---
    u 201 99
    <201 rows of 99 values>
    rho 99
    <99 values>
    c 99
    <99 values>
    end

All numbers are written with ``%.17g``, so reading a snapshot back gives the
same doubles bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import StateEps
from .elliptic import MetaState
from .hj import LimitState
from .model import ModelParams, SpatialGrid, TraitGrid, validate_params

__all__ = [
    "SCHEMA_VERSION",
    "SnapshotError",
    "TruncatedSnapshot",
    "UnsupportedSchema",
    "write_snapshot",
    "read_snapshot",
    "read_header",
    "snapshot_name",
    "write_timeseries",
    "write_reports",
]

SCHEMA_VERSION = 1
MAGIC = "# selmut snapshot"
FMT = "%.17g"


class SnapshotError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} at byte {offset}"
        super().__init__(message)
        self.offset = offset


class TruncatedSnapshot(SnapshotError):
    pass


class UnsupportedSchema(SnapshotError):
    pass


def _row(values) -> str:
    return " ".join(FMT % v for v in np.ravel(values))


def _space_echo(grid: SpatialGrid) -> dict:
    return {"extents": [list(e) for e in grid.extents], "n": list(grid.n)}


def _params_echo(params: ModelParams) -> str:
    echo = params.echo()
    echo["r"] = [float(FMT % v) for v in echo["r"]]
    echo["d"] = [float(FMT % v) for v in echo["d"]]
    return json.dumps(echo)


def _encode(obj, params=None, grid=None, mode=None) -> str:
    if isinstance(obj, StateEps):
        kind, t, params, grid = "eps", obj.t, obj.params, obj.grid
        header = {"k0": obj.k0}
        blocks = [("u", obj.u), ("rho", obj.rho), ("c", obj.c)]
    elif isinstance(obj, LimitState):
        kind, t, params, grid = "limit", obj.t, obj.params, obj.grid
        header = {}
        blocks = [("u", obj.u), ("xbar", obj.xbar), ("rho", obj.rho), ("c", obj.c)]
    elif isinstance(obj, MetaState):
        if params is None or grid is None:
            raise ValueError("writing a MetaState needs params and grid")
        kind, t = "metastable", 0.0
        header = {"newton_iters": obj.newton_iters, "residual": obj.residual}
        blocks = [("xbar", obj.xbar), ("f", obj.f), ("c", obj.c), ("rho", obj.rho)]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    lines = [MAGIC, f"schema: {SCHEMA_VERSION}", f"kind: {kind}", f"mode: {mode or kind}", f"t: {FMT % t}"]
    for key, value in header.items():
        lines.append(f"{key}: {FMT % value if isinstance(value, float) else value}")
    lines.append(f"params: {_params_echo(params)}")
    lines.append(f"space: {json.dumps(_space_echo(grid))}")
    lines.append("---")
    for name, arr in blocks:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 2:
            lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
            lines.extend(_row(r) for r in arr)
        else:
            lines.append(f"{name} {arr.size}")
            lines.append(_row(arr))
    lines.append("end")
    return "\n".join(lines) + "\n"


def write_snapshot(obj, path, params=None, grid=None, mode=None) -> Path:
    """Write a ``StateEps``, ``LimitState`` or ``MetaState`` (the latter with ``params`` and ``grid``)."""
    path = Path(path)
    path.write_text(_encode(obj, params, grid, mode))
    return path


def snapshot_name(index: int, prefix: str = "snap") -> str:
    return f"{prefix}_{index:05d}.txt"


class _Lines:
    """Line iterator that tracks byte offsets for error messages."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.data):
            raise TruncatedSnapshot(f"file ends while reading {what}", offset=len(self.data))
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            raise TruncatedSnapshot(f"unterminated line while reading {what}", offset=len(self.data))
        start, self.pos = self.pos, end + 1
        return start, self.data[start:end].decode()


def _parse_header(lines: _Lines) -> dict:
    start, first = lines.next("header")
    if first.strip() != MAGIC:
        raise SnapshotError("not a snapshot file", offset=start)
    header = {}
    while True:
        start, line = lines.next("header")
        if line == "---":
            break
        key, sep, value = line.partition(": ")
        if not sep:
            raise SnapshotError(f"malformed header line {line!r}", offset=start)
        header[key] = value
    schema = header.get("schema")
    if schema != str(SCHEMA_VERSION):
        raise UnsupportedSchema(f"unsupported snapshot schema {schema!r} (expected {SCHEMA_VERSION})")
    return header


def _floats(text, count, what, offset):
    parts = text.split()
    if len(parts) != count:
        cls = TruncatedSnapshot if len(parts) < count else SnapshotError
        raise cls(f"{what}: expected {count} values, found {len(parts)}", offset=offset)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise SnapshotError(f"{what}: non-numeric entry", offset=offset) from None


def _parse_blocks(lines: _Lines) -> dict:
    blocks = {}
    while True:
        start, line = lines.next("block header")
        if line == "end":
            return blocks
        parts = line.split()
        if len(parts) == 3:
            name, rows, cols = parts[0], int(parts[1]), int(parts[2])
            data = []
            for i in range(rows):
                off, text = lines.next(f"{name} row {i}")
                data.append(_floats(text, cols, f"{name} row {i}", off))
            blocks[name] = np.array(data, dtype=float).reshape(rows, cols)
        elif len(parts) == 2:
            name, size = parts[0], int(parts[1])
            off, text = lines.next(name)
            blocks[name] = np.array(_floats(text, size, name, off), dtype=float)
        else:
            raise SnapshotError(f"malformed block header {line!r}", offset=start)


def _params_from(header):
    echo = json.loads(header["params"])
    x_min, x_max, n_x = echo["trait"]
    tgrid = TraitGrid(float(x_min), float(x_max), int(n_x))
    params = validate_params(ModelParams(tgrid, echo["r"], echo["d"], echo["lam"], echo["c_B"], echo["eps"]))
    sp = json.loads(header["space"])
    grid = SpatialGrid(tuple(tuple(e) for e in sp["extents"]), tuple(sp["n"]))
    return params, grid


def read_header(path) -> dict:
    return _parse_header(_Lines(Path(path).read_bytes()))


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`.

    Returns a ``StateEps``, ``LimitState`` or ``(MetaState, params, grid)``.

    Raises
    ------
    TruncatedSnapshot
        if the file ends early; the message carries the byte offset.
    UnsupportedSchema
        for a schema version other than :data:`SCHEMA_VERSION`.
    """
    lines = _Lines(Path(path).read_bytes())
    header = _parse_header(lines)
    blocks = _parse_blocks(lines)
    params, grid = _params_from(header)
    kind = header.get("kind")
    t = float(header["t"])
    try:
        if kind == "eps":
            return StateEps(t, blocks["u"], blocks["rho"], blocks["c"], params, grid, k0=float(header.get("k0", "nan")))
        if kind == "limit":
            return LimitState(t, blocks["u"], blocks["xbar"], blocks["rho"], blocks["c"], params, grid)
        if kind == "metastable":
            meta = MetaState(
                xbar=blocks["xbar"], f=blocks["f"], c=blocks["c"], rho=blocks["rho"],
                newton_iters=int(header.get("newton_iters", 0)), residual=float(header.get("residual", "nan")),
            )
            return meta, params, grid
    except KeyError as exc:
        raise SnapshotError(f"missing block {exc.args[0]!r}") from None
    raise SnapshotError(f"unknown snapshot kind {kind!r}")


def write_timeseries(snapshots: Sequence, path) -> Path:
    """CSV with one row per (time, spatial node): ``t, node, y..., rho, c, xbar``."""
    path = Path(path)
    first = snapshots[0]
    coords = first.grid.interior_coords()
    ycols = [f"y{k}" for k in range(coords.shape[1])]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", *ycols, "rho", "c", "xbar"])
        for s in snapshots:
            xbar = s.xbar
            for j in range(coords.shape[0]):
                w.writerow([FMT % s.t, j, *(FMT % v for v in coords[j]), FMT % s.rho[j], FMT % s.c[j], FMT % xbar[j]])
    return path


def write_reports(reports: Iterable, path) -> Path:
    """Human-readable summaries followed by a machine-readable table."""
    reports = list(reports)
    path = Path(path)
    cols = ["t", "violations", "uxx_min", "uxx_max", "K_t", "window_lo", "max_u_min", "max_u_max",
            "window_hi", "window_ok", "conc_x", "conc_sin", "conc_clamp", "lyapunov", "dist_rho", "dist_c_h1"]
    lines = [r.summary() for r in reports]
    for r in reports:
        for v in r.violations:
            lines.append(f"  violation t={r.t:.6g} field={v.field} index={v.index} excess={v.excess:.6e}")
    lines += ["", ",".join(cols)]
    for r in reports:
        lo, actual, hi, ok = r.window
        lyap = r.lyapunov.value if r.lyapunov is not None else math.nan
        dist = r.distances if r.distances is not None else (math.nan, math.nan)
        row = [r.t, len(r.violations), r.envelope[0], r.envelope[1], r.riccati_K, lo, np.min(actual), np.max(actual),
               hi, int(ok), r.concentration["x"], r.concentration["sin"], r.concentration["clamp"], lyap, *dist]
        lines.append(",".join(FMT % v for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path
