import csv

import numpy as np
import pytest

from selmut.dynamics import InitSpec, Profile, StateEps, simulate
from selmut.elliptic import MetaState, solve_metastable
from selmut.hj import LimitState, simulate_limit
from selmut.snapshots import (
    SnapshotError,
    TruncatedSnapshot,
    UnsupportedSchema,
    read_header,
    read_snapshot,
    snapshot_name,
    write_reports,
    write_snapshot,
    write_timeseries,
)
from selmut.diagnostics import report
from tests import regimes


@pytest.fixture(scope="module")
def small():
    return regimes.make_params("slow", n_x=41), regimes.make_grid(11)


@pytest.fixture(scope="module")
def eps_run(small):
    params, grid = small
    return simulate(params, grid, regimes.sinusoidal_init(), 0.1, 0.05)


def _same_arrays(a, b, names):
    for name in names:
        x, y = getattr(a, name), getattr(b, name)
        assert x.shape == y.shape and np.array_equal(x, y), name


def test_eps_round_trip_is_bit_exact(tmp_path, eps_run):
    state = eps_run[-1]
    back = read_snapshot(write_snapshot(state, tmp_path / "s.txt"))
    assert isinstance(back, StateEps)
    assert back.t == state.t and back.k0 == state.k0
    _same_arrays(state, back, ["u", "rho", "c"])
    assert np.array_equal(back.params.r, state.params.r) and np.array_equal(back.params.d, state.params.d)
    assert back.params.eps == state.params.eps and back.grid == state.grid


def test_limit_round_trip_is_bit_exact(tmp_path, small):
    params, grid = small
    state = simulate_limit(params, grid, regimes.sinusoidal_init(), 0.05, 0.05)[-1]
    back = read_snapshot(write_snapshot(state, tmp_path / "l.txt"))
    assert isinstance(back, LimitState)
    _same_arrays(state, back, ["u", "xbar", "rho", "c"])


def test_meta_round_trip_is_bit_exact(tmp_path, small):
    params, grid = small
    meta = solve_metastable(np.full(grid.size, 0.1), params, grid)
    back, p2, g2 = read_snapshot(write_snapshot(meta, tmp_path / "m.txt", params=params, grid=grid))
    assert isinstance(back, MetaState)
    _same_arrays(meta, back, ["xbar", "f", "c", "rho"])
    assert back.newton_iters == meta.newton_iters and back.residual == meta.residual
    assert g2 == grid and np.array_equal(p2.r, params.r)


def test_meta_needs_params(tmp_path, small):
    params, grid = small
    meta = solve_metastable(np.zeros(grid.size), params, grid)
    with pytest.raises(ValueError):
        write_snapshot(meta, tmp_path / "m.txt")


def test_header_fields(tmp_path, eps_run):
    path = write_snapshot(eps_run[1], tmp_path / "s.txt")
    header = read_header(path)
    assert header["schema"] == "1" and header["kind"] == "eps"
    assert float(header["t"]) == eps_run[1].t


def test_truncated_file_reports_byte_offset(tmp_path, eps_run):
    path = write_snapshot(eps_run[-1], tmp_path / "s.txt")
    data = path.read_bytes()
    cut = len(data) // 2
    path.write_bytes(data[:cut])
    with pytest.raises(TruncatedSnapshot) as info:
        read_snapshot(path)
    assert info.value.offset is not None and 0 < info.value.offset <= cut
    assert f"byte {info.value.offset}" in str(info.value)


def test_unsupported_schema(tmp_path, eps_run):
    path = write_snapshot(eps_run[-1], tmp_path / "s.txt")
    path.write_text(path.read_text().replace("schema: 1", "schema: 7", 1))
    with pytest.raises(UnsupportedSchema):
        read_snapshot(path)


def test_not_a_snapshot(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("hello\n")
    with pytest.raises(SnapshotError) as info:
        read_snapshot(path)
    assert info.value.offset == 0


def test_non_numeric_entry(tmp_path, eps_run):
    path = write_snapshot(eps_run[-1], tmp_path / "s.txt")
    lines = path.read_text().splitlines()
    k = lines.index("---") + 2
    lines[k] = "abc " + " ".join(lines[k].split()[1:])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SnapshotError, match="non-numeric"):
        read_snapshot(path)


def test_snapshot_names_sort():
    names = [snapshot_name(k) for k in (0, 9, 10, 123)]
    assert names == sorted(names) and names[0] == "snap_00000.txt"


def test_timeseries_csv(tmp_path, eps_run):
    path = write_timeseries(eps_run, tmp_path / "ts.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "node", "y0", "rho", "c", "xbar"]
    n = eps_run[0].grid.size
    assert len(rows) == 1 + n * len(eps_run)
    last = rows[-1]
    assert float(last[0]) == eps_run[-1].t
    assert float(last[3]) == eps_run[-1].rho[-1]
    assert float(last[5]) == eps_run[-1].xbar[-1]


def test_report_file(tmp_path, eps_run):
    path = write_reports([report(s) for s in eps_run], tmp_path / "r.txt")
    text = path.read_text().splitlines()
    head = text.index("t,violations,uxx_min,uxx_max,K_t,window_lo,max_u_min,max_u_max,"
                      "window_hi,window_ok,conc_x,conc_sin,conc_clamp,lyapunov,dist_rho,dist_c_h1")
    assert len(text) - head - 1 == len(eps_run)
    assert all(line.startswith("t=") for line in text[: len(eps_run)])
