import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsda.diagnostics import (
    COLUMNS,
    ErrorSeries,
    FormatError,
    fit_decay_rate,
    format_series,
    read_series,
    read_snapshot,
    rho_bounds,
    write_series,
    write_snapshot,
)
from nsda.spectral import Grid, curl, random_field

positive = st.floats(1e-3, 1e3)


def series_from(t, y):
    rows = [(ti, yi, yi, yi, 1.0, 1.0) for ti, yi in zip(t, y)]
    return ErrorSeries.from_rows(rows)


def test_rho_arithmetic():
    b = rho_bounds(1.0, 1.0, 1.0, 1.0)
    assert (b.rho_H, b.rho_V, b.integral_AU_bound) == pytest.approx((math.sqrt(2), math.sqrt(2), 3.0))
    z = rho_bounds(0.0, 1.0, 1.0, 1.0)
    assert (z.rho_H, z.rho_V, z.integral_AU_bound) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        rho_bounds(1.0, 0.0, 1.0, 1.0)


@given(positive, positive, positive, positive)
@settings(max_examples=60)
def test_rho_monotone_and_chain(F, nu, l1, d):
    b = rho_bounds(F, nu, l1, d)
    assert b.rho_V >= math.sqrt(l1) * b.rho_H * (1 - 1e-12)
    up = rho_bounds(2 * F, nu, l1, d)
    assert up.rho_H > b.rho_H and up.rho_V > b.rho_V and up.integral_AU_bound > b.integral_AU_bound
    visc = rho_bounds(F, 2 * nu, l1, d)
    assert visc.rho_H < b.rho_H and visc.rho_V < b.rho_V


def test_fit_exact_exponential():
    t = np.linspace(0, 5, 50)
    alpha, r2 = fit_decay_rate(series_from(t, np.exp(-2 * t)), "err_L2")
    assert alpha == pytest.approx(2.0, abs=1e-6)
    assert r2 > 0.9999


def test_fit_constant():
    t = np.linspace(0, 5, 50)
    alpha, r2 = fit_decay_rate(series_from(t, np.full_like(t, 3.0)), "err_H1")
    assert abs(alpha) < 1e-9 and r2 == 1.0


@given(st.floats(0.1, 5.0), st.floats(1e-6, 1e6))
@settings(max_examples=40)
def test_fit_shift_invariant(rate, scale):
    t = np.linspace(0, 3, 40)
    y = np.exp(-rate * t) * (1 + 0.1 * np.sin(7 * t))
    a1, _ = fit_decay_rate(series_from(t, y), "err_H2")
    a2, _ = fit_decay_rate(series_from(t, scale * y), "err_H2")
    assert a1 == pytest.approx(a2, abs=1e-12)


def test_fit_floor_and_window():
    t = np.linspace(0, 40, 81)
    y = np.exp(-t)
    a_all, _ = fit_decay_rate(series_from(t, y), "err_L2")
    a_head, _ = fit_decay_rate(series_from(t[:40], y[:40]), "err_L2")
    assert a_all < a_head  # clipped tail flattens the fit
    a_late, r2 = fit_decay_rate(series_from(t, y), "err_L2", t_start=35.0)
    assert a_late == pytest.approx(0.0, abs=1e-12)


def test_fit_errors():
    t = np.linspace(0, 1, 5)
    with pytest.raises(ValueError):
        fit_decay_rate(series_from(t, np.ones(5)), "err_L2")
    t = np.linspace(0, 1, 20)
    with pytest.raises(ValueError):
        fit_decay_rate(series_from(t, np.zeros(20)), "err_L2")
    with pytest.raises(KeyError):
        fit_decay_rate(series_from(t, np.ones(20)), "nope")


def test_series_check():
    good = ErrorSeries.from_rows([(0.0, 1.0, 2.0, 3.0, 1.0, 1.0), (0.1, 0.5, 1.0, 1.5, 1.0, 1.0)])
    assert good.check(1.0) == []
    bad = ErrorSeries.from_rows([(0.0, 1.0, 0.5, 3.0, 1.0, 1.0), (0.0, -1.0, 1.0, 0.1, 1.0, 1.0)])
    problems = bad.check(1.0)
    assert any("increasing" in p for p in problems)
    assert any("negative" in p for p in problems)
    assert any("err_H2" in p for p in problems)
    assert any("lambda1 err_L2" in p for p in problems)


@given(st.lists(st.tuples(*[st.floats(0, 1e300, allow_nan=False)] * 5), min_size=1, max_size=20))
@settings(max_examples=30)
def test_series_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    data = [(float(i), *r) for i, r in enumerate(rows)]
    s = ErrorSeries.from_rows(data, {"seed": 4, "nu": 0.025})
    write_series(s, path)
    back = read_series(path)
    np.testing.assert_array_equal(back.data, s.data)
    assert back.metadata == {"seed": "4", "nu": "0.025"}


def test_csv_layout():
    s = ErrorSeries.from_rows([(0.1, 1 / 3, 2.0, 3.0, 4.0, 5.0)], {"k": "v"})
    text = format_series(s)
    lines = text.splitlines()
    assert lines[0] == "# k = v"
    assert lines[1] == ",".join(COLUMNS)
    assert lines[2].split(",")[1] == "0.33333333333333331"


def test_read_series_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,a\n")
    with pytest.raises(FormatError):
        read_series(p)
    p.write_text(",".join(COLUMNS) + "\n1,2,3\n")
    with pytest.raises(FormatError, match=":2:"):
        read_series(p)
    p.write_text(",".join(COLUMNS) + "\n1,2,3,x,5,6\n")
    with pytest.raises(FormatError):
        read_series(p)
    p.write_text("# only = comments\n")
    with pytest.raises(FormatError):
        read_series(p)


@pytest.mark.parametrize("kind", ["velocity", "scalar"])
def test_snapshot_round_trip(tmp_path, kind):
    g = Grid(16, 3.5)
    U = random_field(g, -1.0, 20.0, 8)
    field = U if kind == "velocity" else curl(U)
    path = tmp_path / "s.nsda"
    write_snapshot(path, field, 1.25)
    back, t = read_snapshot(path)
    assert type(back) is type(field) and back.grid == g and t == 1.25
    assert back.coeffs.tobytes() == field.coeffs.tobytes()


def test_snapshot_header_layout(tmp_path):
    g = Grid(8)
    path = tmp_path / "s.nsda"
    write_snapshot(path, curl(random_field(g, -1.0, 4.0, 1)), 2.0)
    raw = path.read_bytes()
    assert raw[:4] == b"NSDA"
    assert struct.unpack_from("<IIddI", raw, 4) == (1, 8, g.L, 2.0, 1)
    assert len(raw) == 32 + 8 * 8 * 16


def test_snapshot_fault_injection(tmp_path):
    g = Grid(8)
    good = tmp_path / "good.nsda"
    write_snapshot(good, random_field(g, -1.0, 4.0, 1), 0.0)
    raw = good.read_bytes()
    bad = tmp_path / "bad.nsda"
    cases = {
        raw[:-5]: f"byte offset {len(raw) - 5}",
        raw[:10]: "byte offset 10",
        raw + b"\0": "oversized",
        b"XXXX" + raw[4:]: "byte offset 0",
        raw[:4] + struct.pack("<I", 9) + raw[8:]: "version 9",
        raw[:28] + struct.pack("<I", 5) + raw[32:]: "tag 5",
    }
    for blob, msg in cases.items():
        bad.write_bytes(blob)
        with pytest.raises(FormatError, match=msg):
            read_snapshot(bad)
