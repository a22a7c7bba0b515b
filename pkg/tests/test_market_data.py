import logging

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import make_panel
from netmom.errors import DataError
from netmom.market_data import (
    EPS_VOL,
    ContractSpec,
    RawContractSeries,
    backadjust,
    ewm_std,
    load_panel,
    price_deltas,
    read_price_file,
    vol_scale,
)

CONTRACTS = "market,point_value,fx,half_spread,sector\nA,10,1.0,0.5,Energy\nB,50,1.0,0.25,Equity\n"


def _prices(rows):
    return "date,market,price\n" + "".join(f"{d},{m},{p}\n" for d, m, p in rows)


# ---------------------------------------------------------------- loading

def test_load_panel_identical_calendars(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    prices = write_csv("p.csv", _prices([(f"2020-01-0{d}", m, d) for m in "AB" for d in (1, 2, 3)]))
    panel = load_panel([prices], spec)
    assert (panel.T, panel.M) == (3, 2)
    assert panel.market_ids == ["A", "B"]


def test_load_panel_intersection_calendar(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    rows = [("2020-01-01", "A", 1), ("2020-01-02", "A", 2), ("2020-01-03", "A", 3),
            ("2020-01-01", "B", 5), ("2020-01-03", "B", 6)]
    panel = load_panel(write_csv("p.csv", _prices(rows)), spec)
    assert list(panel.dates.strftime("%Y-%m-%d")) == ["2020-01-01", "2020-01-03"]
    np.testing.assert_array_equal(panel.prices, [[1, 5], [3, 6]])


def test_load_panel_union_forward_fills(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    rows = [("2020-01-01", "A", 1), ("2020-01-02", "A", 2), ("2020-01-03", "A", 3),
            ("2020-01-01", "B", 5), ("2020-01-03", "B", 6)]
    panel = load_panel(write_csv("p.csv", _prices(rows)), spec, calendar="union")
    np.testing.assert_array_equal(panel.prices[:, 1], [5, 5, 6])


def test_load_panel_unknown_market(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    prices = write_csv("p.csv", _prices([("2020-01-01", "future_cl1", 1), ("2020-01-02", "future_cl1", 2)]))
    with pytest.raises(DataError, match="unknown market id"):
        load_panel(prices, spec)


def test_load_panel_non_ascending_dates(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    prices = write_csv("p.csv", _prices([("2020-01-02", "A", 1), ("2020-01-01", "A", 2)]))
    with pytest.raises(DataError, match=r"p\.csv:3: non-ascending"):
        load_panel(prices, spec)


def test_load_panel_non_numeric_price(write_csv):
    spec = write_csv("c.csv", CONTRACTS)
    prices = write_csv("p.csv", _prices([("2020-01-01", "A", 1), ("2020-01-02", "A", "abc")]))
    with pytest.raises(DataError, match=r"p\.csv:3: non-numeric price"):
        load_panel(prices, spec)


def test_malformed_date_reports_line(write_csv):
    prices = write_csv("p.csv", _prices([("2020-01-01", "A", 1), ("2020/01/02", "A", 2)]))
    with pytest.raises(DataError, match=r"p\.csv:3: malformed date"):
        read_price_file(prices)


def test_load_is_deterministic(write_csv, rng):
    spec = write_csv("c.csv", CONTRACTS)
    dates = pd.bdate_range("2020-01-01", periods=60).strftime("%Y-%m-%d")
    rows = [(d, m, repr(float(p))) for m in "AB" for d, p in zip(dates, 100 + rng.standard_normal(60).cumsum())]
    path = write_csv("p.csv", _prices(rows))
    a, b = load_panel(path, spec), load_panel(path, spec)
    for name in ("prices", "deltas", "vol22", "scaled_deltas", "scaled_prices", "fx"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_dated_fx_file_forward_fills(write_csv):
    write_csv("fx.csv", "date,rate\n2020-01-01,1.1\n2020-01-03,1.2\n")
    spec = write_csv("c.csv", "market,point_value,fx,half_spread,sector\nA,10,fx.csv,0,Equity\n")
    prices = write_csv("p.csv", _prices([(f"2020-01-0{d}", "A", d) for d in (1, 2, 3, 6)]))
    panel = load_panel(prices, spec)
    np.testing.assert_allclose(panel.fx[:, 0], [1.1, 1.1, 1.2, 1.2])


def test_contract_spec_invariants():
    with pytest.raises(DataError):
        ContractSpec("X", point_value=0)
    with pytest.raises(DataError):
        ContractSpec("X", point_value=1, half_spread=-1)
    with pytest.raises(DataError):
        ContractSpec("X", point_value=1, fx=0)


def test_multi_contract_file_is_backadjusted(write_csv):
    text = "date,market,price,contract,roll\n" + "".join(
        [
            "2020-01-01,A,100,A1,2020-01-02\n",
            "2020-01-02,A,100,A1,2020-01-02\n",
            "2020-01-02,A,102,A2,\n",
            "2020-01-03,A,103,A2,\n",
        ]
    )
    series = read_price_file(write_csv("p.csv", text))["A"]
    np.testing.assert_array_equal(series.to_numpy(), [102, 102, 103])


# ---------------------------------------------------------------- backadjust

def _contract(cid, dates, prices, roll=None):
    return RawContractSeries("A", cid, pd.DatetimeIndex(dates), np.array(prices, float), roll)


def test_backadjust_single_contract_identity():
    c = _contract("A1", ["2020-01-01", "2020-01-02"], [5, 6])
    np.testing.assert_array_equal(backadjust([c]).to_numpy(), [5, 6])


def test_backadjust_one_roll():
    a = _contract("A1", ["2020-01-01", "2020-01-02"], [100, 100])
    b = _contract("A2", ["2020-01-02", "2020-01-03"], [102, 103])
    np.testing.assert_array_equal(backadjust([a, b]).to_numpy(), [102, 102, 103])


def test_backadjust_cumulative_gaps():
    a = _contract("A1", ["2020-01-01", "2020-01-02"], [10, 11])
    b = _contract("A2", ["2020-01-02", "2020-01-03"], [13, 14])  # gap +2
    c = _contract("A3", ["2020-01-03", "2020-01-06"], [13, 12])  # gap -1
    out = backadjust([a, b, c]).to_numpy()
    gaps = [13 - 11, 13 - 14]
    np.testing.assert_array_equal(out[:2], np.array([10, 11]) + sum(gaps))
    np.testing.assert_array_equal(out[2:], [13, 12])


def test_backadjust_missing_roll_price():
    a = _contract("A1", ["2020-01-01", "2020-01-02"], [100, 100])
    b = _contract("A2", ["2020-01-03", "2020-01-06"], [102, 103])
    with pytest.raises(DataError, match="missing roll-date price"):
        backadjust([a, b])


def test_backadjust_preserves_within_segment_differences(rng):
    d1 = pd.bdate_range("2020-01-01", periods=20)
    d2 = pd.bdate_range(d1[-1], periods=20)
    p1 = 50 + rng.standard_normal(20).cumsum()
    p2 = 55 + rng.standard_normal(20).cumsum()
    out = backadjust([_contract("A1", d1, p1), _contract("A2", d2, p2)]).to_numpy()
    np.testing.assert_allclose(np.diff(out[:20]), np.diff(p1), atol=1e-12)
    np.testing.assert_allclose(np.diff(out[19:]), np.diff(p2), atol=1e-12)


# ---------------------------------------------------------------- deltas, vol

def test_price_deltas_examples():
    np.testing.assert_array_equal(price_deltas(np.array([[5.0], [5], [5]]))[1:, 0], [0, 0])
    d = price_deltas(np.array([[1.0], [3], [2]]))
    assert np.isnan(d[0, 0])
    np.testing.assert_array_equal(d[1:, 0], [2, -1])


@given(hnp.arrays(float, st.integers(2, 40), elements=st.floats(-1e3, 1e3)), st.floats(-1e3, 1e3))
def test_price_deltas_shift_invariant(prices, shift):
    a = price_deltas(prices[:, None])[1:]
    b = price_deltas(prices[:, None] + shift)[1:]
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_ewm_std_constant_is_zero():
    vol = ewm_std(np.full((60, 1), 3.0))
    np.testing.assert_allclose(vol[21:], 0.0, atol=1e-12)


def _ewm_std_oracle(x, span):
    a = 2.0 / (span + 1)
    out = np.full(len(x), np.nan)
    for t in range(len(x)):
        w = (1 - a) ** np.arange(t, -1, -1.0)
        mean = np.sum(w * x[: t + 1]) / w.sum()
        var = np.sum(w * (x[: t + 1] - mean) ** 2) / w.sum()
        if t + 1 >= span:
            out[t] = np.sqrt(var)
    return out


def test_ewm_std_matches_weighted_variance_oracle(rng):
    x = rng.standard_normal(120)
    np.testing.assert_allclose(ewm_std(x[:, None])[:, 0], _ewm_std_oracle(x, 22), rtol=1e-10, equal_nan=True)


def test_ewm_std_alternating_tends_to_one():
    x = np.where(np.arange(2000) % 2 == 0, 1.0, -1.0)
    vol = ewm_std(x[:, None])[:, 0]
    assert abs(vol[-1] - _ewm_std_oracle(x[-400:], 22)[-1]) < 1e-9
    # limit: weighted mean m = a / (2 - a), variance 1 - m^2
    a = 2.0 / 23.0
    limit = np.sqrt(1 - (a / (2 - a)) ** 2)
    assert abs(vol[-1] - limit) < 1e-12
    assert abs(vol[-1] - 1.0) < 0.01


def test_ewm_std_warm_up():
    vol = ewm_std(np.arange(30.0)[:, None] % 3)
    assert np.isnan(vol[:21]).all()
    assert np.isfinite(vol[21:]).all()


def test_ewm_std_span_validation():
    with pytest.raises(ValueError):
        ewm_std(np.zeros((5, 1)), span=1)


def test_vol_scale_ratio_identity():
    d = np.array([[0.5], [2.0], [1.5], [3.0]])
    scaled, sp, excluded = vol_scale(d, d.copy())
    np.testing.assert_array_equal(scaled[:, 0], 1.0)
    np.testing.assert_array_equal(sp[:, 0], [1, 2, 3, 4])
    assert excluded == ()


def test_vol_scale_zero_delta_and_stale_date(caplog):
    d = np.array([[0.0], [1.0], [1.0]])
    vol = np.array([[1.0], [EPS_VOL / 2], [1.0]])
    with caplog.at_level(logging.WARNING):
        scaled, sp, excluded = vol_scale(d, vol)
    assert scaled[0, 0] == 0.0
    assert excluded == ((1, 0),)
    assert np.isnan(scaled[1, 0]) and np.isnan(sp[1, 0])
    assert sp[2, 0] == 1.0
    assert "excluded" in caplog.text


def test_doubling_prices_leaves_scaled_deltas_unchanged(rng):
    p = 100 + rng.standard_normal(200).cumsum()
    a, b = make_panel(p), make_panel(2 * p)
    np.testing.assert_allclose(a.scaled_deltas, b.scaled_deltas, rtol=1e-12, equal_nan=True)


def test_panel_invariants(rng):
    panel = make_panel(100 + rng.standard_normal((150, 3)).cumsum(axis=0))
    np.testing.assert_allclose(panel.deltas[1:], np.diff(panel.prices, axis=0), atol=1e-12)
    sp = panel.scaled_prices
    ok = np.isfinite(sp[1:]) & np.isfinite(sp[:-1])
    np.testing.assert_allclose(np.diff(sp, axis=0)[ok], panel.scaled_deltas[1:][ok], atol=1e-12)
    assert (panel.vol22[np.isfinite(panel.scaled_deltas)] > EPS_VOL).all()
    # undefined upstream stays undefined downstream
    assert np.isnan(panel.scaled_deltas[np.isnan(panel.vol22)]).all()
    assert panel.first_defined_row() == 22
    with pytest.raises(ValueError):
        panel.prices[0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scaled_price_running_sum_property(seed):
    rng = np.random.default_rng(seed)
    panel = make_panel(100 + rng.standard_normal((80, 2)).cumsum(axis=0))
    start = panel.first_defined_row()
    np.testing.assert_allclose(
        panel.scaled_prices[start:], np.cumsum(panel.scaled_deltas[start:], axis=0), atol=1e-10
    )
