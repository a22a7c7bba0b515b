import numpy as np
import pandas as pd
import pytest

from netmom.market_data import ContractSpec, assemble_panel

ACCEPTANCE_RESULTS: dict = {}


def make_panel(prices, point_value=10.0, half_spread=0.0, start="2020-01-01", names=None, fx=1.0):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    names = names or [f"M{i}" for i in range(prices.shape[1])]
    specs = [ContractSpec(n, point_value=point_value, half_spread=half_spread, fx=fx) for n in names]
    return assemble_panel(pd.bdate_range(start, periods=len(prices)), specs, prices)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
