"""Price ingestion, Panama backadjustment and volatility scaling.

All matrices on a :class:`PricePanel` are ``T x M`` numpy arrays that share
one date index and one market order.  Rows that are not yet defined (first
delta, EWM warm-up) hold ``NaN``.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

log = logging.getLogger(__name__)

VOL_SPAN = 22
EPS_VOL = 1e-8


class Sector(str, enum.Enum):
    AGS = "Ags"
    ENERGY = "Energy"
    EQUITY = "Equity"
    METALS = "Metals"


@dataclass(frozen=True)
class ContractSpec:
    """Static description of one futures market.

    ``fx`` is either a constant local-currency-to-USD rate or a dated
    ``pd.Series`` of rates; constants are broadcast over the panel calendar.
    """

    market_id: str
    point_value: float
    fx: float | pd.Series = 1.0
    half_spread: float = 0.0
    sector: Sector = Sector.AGS

    def __post_init__(self):
        if not self.point_value > 0:
            raise DataError(f"{self.market_id}: point_value must be > 0")
        if not self.half_spread >= 0:
            raise DataError(f"{self.market_id}: half_spread must be >= 0")
        if isinstance(self.fx, pd.Series):
            if not (self.fx.to_numpy(dtype=float) > 0).all():
                raise DataError(f"{self.market_id}: fx rates must be > 0")
        elif not self.fx > 0:
            raise DataError(f"{self.market_id}: fx rate must be > 0")
        object.__setattr__(self, "sector", Sector(self.sector))

    def fx_on(self, dates: pd.DatetimeIndex) -> np.ndarray:
        if not isinstance(self.fx, pd.Series):
            return np.full(len(dates), float(self.fx))
        series = self.fx.sort_index()
        aligned = series.reindex(series.index.union(dates)).ffill().reindex(dates)
        if aligned.isna().any():
            first = dates[aligned.isna().to_numpy()][0].date()
            raise DataError(f"{self.market_id}: no fx rate on or before {first}")
        return aligned.to_numpy(dtype=float)


@dataclass(frozen=True)
class RawContractSeries:
    market_id: str
    contract_id: str
    dates: pd.DatetimeIndex
    prices: np.ndarray
    roll_date: pd.Timestamp | None = None

    def __post_init__(self):
        dates = pd.DatetimeIndex(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if len(dates) != len(prices):
            raise DataError(f"{self.contract_id}: dates and prices differ in length")
        if not dates.is_monotonic_increasing or dates.has_duplicates:
            raise DataError(f"{self.contract_id}: dates must be strictly ascending")
        if not np.isfinite(prices).all():
            raise DataError(f"{self.contract_id}: prices must be finite")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)
        if self.roll_date is not None:
            object.__setattr__(self, "roll_date", pd.Timestamp(self.roll_date))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PricePanel:
    """Aligned, immutable price panel with all derived matrices."""

    dates: pd.DatetimeIndex
    markets: tuple[ContractSpec, ...]
    prices: np.ndarray
    deltas: np.ndarray
    vol22: np.ndarray
    scaled_deltas: np.ndarray
    scaled_prices: np.ndarray
    point_value: np.ndarray
    fx: np.ndarray
    span: int = VOL_SPAN
    excluded: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def M(self) -> int:
        return len(self.markets)

    @property
    def market_ids(self) -> list[str]:
        return [m.market_id for m in self.markets]

    @property
    def half_spread(self) -> np.ndarray:
        return np.array([m.half_spread for m in self.markets], dtype=float)

    def frame(self, name: str) -> pd.DataFrame:
        return pd.DataFrame(getattr(self, name), index=self.dates, columns=self.market_ids)

    def first_defined_row(self) -> int:
        """Index of the first row where every market has a scaled delta."""
        ok = np.isfinite(self.scaled_deltas).all(axis=1)
        if not ok.any():
            raise DataError("panel has no row with defined volatility-scaled deltas")
        return int(np.argmax(ok))


def price_deltas(prices: np.ndarray) -> np.ndarray:
    """First differences down the rows; row 0 is undefined (NaN)."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape[0] < 2:
        raise DataError("need at least two dates to form price deltas")
    out = np.empty_like(prices)
    out[0] = np.nan
    out[1:] = prices[1:] - prices[:-1]
    return out


def ewm_std(deltas: np.ndarray, span: int = VOL_SPAN, min_periods: int | None = None) -> np.ndarray:
    """Exponentially weighted moving standard deviation with decay 2/(span+1).

    Uses adjusted weights without the small-sample bias correction; rows with
    fewer than ``min_periods`` (default ``span``) observations are NaN.
    """
    if span < 2:
        raise ValueError("span must be >= 2")
    if min_periods is None:
        min_periods = span
    frame = pd.DataFrame(np.asarray(deltas, dtype=float))
    return frame.ewm(span=span, min_periods=min_periods, adjust=True).std(bias=True).to_numpy()


def vol_scale(deltas: np.ndarray, vol: np.ndarray, eps: float = EPS_VOL):
    """Return ``(scaled_deltas, scaled_prices, excluded)``.

    Dates with ``vol <= eps`` are dropped from the running sum and reported in
    ``excluded`` as ``(row, column)`` pairs.
    """
    deltas = np.asarray(deltas, dtype=float)
    vol = np.asarray(vol, dtype=float)
    with np.errstate(invalid="ignore"):
        stale = np.isfinite(vol) & (vol <= eps) & np.isfinite(deltas)
        usable = np.isfinite(deltas) & np.isfinite(vol) & ~stale
    excluded = tuple(tuple(rc) for rc in np.argwhere(stale).tolist())
    for row, col in excluded:
        log.warning("zero volatility at row %d, market %d: date excluded", row, col)
    scaled = np.full_like(deltas, np.nan)
    scaled[usable] = deltas[usable] / vol[usable]
    running = np.cumsum(np.where(usable, scaled, 0.0), axis=0)
    scaled_prices = np.where(usable, running, np.nan)
    return scaled, scaled_prices, excluded


def assemble_panel(
    dates: Sequence,
    markets: Sequence[ContractSpec],
    prices: np.ndarray,
    *,
    deltas: np.ndarray | None = None,
    vol22: np.ndarray | None = None,
    point_value: np.ndarray | None = None,
    fx: np.ndarray | None = None,
    span: int = VOL_SPAN,
    eps: float = EPS_VOL,
) -> PricePanel:
    """Build a panel, deriving whatever matrices are not supplied.

    Passing ``deltas`` and ``vol22`` explicitly is how resampled panels keep
    each row's raw delta and volatility consistent with each other.
    """
    dates = pd.DatetimeIndex(dates)
    markets = tuple(markets)
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (len(dates), len(markets)):
        raise DataError(f"price matrix shape {prices.shape} != ({len(dates)}, {len(markets)})")
    if deltas is None:
        deltas = price_deltas(prices)
    if vol22 is None:
        vol22 = ewm_std(deltas, span)
    if point_value is None:
        point_value = np.tile([m.point_value for m in markets], (len(dates), 1))
    if fx is None:
        fx = np.column_stack([m.fx_on(dates) for m in markets]) if markets else np.empty((len(dates), 0))
    scaled, scaled_prices, excluded = vol_scale(deltas, vol22, eps)
    return PricePanel(
        dates=dates,
        markets=markets,
        prices=_frozen(prices),
        deltas=_frozen(deltas),
        vol22=_frozen(vol22),
        scaled_deltas=_frozen(scaled),
        scaled_prices=_frozen(scaled_prices),
        point_value=_frozen(point_value),
        fx=_frozen(fx),
        span=span,
        excluded=excluded,
    )


def backadjust(series: Sequence[RawContractSeries]) -> pd.Series:
    """Stitch contracts ordered by expiry with the backward Panama method.

    The latest contract is left unadjusted; every earlier contract is shifted
    by the cumulative sum of the roll gaps (next minus current price on the
    roll date) that follow it.  Each contract supplies prices up to and
    including its roll date, the next one strictly after it.
    """
    series = list(series)
    if not series:
        raise DataError("no contracts to backadjust")
    gaps = []
    for cur, nxt in zip(series[:-1], series[1:]):
        roll = cur.roll_date if cur.roll_date is not None else cur.dates[-1]
        if roll not in cur.dates or roll not in nxt.dates:
            raise DataError(
                f"{cur.market_id}: missing roll-date price on {roll.date()} "
                f"for {cur.contract_id} -> {nxt.contract_id}"
            )
        gaps.append(nxt.prices[nxt.dates.get_loc(roll)] - cur.prices[cur.dates.get_loc(roll)])
    shifts = np.concatenate([np.cumsum(gaps[::-1])[::-1], [0.0]]) if gaps else np.zeros(1)

    pieces = []
    start = None
    for k, contract in enumerate(series):
        s = pd.Series(contract.prices + shifts[k], index=contract.dates)
        if start is not None:
            s = s[s.index > start]
        if k < len(series) - 1:
            roll = contract.roll_date if contract.roll_date is not None else contract.dates[-1]
            s = s[s.index <= roll]
            start = roll
        pieces.append(s)
    out = pd.concat(pieces)
    out.name = series[0].market_id
    return out


# --------------------------------------------------------------------------
# file ingestion
# --------------------------------------------------------------------------

def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: malformed date {text!r}") from None


def _parse_float(text: str, where: str, what: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise DataError(f"{where}: non-numeric {what} {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{where}: non-finite {what} {text!r}")
    return value


def _read_rows(path: Path, required: Iterable[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}:1: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def read_fx_file(path: str | Path) -> pd.Series:
    path = Path(path)
    dates, rates = [], []
    for lineno, row in _read_rows(path, ("date", "rate")):
        where = f"{path}:{lineno}"
        dates.append(_parse_date(row["date"], where))
        rates.append(_parse_float(row["rate"], where, "rate"))
    idx = pd.DatetimeIndex(dates)
    if not idx.is_monotonic_increasing or idx.has_duplicates:
        raise DataError(f"{path}: dates must be strictly ascending")
    return pd.Series(rates, index=idx)


def read_contract_specs(path: str | Path) -> dict[str, ContractSpec]:
    path = Path(path)
    specs = {}
    for lineno, row in _read_rows(path, ("market", "point_value", "fx", "half_spread", "sector")):
        where = f"{path}:{lineno}"
        market = row["market"].strip()
        fx_text = row["fx"].strip()
        try:
            fx: float | pd.Series = float(fx_text)
        except ValueError:
            fx_path = Path(fx_text)
            if not fx_path.is_absolute():
                fx_path = path.parent / fx_path
            fx = read_fx_file(fx_path)
        try:
            sector = Sector(row["sector"].strip())
        except ValueError:
            raise DataError(f"{where}: unknown sector {row['sector']!r}") from None
        specs[market] = ContractSpec(
            market_id=market,
            point_value=_parse_float(row["point_value"], where, "point_value"),
            fx=fx,
            half_spread=_parse_float(row["half_spread"], where, "half_spread"),
            sector=sector,
        )
    return specs


def read_price_file(path: str | Path) -> dict[str, pd.Series]:
    """Parse one price CSV into a backadjusted series per market."""
    path = Path(path)
    plain: dict[str, list] = {}
    contracts: dict[tuple[str, str], dict] = {}
    has_contracts = None
    for lineno, row in _read_rows(path, ("date", "market", "price")):
        where = f"{path}:{lineno}"
        if has_contracts is None:
            has_contracts = bool(row.get("contract"))
        date = _parse_date(row["date"], where)
        price = _parse_float(row["price"], where, "price")
        market = row["market"].strip()
        if has_contracts:
            key = (market, row["contract"].strip())
            entry = contracts.setdefault(key, {"dates": [], "prices": [], "roll": None, "line": lineno})
            prev = entry["dates"][-1] if entry["dates"] else None
            if prev is not None and date <= prev:
                raise DataError(f"{where}: non-ascending dates for {key[0]}/{key[1]}")
            entry["dates"].append(date)
            entry["prices"].append(price)
            roll = (row.get("roll") or "").strip()
            if roll:
                entry["roll"] = _parse_date(roll, where)
        else:
            rows = plain.setdefault(market, [])
            if rows and date <= rows[-1][0]:
                raise DataError(f"{where}: non-ascending dates for {market}")
            rows.append((date, price))

    out = {}
    for market, rows in plain.items():
        dates, prices = zip(*rows)
        out[market] = pd.Series(prices, index=pd.DatetimeIndex(dates), name=market)
    by_market: dict[str, list[RawContractSeries]] = {}
    for (market, cid), entry in contracts.items():
        by_market.setdefault(market, []).append(
            RawContractSeries(market, cid, pd.DatetimeIndex(entry["dates"]), np.array(entry["prices"]), entry["roll"])
        )
    for market, series in by_market.items():
        series.sort(key=lambda s: s.dates[0])
        out[market] = backadjust(series)
    return out


def load_panel(
    price_files: Sequence[str | Path] | str | Path,
    contract_spec_file: str | Path,
    *,
    calendar: str = "intersection",
    span: int = VOL_SPAN,
) -> PricePanel:
    """Read price and contract files into an aligned :class:`PricePanel`.

    ``calendar="intersection"`` keeps only dates every market trades;
    ``"union"`` keeps all dates and forward-fills interior gaps, dropping
    leading dates on which some market has not started yet.
    """
    if isinstance(price_files, (str, Path)):
        price_files = [price_files]
    specs = read_contract_specs(contract_spec_file)
    series: dict[str, pd.Series] = {}
    for path in price_files:
        for market, s in read_price_file(path).items():
            if market in series:
                raise DataError(f"{path}: market {market} appears in more than one price file")
            series[market] = s
    if not series:
        raise DataError("no price data")
    unknown = sorted(set(series) - set(specs))
    if unknown:
        raise DataError(f"unknown market id: {', '.join(unknown)}")

    # market order follows the contract spec file
    order = [m for m in specs if m in series]
    frame = pd.concat([series[m] for m in order], axis=1, keys=order)
    if calendar == "intersection":
        frame = frame.dropna(how="any")
    elif calendar == "union":
        frame = frame.ffill().dropna(how="any")
    else:
        raise ValueError(f"unknown calendar policy {calendar!r}")
    if len(frame) < 2:
        raise DataError("aligned calendar has fewer than two dates")
    return assemble_panel(frame.index, [specs[m] for m in order], frame.to_numpy(), span=span)
