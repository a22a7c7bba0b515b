"""PnL accounting and performance statistics.

Timing: a position ``X[t]`` computed from data up to ``t`` is traded on
``t+1`` (cost booked on ``t+1``) and earns the price move of ``t+2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .signals import TRADING_DAYS

HORIZONS = {"1d": 1, "1w": 5, "2w": 10, "1m": 21, "2m": 42, "3m": 63, "6m": 126, "1y": 252}


@dataclass(frozen=True)
class PnlFrame:
    dates: pd.DatetimeIndex
    markets: tuple[str, ...]
    gross: np.ndarray
    cost: np.ndarray
    net: np.ndarray
    gamma: float

    def _series(self, values: np.ndarray) -> pd.Series:
        return pd.Series(values.sum(axis=1) / self.gamma, index=self.dates)

    @property
    def returns(self) -> pd.Series:
        """Portfolio net daily return (net USD pnl over notional)."""
        return self._series(self.net)

    @property
    def gross_returns(self) -> pd.Series:
        return self._series(self.gross)

    @property
    def cost_returns(self) -> pd.Series:
        return self._series(self.cost)

    def slice(self, start: int) -> "PnlFrame":
        return PnlFrame(self.dates[start:], self.markets, self.gross[start:], self.cost[start:], self.net[start:], self.gamma)


@dataclass(frozen=True)
class PerformanceReport:
    n_obs: int = 0
    gross_return: float | None = None
    net_return: float | None = None
    transaction_cost: float | None = None
    vol: float | None = None
    sharpe: float | None = None
    downside_deviation: float | None = None
    mdd: float | None = None
    sortino: float | None = None
    calmar: float | None = None
    skewness: float | None = None
    hit_rate: float | None = None
    avg_profit_over_avg_loss: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def metric_names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "n_obs"]


def _shift(a: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(a)
    if k < len(a):
        out[k:] = a[: len(a) - k]
    return out


def _clean(positions) -> np.ndarray:
    return np.nan_to_num(np.asarray(positions, dtype=float), nan=0.0)


def gross_pnl(positions, deltas, point_value, fx) -> np.ndarray:
    """USD pnl earned on ``t+2`` by the position computed on ``t``.

    The first two rows have no originating position and are zero.
    """
    X = _clean(positions)
    deltas = np.asarray(deltas, dtype=float)
    if X.shape != deltas.shape:
        raise ValueError(f"positions {X.shape} and deltas {deltas.shape} are misaligned")
    held = _shift(X, 2)
    move = np.where(held != 0, deltas, 0.0)
    return held * move * np.asarray(point_value, dtype=float) * np.asarray(fx, dtype=float)


def transaction_costs(positions, half_spread, point_value, fx) -> np.ndarray:
    """USD cost of trading into ``X[t]`` on ``t+1``.

    ``|X[t] - X[t-1]| * half_spread / 2 * F[t+1] * E[t+1]`` with a flat book
    before the first position.
    """
    X = _clean(positions)
    spread = np.asarray(half_spread, dtype=float)
    if np.any(spread < 0):
        raise ValueError("half spread must be non-negative")
    trades = np.abs(X - _shift(X, 1))
    return _shift(trades, 1) * (spread / 2.0) * np.asarray(point_value, dtype=float) * np.asarray(fx, dtype=float)


def net_pnl(gross, cost) -> np.ndarray:
    return np.asarray(gross, dtype=float) - np.asarray(cost, dtype=float)


def pnl_frame(panel, positions, gamma: float) -> PnlFrame:
    gross = gross_pnl(positions, panel.deltas, panel.point_value, panel.fx)
    cost = transaction_costs(positions, panel.half_spread, panel.point_value, panel.fx)
    return PnlFrame(panel.dates, tuple(panel.market_ids), gross, cost, net_pnl(gross, cost), gamma)


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

def skewness(x) -> float | None:
    """Bias-corrected (adjusted Fisher-Pearson) sample skewness; None if undefined."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) < 3 or np.ptp(x) <= 1e-15 * max(1.0, np.max(np.abs(x))):
        return None
    return float(stats.skew(x, bias=False))


def max_drawdown(returns) -> float:
    """Largest peak-to-trough fall of the cumulative return curve (starting at 0)."""
    curve = np.concatenate([[0.0], np.cumsum(np.asarray(returns, dtype=float))])
    return float(np.max(np.maximum.accumulate(curve) - curve))


def monthly_returns(returns: pd.Series) -> pd.Series:
    if isinstance(returns.index, pd.DatetimeIndex):
        return returns.groupby([returns.index.year, returns.index.month]).sum()
    block = np.arange(len(returns)) // 21
    return returns.groupby(block).sum()


def _ratio(num, den):
    if num is None or den is None or den <= 0:
        return None
    return num / den


def performance_metrics(returns, gross_returns=None, cost_returns=None) -> PerformanceReport:
    """Annualised performance statistics of a daily return series."""
    r = returns if isinstance(returns, pd.Series) else pd.Series(np.asarray(returns, dtype=float))
    if len(r) < 2 or not np.isfinite(r.to_numpy()).all():
        raise ValueError("need at least two finite returns")
    x = r.to_numpy(dtype=float)
    ann = math.sqrt(TRADING_DAYS)
    net = float(x.mean() * TRADING_DAYS)
    sd = float(x.std(ddof=1))
    vol = sd * ann
    downside = float(np.sqrt(np.mean(np.minimum(x, 0.0) ** 2)) * ann)
    mdd = max_drawdown(x)
    wins, losses = x[x > 0], x[x < 0]
    return PerformanceReport(
        n_obs=len(x),
        gross_return=None if gross_returns is None else float(np.mean(gross_returns) * TRADING_DAYS),
        net_return=net,
        transaction_cost=None if cost_returns is None else float(np.mean(cost_returns) * TRADING_DAYS),
        vol=vol,
        sharpe=_ratio(net, vol) if sd > 1e-15 else None,
        downside_deviation=downside,
        mdd=mdd,
        sortino=_ratio(net, downside) if downside > 1e-15 else None,
        calmar=_ratio(net, mdd) if mdd > 0 else None,
        skewness=skewness(monthly_returns(r)),
        hit_rate=float(np.mean(x > 0)),
        avg_profit_over_avg_loss=float(wins.mean() / abs(losses.mean())) if len(wins) and len(losses) else None,
    )


def report_for(pnl: PnlFrame) -> PerformanceReport:
    return performance_metrics(pnl.returns, pnl.gross_returns.to_numpy(), pnl.cost_returns.to_numpy())


def long_short_returns(positions, pnl: PnlFrame) -> tuple[pd.Series, pd.Series, np.ndarray, np.ndarray]:
    """Split portfolio pnl into long and short books.

    Gross pnl on ``t`` belongs to the side of the originating position
    ``X[t-2]``.  The cost booked on ``t`` belongs to the side of the position
    being traded into (``X[t-1]``), or of the position being closed when the
    target is flat.  Returns the two return series and the masks of
    market-dates that contributed.
    """
    X = _clean(positions)
    origin = _shift(X, 2)
    target = _shift(X, 1)
    cost_side = np.where(target != 0, np.sign(target), np.sign(origin))
    long_pnl = np.where(origin > 0, pnl.gross, 0.0) - np.where(cost_side > 0, pnl.cost, 0.0)
    short_pnl = np.where(origin < 0, pnl.gross, 0.0) - np.where(cost_side < 0, pnl.cost, 0.0)
    long_mask = (origin > 0) | ((cost_side > 0) & (pnl.cost != 0))
    short_mask = (origin < 0) | ((cost_side < 0) & (pnl.cost != 0))
    long_r = pd.Series(long_pnl.sum(axis=1) / pnl.gamma, index=pnl.dates)
    short_r = pd.Series(short_pnl.sum(axis=1) / pnl.gamma, index=pnl.dates)
    return long_r, short_r, long_mask, short_mask


def long_short_split(positions, pnl: PnlFrame) -> tuple[PerformanceReport, PerformanceReport]:
    long_r, short_r, long_mask, short_mask = long_short_returns(positions, pnl)
    long_rep = performance_metrics(long_r) if long_mask.any() else PerformanceReport()
    short_rep = performance_metrics(short_r) if short_mask.any() else PerformanceReport()
    return long_rep, short_rep


@dataclass(frozen=True)
class Diversification:
    correlation: float | None
    sign_agreement: float
    opposing_day_gain: float | None
    opposing_days: int


def diversification(returns_a, returns_b, positions_a, positions_b) -> Diversification:
    """Return correlation, sign agreement and the annualised gain of ``a`` over ``b`` on opposing days.

    A day is opposing when at least one market holds non-zero positions of
    opposite sign in the two models.
    """
    ra = np.asarray(returns_a, dtype=float)
    rb = np.asarray(returns_b, dtype=float)
    sa = np.sign(_clean(positions_a))
    sb = np.sign(_clean(positions_b))
    if ra.shape != rb.shape or sa.shape != sb.shape:
        raise ValueError("diversification inputs are misaligned")
    corr = None
    if ra.std() > 0 and rb.std() > 0:
        corr = float(np.corrcoef(ra, rb)[0, 1])
    agreement = float(np.mean(sa == sb))
    opposing = np.any(sa * sb < 0, axis=1) if sa.ndim == 2 else sa * sb < 0
    # opposing signs on position day t show up in pnl on t+2
    if sa.shape[0] == ra.shape[0]:
        opposing = _shift(opposing.astype(float), 2).astype(bool)
    gain = float(np.mean(ra[opposing] - rb[opposing]) * TRADING_DAYS) if opposing.any() else None
    return Diversification(corr, agreement, gain, int(opposing.sum()))


def horizon_skewness(returns, horizons: Mapping[str, int] = HORIZONS) -> dict[str, float | None]:
    """Skewness of overlapping ``h``-day summed returns for each horizon."""
    x = np.asarray(returns, dtype=float)
    out: dict[str, float | None] = {}
    for name, h in horizons.items():
        if len(x) < h + 2:
            out[name] = None
            continue
        sums = np.convolve(x, np.ones(h), mode="valid")
        out[name] = skewness(sums)
    return out


def reports_frame(reports: Mapping[str, PerformanceReport], columns: Sequence[str] | None = None) -> pd.DataFrame:
    cols = list(columns) if columns is not None else PerformanceReport.metric_names()
    return pd.DataFrame({name: {c: getattr(rep, c) for c in cols} for name, rep in reports.items()}).T
