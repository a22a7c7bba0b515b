"""Time-series momentum oscillators, network momentum and position sizing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .graph import NetworkMatrix

SPEEDS = (1, 2, 3, 4, 5, 6)
SLOW_RATIO = 3.0
LAMBDA = math.sqrt(2.0)
SIGMA_TARGET = 0.10
TRADING_DAYS = 252


@dataclass(frozen=True)
class OscillatorSet:
    speeds: tuple[int, ...]
    slow_ratio: float
    values: np.ndarray  # T x M x K


@dataclass(frozen=True)
class SignalFrame:
    date: pd.Timestamp
    features: np.ndarray  # M x K
    positions: np.ndarray  # M, in lots
    gamma: float
    sigma_target: float


def ewma(x: np.ndarray, alpha: float) -> np.ndarray:
    """Recursive EWMA down axis 0, seeded at each column's first finite value.

    NaN inputs leave the running average untouched and are NaN in the output.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(len(x), -1)
    out = pd.DataFrame(flat).ewm(alpha=alpha, adjust=False, ignore_na=True).mean().to_numpy()
    out[~np.isfinite(flat)] = np.nan
    return out.reshape(x.shape)


def oscillator(scaled_price: np.ndarray, k: int, slow_ratio: float = SLOW_RATIO) -> np.ndarray:
    """Fast minus slow EWMA of the volatility-scaled price for speed ``k``.

    The fast average uses decay ``2**-k`` and the slow one ``1 / (slow_ratio * 2**k)``.
    """
    if k < 1:
        raise ValueError("speed k must be >= 1")
    if not slow_ratio > 1:
        raise ValueError("slow_ratio must be > 1")
    return ewma(scaled_price, 2.0**-k) - ewma(scaled_price, 1.0 / (slow_ratio * 2.0**k))


def oscillators(scaled_prices: np.ndarray, speeds: Sequence[int] = SPEEDS, slow_ratio: float = SLOW_RATIO) -> OscillatorSet:
    values = np.stack([oscillator(scaled_prices, k, slow_ratio) for k in speeds], axis=-1)
    return OscillatorSet(tuple(speeds), slow_ratio, values)


def network_feature(features: np.ndarray, network: NetworkMatrix | np.ndarray) -> np.ndarray:
    """Edge-weighted sum of each market's neighbours' oscillators (``A @ R``)."""
    A = network.values if isinstance(network, NetworkMatrix) else np.asarray(network, dtype=float)
    features = np.asarray(features, dtype=float)
    if A.shape != (features.shape[0], features.shape[0]):
        raise ValueError(f"network {A.shape} does not match features {features.shape}")
    return A @ features


def response_constant(lam: float = LAMBDA) -> float:
    """Scale making ``response(X)`` unit-variance for standard normal ``X``."""
    return (1.0 + 2.0 * lam * lam) ** 0.75


def response(x, lam: float = LAMBDA):
    """Reverting sigmoid ``c * x * exp(-lam^2 x^2 / 2)``; peaks at ``x = 1/lam``."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    x = np.asarray(x, dtype=float)
    return response_constant(lam) * x * np.exp(-0.5 * lam * lam * x * x)


def position_signal(
    features: np.ndarray,
    vol22: np.ndarray,
    point_value: np.ndarray,
    fx: np.ndarray,
    gamma: float,
    sigma_target: float = SIGMA_TARGET,
    lam: float = LAMBDA,
    n_markets: int | None = None,
) -> np.ndarray:
    """Desired position in lots for each market from its ``K`` features.

    The averaged response is divided by the USD risk of one lot
    (``point_value * fx * vol22``) and scaled to the daily risk budget
    ``gamma * sigma_target / sqrt(252)``.  Markets with any undefined input
    get a zero position.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    risk = np.asarray(point_value, dtype=float) * np.asarray(fx, dtype=float) * np.asarray(vol22, dtype=float)
    ok = np.isfinite(features).all(axis=1) & np.isfinite(risk)
    if np.any(risk[ok] <= 0):
        raise ValueError("point value, fx and volatility must be positive")
    m = n_markets if n_markets is not None else features.shape[0]
    signal = response(np.where(np.isfinite(features), features, 0.0), lam).mean(axis=1)
    budget = gamma * sigma_target / math.sqrt(TRADING_DAYS)
    pos = np.zeros(features.shape[0])
    pos[ok] = signal[ok] / m / risk[ok] * budget
    return pos


def signal_dump(dates, markets, speeds, features: np.ndarray, positions: np.ndarray) -> pd.DataFrame:
    """Long table ``date, market, speed, feature, position``."""
    T, M, K = features.shape
    idx = pd.MultiIndex.from_product([pd.DatetimeIndex(dates), list(markets), list(speeds)], names=["date", "market", "speed"])
    frame = pd.DataFrame({"feature": features.reshape(-1)}, index=idx).reset_index()
    frame["position"] = np.repeat(positions.reshape(-1), K)
    return frame
