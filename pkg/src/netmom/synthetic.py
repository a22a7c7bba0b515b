"""Synthetic price panels for tests, examples and the acceptance study."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .market_data import ContractSpec, PricePanel, Sector, assemble_panel


def business_dates(n: int, start: str = "2010-01-04") -> pd.DatetimeIndex:
    return pd.bdate_range(start, periods=n)


def _specs(names, point_value=10.0, half_spread=0.0) -> list[ContractSpec]:
    sectors = list(Sector)
    return [
        ContractSpec(name, point_value=point_value, half_spread=half_spread, sector=sectors[i % len(sectors)])
        for i, name in enumerate(names)
    ]


def _ar1(shocks: np.ndarray, phi: float) -> np.ndarray:
    out = np.zeros_like(shocks)
    for t in range(1, len(shocks)):
        out[t] = phi * out[t - 1] + shocks[t]
    return out


def spillover_panel(
    T: int = 1500,
    n_leaders: int = 3,
    spillover: float = 0.8,
    lag: int = 1,
    trend_persistence: float = 0.98,
    trend_scale: float = 0.25,
    noise: float = 1.0,
    reversion: float = 0.9,
    reversion_scale: float = 1.0,
    half_spread: float = 0.01,
    point_value: float = 10.0,
    seed: int = 7,
) -> PricePanel:
    """Leaders share a persistent drift; followers echo them one step later.

    Leader deltas are ``mu_t + e_t + u_t - u_{t-1}`` where ``mu`` is an AR(1)
    drift with the given persistence and stationary std ``trend_scale``,
    ``e`` is white noise and ``u`` is a mean-reverting AR(1) price-level
    deviation (coefficient ``reversion``).  Follower ``j`` has deltas
    ``spillover * leader_j[t - lag]`` plus its own white and mean-reverting
    noise.  The level deviations are private to each market.
    """
    rng = np.random.default_rng(seed)
    n = T + lag
    m = 2 * n_leaders
    mu = _ar1(rng.standard_normal(n) * trend_scale * np.sqrt(1 - trend_persistence**2), trend_persistence)
    white = noise * rng.standard_normal((n, m))
    level = _ar1(rng.standard_normal((n, m)) * reversion_scale, reversion)
    own = white + np.diff(level, axis=0, prepend=0.0)
    leaders = mu[:, None] + own[:, :n_leaders]
    followers = spillover * leaders[:-lag] + own[lag:, n_leaders:]
    deltas = np.hstack([leaders[lag:], followers])
    prices = 100.0 + np.cumsum(deltas, axis=0)
    names = [f"L{i + 1}" for i in range(n_leaders)] + [f"F{i + 1}" for i in range(n_leaders)]
    return assemble_panel(business_dates(T), _specs(names, point_value, half_spread), prices)


def trend_panel(T: int = 400, M: int = 2, drift: float = 0.2, noise: float = 1.0, seed: int = 0, half_spread: float = 0.0) -> PricePanel:
    """Independent random walks with a constant drift (negative for a downtrend)."""
    rng = np.random.default_rng(seed)
    deltas = drift + noise * rng.standard_normal((T, M))
    prices = 1000.0 + np.cumsum(deltas, axis=0)
    return assemble_panel(business_dates(T), _specs([f"M{i + 1}" for i in range(M)], half_spread=half_spread), prices)


def shifted_pair(n: int, k: int, snr: float = 10.0, seed: int = 0, offset: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``y[t] = x[t - k] + offset + noise`` built from one longer smooth base series.

    ``snr`` is the ratio of the base series' standard deviation to the noise's.
    """
    rng = np.random.default_rng(seed)
    pad = abs(k) + 1
    base = np.cumsum(rng.standard_normal(n + 2 * pad))
    base = (base - base.mean()) / base.std()
    x = base[pad : pad + n]
    y = base[pad - k : pad - k + n] + offset + rng.standard_normal(n) / snr
    return x, y
