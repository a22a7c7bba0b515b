"""Pairwise lead-lag detection: Lévy area and the DTW family.

Sign convention everywhere: a positive score ``V[i, j]`` means market ``i``
leads market ``j``.  Warping paths use 0-based indices.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
import pandas as pd

from .errors import DataError, InsufficientHistoryError
from .market_data import EPS_VOL, PricePanel

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    LEVY = "LEVY"
    DTW = "DTW"
    DDTW = "DDTW"
    SDTW = "SDTW"
    SDDTW = "SDDTW"

    @property
    def is_dtw(self) -> bool:
        return self is not Method.LEVY


@dataclass(frozen=True)
class WarpingPath:
    pairs: np.ndarray  # (L, 2) int array of (i, j)
    cost: float

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class LeadLagMatrix:
    date: pd.Timestamp | None
    lookback: int
    method: Method
    values: np.ndarray
    markets: tuple[str, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        """Long-format dump with columns ``market_i, market_j, score``."""
        names = self.markets or tuple(str(i) for i in range(len(self.values)))
        rows = [
            (names[i], names[j], self.values[i, j])
            for i in range(len(names))
            for j in range(len(names))
            if i != j
        ]
        return pd.DataFrame(rows, columns=["market_i", "market_j", "score"])


# --------------------------------------------------------------------------
# Lévy area
# --------------------------------------------------------------------------

def levy_area(x, y) -> float:
    """Signed Lévy area of the discrete path ``(x_s, y_s)``.

    The increment sum runs over every consecutive pair of samples, which makes
    the result identical to the shoelace area of the polyline closed by its
    chord.  Positive when moves in ``x`` are followed by moves in ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ValueError("need at least two samples")
    inner = np.sum(-x[1:] * y[:-1] + y[1:] * x[:-1])
    boundary = x[0] * (y[0] - y[-1]) + y[0] * (x[-1] - x[0])
    return 0.5 * (inner + boundary)


def levy_matrix(window: np.ndarray) -> np.ndarray:
    """All pairwise Lévy areas of the columns of ``window`` (exactly skew-symmetric)."""
    w = np.asarray(window, dtype=float)
    lagged = w[:-1].T @ w[1:]  # lagged[i, j] = sum_s x^i_{s-1} x^j_s
    ends = np.outer(w[0], w[-1])
    g = 0.5 * ((lagged - lagged.T) + (ends.T - ends))
    upper = np.triu(g, 1)
    return upper - upper.T


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------

def standardize(x, eps: float = EPS_VOL) -> np.ndarray:
    """Z-normalise with the population standard deviation (ddof=0)."""
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0)
    if np.any(sd <= eps):
        raise DataError("zero-variance series cannot be standardized")
    return (x - x.mean(axis=0)) / sd


def derivative_transform(x) -> np.ndarray:
    """Local slope estimate: mean of the left slope and the centred slope.

    The two end points copy their neighbour's estimate.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 3:
        raise ValueError("derivative transform needs at least 3 points")
    d = np.empty_like(x)
    d[1:-1] = ((x[1:-1] - x[:-2]) + (x[2:] - x[:-2]) / 2.0) / 2.0
    d[0] = d[1]
    d[-1] = d[-2]
    return d


def shape_descriptors(x, length: int, derivative: bool = False) -> np.ndarray:
    """``(m, length)`` array of windows centred on each point, edges replicated.

    With ``derivative=True`` each window is replaced by its derivative transform.
    """
    if length % 2 == 0:
        raise ValueError("descriptor length must be odd")
    if length < 3:
        raise ValueError("descriptor length must be >= 3")
    x = np.asarray(x, dtype=float)
    half = length // 2
    padded = np.concatenate([np.full(half, x[0]), x, np.full(half, x[-1])])
    windows = np.lib.stride_tricks.sliding_window_view(padded, length).copy()
    if derivative:
        windows = derivative_transform(windows.T).T
    return windows


# --------------------------------------------------------------------------
# dynamic time warping
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _dtw_table(a, b):
    m, n, d = a.shape[0], b.shape[0], a.shape[1]
    acc = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            if d == 1:
                c = abs(a[i, 0] - b[j, 0])
            else:
                s = 0.0
                for k in range(d):
                    diff = a[i, k] - b[j, k]
                    s += diff * diff
                c = np.sqrt(s)
            if i == 0 and j == 0:
                acc[i, j] = c
            elif i == 0:
                acc[i, j] = c + acc[i, j - 1]
            elif j == 0:
                acc[i, j] = c + acc[i - 1, j]
            else:
                best = acc[i - 1, j - 1]
                if acc[i - 1, j] < best:
                    best = acc[i - 1, j]
                if acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                acc[i, j] = c + best
    return acc


@numba.njit(cache=True)
def _backtrack(acc):
    m, n = acc.shape
    path = np.empty((m + n - 1, 2), dtype=np.int64)
    i, j = m - 1, n - 1
    k = 0
    path[k, 0] = i
    path[k, 1] = j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # ties: diagonal, then the (1,0) step, then the (0,1) step
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        k += 1
        path[k, 0] = i
        path[k, 1] = j
    return path[: k + 1][::-1]


@numba.njit(cache=True)
def _mode_lag(path, lo, hi):
    counts = np.zeros(hi - lo + 1, dtype=np.int64)
    for k in range(path.shape[0]):
        counts[path[k, 1] - path[k, 0] - lo] += 1
    best = 0
    best_count = -1
    for idx in range(counts.shape[0]):
        lag = idx + lo
        c = counts[idx]
        if c > best_count:
            best, best_count = lag, c
        elif c == best_count and c > 0:
            if abs(lag) < abs(best) or (abs(lag) == abs(best) and lag < best):
                best = lag
    return best


@numba.njit(cache=True)
def _dtw_lag(a, b):
    acc = _dtw_table(a, b)
    path = _backtrack(acc)
    return _mode_lag(path, -(a.shape[0] - 1), b.shape[0] - 1)


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.ascontiguousarray(x)


def dtw_align(a, b) -> WarpingPath:
    """Minimal-cost warping path under Euclidean local cost.

    1-D inputs are treated as scalar sequences; 2-D inputs ``(length, dim)``
    are aligned jointly along one shared path.
    """
    a = _as_points(a)
    b = _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("sequences must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    acc = _dtw_table(a, b)
    return WarpingPath(pairs=_backtrack(acc), cost=float(acc[-1, -1]))


def warp_lag(path: WarpingPath | np.ndarray) -> int:
    """Mode of ``j - i`` along the path.

    Ties go to the smallest absolute lag, then to the negative lag.
    """
    pairs = path.pairs if isinstance(path, WarpingPath) else np.asarray(path)
    counts = Counter((pairs[:, 1] - pairs[:, 0]).tolist())
    top = max(counts.values())
    return min((lag for lag, c in counts.items() if c == top), key=lambda lag: (abs(lag), lag))


def _dtw_inputs(x: np.ndarray, method: Method, descriptor_length: int) -> np.ndarray:
    if method is Method.DTW:
        return _as_points(x)
    if method is Method.DDTW:
        return _as_points(derivative_transform(x))
    return shape_descriptors(x, descriptor_length, derivative=method is Method.SDDTW)


def pair_score(x, y, method: Method | str, descriptor_length: int = 11) -> float:
    """Lead-lag score of ``x`` against ``y`` after per-window standardization."""
    method = Method(method)
    xs, ys = standardize(x), standardize(y)
    if method is Method.LEVY:
        return levy_area(xs, ys)
    return float(_dtw_lag(_dtw_inputs(xs, method, descriptor_length), _dtw_inputs(ys, method, descriptor_length)))


def leadlag_from_window(window: np.ndarray, method: Method | str, descriptor_length: int = 11) -> np.ndarray:
    """Skew-symmetric lead-lag matrix from a ``(lookback, M)`` window of scaled deltas.

    Markets whose window has zero variance are skipped (their row and column
    stay zero); a window in which every market is constant is an error.
    """
    method = Method(method)
    window = np.asarray(window, dtype=float)
    n_obs, n_mkts = window.shape
    if not np.isfinite(window).all():
        raise InsufficientHistoryError("lead-lag window contains undefined rows")
    sd = window.std(axis=0)
    live = sd > EPS_VOL
    if not live.any():
        raise DataError("all markets constant over the lead-lag window")
    if not live.all():
        log.warning("skipping constant market(s) %s in lead-lag window", np.flatnonzero(~live).tolist())
    z = np.zeros_like(window)
    z[:, live] = (window[:, live] - window[:, live].mean(axis=0)) / sd[live]

    if method is Method.LEVY:
        values = levy_matrix(z)
        values[~live, :] = 0.0
        values[:, ~live] = 0.0
        return values

    inputs = [_dtw_inputs(z[:, m], method, descriptor_length) if live[m] else None for m in range(n_mkts)]
    values = np.zeros((n_mkts, n_mkts))
    for i in range(n_mkts):
        for j in range(i + 1, n_mkts):
            if inputs[i] is None or inputs[j] is None:
                continue
            lag = float(_dtw_lag(inputs[i], inputs[j]))
            values[i, j] = lag
            values[j, i] = -lag
    return values


def leadlag_matrix(
    panel: PricePanel,
    t: int | pd.Timestamp,
    lookback: int,
    method: Method | str,
    descriptor_length: int = 11,
) -> LeadLagMatrix:
    """Lead-lag matrix from the ``lookback`` scaled-delta rows ending at ``t``."""
    method = Method(method)
    if not isinstance(t, (int, np.integer)):
        t = panel.dates.get_loc(pd.Timestamp(t))
    start = t - lookback + 1
    if start < 0:
        raise InsufficientHistoryError(f"need {lookback} rows ending at row {t}")
    window = panel.scaled_deltas[start : t + 1]
    values = leadlag_from_window(window, method, descriptor_length)
    return LeadLagMatrix(panel.dates[t], lookback, method, values, tuple(panel.market_ids))


def leadlag_series(
    panel: PricePanel,
    rows: Sequence[int],
    lookbacks: Sequence[int],
    method: Method | str,
    descriptor_length: int = 11,
) -> dict[int, list[np.ndarray]]:
    """Lead-lag matrices for several rows and lookbacks, keyed by row."""
    return {
        t: [leadlag_matrix(panel, t, d, method, descriptor_length).values for d in lookbacks]
        for t in rows
    }
