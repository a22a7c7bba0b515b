"""End-to-end strategy: features, networks, positions and pnl for one model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .backtest import PerformanceReport, PnlFrame, pnl_frame, report_for
from .errors import ConfigError, DataError, InsufficientHistoryError
from .graph import GraphHyperParams, learn_graph, normalize_graph
from .leadlag import Method, leadlag_from_window
from .market_data import PricePanel
from .signals import LAMBDA, SIGMA_TARGET, SLOW_RATIO, SPEEDS, network_feature, oscillators, position_signal

log = logging.getLogger(__name__)

LOOKBACK = 132
LOOKBACK_GRID = (22, 44, 66, 88, 110, 132)
DESCRIPTOR_LENGTH = 11
GAMMA = 1e8

BASELINE = "MACD"
MODEL_NAMES = (BASELINE,) + tuple(
    f"NMM-{m.value}{suffix}" for m in (Method.DTW, Method.DDTW, Method.SDTW, Method.SDDTW, Method.LEVY) for suffix in ("", "-E")
)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    method: Method | None = None
    ensemble: bool = False

    @classmethod
    def from_name(cls, name: str) -> "ModelSpec":
        key = name.strip().upper()
        if key == BASELINE:
            return cls(BASELINE)
        if key not in MODEL_NAMES:
            raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
        body = key[len("NMM-"):]
        ensemble = body.endswith("-E")
        return cls(key, Method(body[:-2] if ensemble else body), ensemble)

    @property
    def is_network(self) -> bool:
        return self.method is not None


@dataclass(frozen=True)
class StrategyParams:
    speeds: tuple[int, ...] = SPEEDS
    slow_ratio: float = SLOW_RATIO
    lam: float = LAMBDA
    sigma_target: float = SIGMA_TARGET
    gamma: float = GAMMA
    lookback: int = LOOKBACK
    lookback_grid: tuple[int, ...] = LOOKBACK_GRID
    descriptor_length: int = DESCRIPTOR_LENGTH
    graph: GraphHyperParams = field(default_factory=GraphHyperParams)
    refresh: int = 1

    def __post_init__(self):
        if not self.speeds or min(self.speeds) < 1:
            raise ConfigError("speeds must be a non-empty set of integers >= 1")
        if self.descriptor_length % 2 == 0 or self.descriptor_length < 3:
            raise ConfigError("descriptor_length must be odd and >= 3")
        if self.lookback < 2 or min(self.lookback_grid) < 2:
            raise ConfigError("lookbacks must be >= 2")
        if self.refresh < 1:
            raise ConfigError("refresh must be >= 1")
        if not self.gamma > 0 or not self.sigma_target > 0:
            raise ConfigError("gamma and sigma_target must be positive")

    def lookbacks_for(self, model: ModelSpec) -> tuple[int, ...]:
        if not model.is_network:
            return ()
        return tuple(self.lookback_grid) if model.ensemble else (self.lookback,)

    def max_lookback(self, models: Sequence[ModelSpec]) -> int:
        return max((max(self.lookbacks_for(m)) for m in models if m.is_network), default=1)


@dataclass
class LeadLagCache:
    """Lead-lag matrices keyed by ``(method, lookback, row)``; shared between models on one panel."""

    panel: PricePanel
    descriptor_length: int = DESCRIPTOR_LENGTH
    store: dict = field(default_factory=dict)

    def get(self, method: Method, lookback: int, row: int) -> np.ndarray:
        key = (method, lookback, row)
        if key not in self.store:
            start = row - lookback + 1
            if start < 0:
                raise InsufficientHistoryError(f"need {lookback} rows ending at row {row}")
            window = self.panel.scaled_deltas[start : row + 1]
            self.store[key] = leadlag_from_window(window, method, self.descriptor_length)
        return self.store[key]


@dataclass(frozen=True)
class ModelRun:
    model: str
    positions: np.ndarray
    pnl: PnlFrame
    report: PerformanceReport
    start: int


def evaluation_start(panel: PricePanel, params: StrategyParams, models: Sequence[ModelSpec]) -> int:
    """First row at which every model in ``models`` can form a position."""
    start = panel.first_defined_row() + params.max_lookback(models) - 1
    if start >= panel.T - 2:
        raise InsufficientHistoryError(
            f"panel of {panel.T} rows is too short for lookback {params.max_lookback(models)}"
        )
    return start


def network_schedule(start: int, stop: int, refresh: int) -> np.ndarray:
    return np.arange(start, stop, refresh)


def networks(
    panel: PricePanel,
    model: ModelSpec,
    params: StrategyParams,
    rows: Sequence[int],
    cache: LeadLagCache | None = None,
) -> dict[int, np.ndarray]:
    """Normalised ensemble network for each row in ``rows``.

    A row whose lead-lag windows are unusable keeps the previous network;
    rows before the first usable one are absent.
    """
    cache = cache or LeadLagCache(panel, params.descriptor_length)
    out: dict[int, np.ndarray] = {}
    prev = None
    for t in rows:
        try:
            graphs = [learn_graph(cache.get(model.method, d, t), params.graph) for d in params.lookbacks_for(model)]
            prev = normalize_graph(sum(graphs) / len(graphs))
        except (InsufficientHistoryError, DataError) as exc:
            log.info("row %d: keeping previous network (%s)", t, exc)
        if prev is not None:
            out[t] = prev
    return out


def compute_features(
    panel: PricePanel,
    model: ModelSpec,
    params: StrategyParams,
    start: int,
    cache: LeadLagCache | None = None,
    osc: np.ndarray | None = None,
) -> np.ndarray:
    """``T x M x K`` feature tensor; NaN outside ``[start, T)`` or where undefined."""
    if osc is None:
        osc = oscillators(panel.scaled_prices, params.speeds, params.slow_ratio).values
    feats = np.full_like(osc, np.nan)
    if not model.is_network:
        feats[start:] = osc[start:]
        return feats
    rows = network_schedule(start, panel.T, params.refresh)
    nets = networks(panel, model, params, rows, cache)
    current = None
    for t in range(start, panel.T):
        current = nets.get(t, current)
        if current is None:
            continue
        # markets with undefined oscillators drop out of their neighbours' sums
        feats[t] = network_feature(np.nan_to_num(osc[t], nan=0.0), current)
        feats[t][~np.isfinite(osc[t]).all(axis=1)] = np.nan
    return feats


def positions_from_features(panel: PricePanel, features: np.ndarray, params: StrategyParams) -> np.ndarray:
    pos = np.zeros((panel.T, panel.M))
    for t in range(panel.T):
        if np.isnan(features[t]).all():
            continue
        pos[t] = position_signal(
            features[t], panel.vol22[t], panel.point_value[t], panel.fx[t],
            params.gamma, params.sigma_target, params.lam, n_markets=panel.M,
        )
    return pos


def run_model(
    panel: PricePanel,
    model: ModelSpec | str,
    params: StrategyParams,
    *,
    start: int | None = None,
    stop: int | None = None,
    cache: LeadLagCache | None = None,
    osc: np.ndarray | None = None,
) -> ModelRun:
    """Run one model and report on rows ``[start, stop)``.

    Positions before ``start`` are flat, so the first trade's cost is included.
    """
    model = ModelSpec.from_name(model) if isinstance(model, str) else model
    if start is None:
        start = evaluation_start(panel, params, [model])
    stop = panel.T if stop is None else stop
    feats = compute_features(panel, model, params, start, cache, osc)
    pos = positions_from_features(panel, feats, params)
    pos[stop:] = 0.0
    pnl = pnl_frame(panel, pos, params.gamma)
    window = PnlFrame(
        pnl.dates[start:stop], pnl.markets, pnl.gross[start:stop], pnl.cost[start:stop], pnl.net[start:stop], pnl.gamma
    )
    return ModelRun(model.name, pos, window, report_for(window), start)


def run_models(
    panel: PricePanel,
    models: Sequence[ModelSpec | str],
    params: StrategyParams,
    *,
    start: int | None = None,
    stop: int | None = None,
) -> dict[str, ModelRun]:
    """Run several models on a common evaluation window with a shared lead-lag cache."""
    specs = [ModelSpec.from_name(m) if isinstance(m, str) else m for m in models]
    if start is None:
        start = evaluation_start(panel, params, specs)
    cache = LeadLagCache(panel, params.descriptor_length)
    osc = oscillators(panel.scaled_prices, params.speeds, params.slow_ratio).values
    return {m.name: run_model(panel, m, params, start=start, stop=stop, cache=cache, osc=osc) for m in specs}


def with_graph(params: StrategyParams, alpha: float, beta: float) -> StrategyParams:
    return replace(params, graph=replace(params.graph, alpha=alpha, beta=beta))
