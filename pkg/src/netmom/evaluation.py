"""Bootstrap resampling, hyperparameter search and significance tests."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .backtest import HORIZONS, PerformanceReport, diversification, horizon_skewness, long_short_split
from .errors import ConfigError, ConvergenceError, DataError, NetmomError
from .market_data import PricePanel, assemble_panel
from .pipeline import BASELINE, LeadLagCache, ModelSpec, StrategyParams, evaluation_start, run_model, with_graph
from .signals import oscillators

log = logging.getLogger(__name__)

PARAM_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
BLOCK_LENGTH = 22
N_RESAMPLES = 100
EXACT_WILCOXON_MAX_N = 25


# --------------------------------------------------------------------------
# stationary bootstrap
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = N_RESAMPLES
    expected_block_length: float = BLOCK_LENGTH
    seed: int = 0
    resample_length: int | None = None

    def __post_init__(self):
        if self.n_resamples < 1:
            raise ConfigError("n_resamples must be >= 1")
        if self.expected_block_length < 1:
            raise ConfigError("expected_block_length must be >= 1")
        if self.resample_length is not None and self.resample_length < 2:
            raise ConfigError("resample_length must be >= 2")

    def rng(self, index: int) -> np.random.Generator:
        """Independent PCG64 stream for resample ``index``."""
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, index])))


def bootstrap_indices(n: int, length: int, block_length: float, rng: np.random.Generator) -> np.ndarray:
    """Row indices for one stationary-bootstrap sample of ``length`` rows from ``n``.

    Blocks start uniformly at random, have geometric lengths with mean
    ``block_length`` and wrap around the end of the series.
    """
    if n < 2:
        raise DataError("need at least two rows to bootstrap")
    out = np.empty(length, dtype=np.int64)
    filled = 0
    p = 1.0 / block_length
    while filled < length:
        start = rng.integers(n)
        size = min(int(rng.geometric(p)), length - filled)
        out[filled : filled + size] = (start + np.arange(size)) % n
        filled += size
    return out


def block_lengths(indices: np.ndarray, n: int) -> np.ndarray:
    """Lengths of the runs of consecutive (circular) source rows in ``indices``."""
    breaks = np.flatnonzero(np.diff(indices) % n != 1) + 1
    return np.diff(np.concatenate([[0], breaks, [len(indices)]]))


def resample_panel(panel: PricePanel, indices: np.ndarray, source_rows: np.ndarray) -> PricePanel:
    """Panel whose row ``k`` is original row ``source_rows[indices[k]]``.

    Raw deltas, volatility, point values and fx move together so every row
    keeps its original scaled delta; prices are rebuilt by accumulation.
    The date labels are the first ``len(indices)`` source dates.
    """
    rows = np.asarray(source_rows)[indices]
    deltas = panel.deltas[rows]
    base = panel.prices[source_rows[0]] - panel.deltas[source_rows[0]]
    prices = base + np.cumsum(deltas, axis=0)
    if len(indices) <= len(source_rows):
        dates = panel.dates[source_rows[: len(indices)]]
    else:
        dates = pd.bdate_range(panel.dates[source_rows[0]], periods=len(indices))
    return assemble_panel(
        dates,
        panel.markets,
        prices,
        deltas=deltas,
        vol22=panel.vol22[rows],
        point_value=panel.point_value[rows],
        fx=panel.fx[rows],
        span=panel.span,
    )


def source_rows(panel: PricePanel, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows in ``[start, stop)`` where every market has a scaled delta."""
    ok = np.isfinite(panel.scaled_deltas).all(axis=1)
    ok[:start] = False
    if stop is not None:
        ok[stop:] = False
    rows = np.flatnonzero(ok)
    if len(rows) < 2:
        raise DataError("fewer than two usable rows to bootstrap")
    return rows


def stationary_bootstrap(panel: PricePanel, config: BootstrapConfig, index: int, rows: np.ndarray | None = None) -> PricePanel:
    rows = source_rows(panel) if rows is None else rows
    length = config.resample_length or len(rows)
    idx = bootstrap_indices(len(rows), length, config.expected_block_length, config.rng(index))
    return resample_panel(panel, idx, rows)


# --------------------------------------------------------------------------
# significance tests
# --------------------------------------------------------------------------

def _wilcoxon_exact_sf(doubled_ranks: np.ndarray, observed: int) -> float:
    """P(W >= observed) under random signs; ranks are doubled so midranks are integers."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return float(counts[observed:].sum() / counts.sum())


def wilcoxon_one_sided(diffs, method: str = "auto") -> float:
    """p-value of the signed-rank test against ``median(diffs) > 0``.

    Zeros are dropped and ties get midranks.  ``method`` is ``"exact"``,
    ``"approx"`` (normal with continuity and tie correction) or ``"auto"``
    (exact up to 25 non-zero differences).
    """
    d = np.asarray(diffs, dtype=float)
    if not np.isfinite(d).all():
        raise DataError("differences must be finite")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DataError("all paired differences are zero")
    ranks = stats.rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "approx"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(int)
        return _wilcoxon_exact_sf(doubled, int(round(2 * w_plus)))
    if method != "approx":
        raise ValueError(f"unknown method {method!r}")
    _, tie_counts = np.unique(ranks, return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return float(stats.norm.sf(z))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float


def ks_one_sided(sample_macd, sample_nmm) -> KSResult:
    """One-sided two-sample KS test of ``F_macd(x) > F_nmm(x)`` somewhere.

    A large statistic means the NMM sample sits to the right of the MACD one.
    """
    a = np.sort(np.asarray(sample_macd, dtype=float))
    b = np.sort(np.asarray(sample_nmm, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise DataError("KS samples must be non-empty")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / len(a)
    fb = np.searchsorted(b, pooled, side="right") / len(b)
    d = float(max(0.0, np.max(fa - fb)))
    n, m = len(a), len(b)
    return KSResult(d, float(min(1.0, math.exp(-2.0 * n * m * d * d / (n + m)))))


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GridResult:
    alpha: float
    beta: float
    sharpe: dict  # (alpha, beta) -> in-sample net Sharpe or None


def grid_search(
    panel: PricePanel,
    model: ModelSpec | str,
    params: StrategyParams,
    alpha_grid: Sequence[float] = PARAM_GRID,
    beta_grid: Sequence[float] = PARAM_GRID,
    *,
    start: int | None = None,
    stop: int | None = None,
) -> GridResult:
    """Pick the ``(alpha, beta)`` with the best in-sample net Sharpe.

    Ties go to the larger ``beta``, then the larger ``alpha``.  Candidates
    whose solver fails or whose Sharpe is undefined are skipped.
    """
    model = ModelSpec.from_name(model) if isinstance(model, str) else model
    if not model.is_network:
        raise ConfigError("grid search applies to network models only")
    alphas = sorted(set(float(a) for a in alpha_grid))
    betas = sorted(set(float(b) for b in beta_grid))
    if not alphas or not betas:
        raise ConfigError("alpha and beta grids must be non-empty")
    if start is None:
        start = evaluation_start(panel, params, [model])
    cache = LeadLagCache(panel, params.descriptor_length)
    osc = oscillators(panel.scaled_prices, params.speeds, params.slow_ratio).values
    scores: dict = {}
    for alpha, beta in itertools.product(alphas, betas):
        try:
            rep = run_model(panel, model, with_graph(params, alpha, beta), start=start, stop=stop, cache=cache, osc=osc).report
            scores[(alpha, beta)] = rep.sharpe
        except (ConvergenceError, ValueError) as exc:
            log.warning("grid point alpha=%g beta=%g skipped: %s", alpha, beta, exc)
            scores[(alpha, beta)] = None
    valid = [(s, b, a) for (a, b), s in scores.items() if s is not None]
    if not valid:
        raise ConvergenceError("no feasible grid point")
    _, beta, alpha = max(valid)
    return GridResult(alpha, beta, scores)


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResampleResult:
    index: int
    reports: dict  # model -> PerformanceReport
    long: dict
    short: dict
    skewness: dict  # model -> {horizon: skew}
    correlation: np.ndarray
    agreement: np.ndarray
    opposing_gain: dict  # model -> annualised gain over baseline on opposing days
    opposing_days: dict


@dataclass(frozen=True)
class ExperimentReport:
    models: tuple[str, ...]
    resamples: tuple[ResampleResult, ...]
    params: dict  # model -> StrategyParams actually used
    seed: int

    def sharpes(self, model: str) -> np.ndarray:
        return np.array([np.nan if r.reports[model].sharpe is None else r.reports[model].sharpe for r in self.resamples])

    def summary(self) -> pd.DataFrame:
        return _mean_reports({m: [r.reports[m] for r in self.resamples] for m in self.models})

    def long_short(self) -> pd.DataFrame:
        frames = []
        for side in ("long", "short"):
            f = _mean_reports({m: [getattr(r, side)[m] for r in self.resamples] for m in self.models})
            f.insert(0, "side", side)
            frames.append(f)
        return pd.concat(frames)

    def pvalues(self) -> pd.DataFrame:
        rows = []
        if BASELINE not in self.models:
            return pd.DataFrame(columns=["model", "mean_sharpe_diff", "wilcoxon_p", "ks_statistic", "ks_p"])
        base = self.sharpes(BASELINE)
        for m in self.models:
            if m == BASELINE:
                continue
            s = self.sharpes(m)
            ok = np.isfinite(s) & np.isfinite(base)
            diffs = s[ok] - base[ok]
            try:
                wp = wilcoxon_one_sided(diffs)
            except DataError:
                wp = None
            ks = ks_one_sided(base[ok], s[ok]) if ok.any() else KSResult(float("nan"), float("nan"))
            rows.append(
                {"model": m, "mean_sharpe_diff": float(diffs.mean()) if len(diffs) else None, "wilcoxon_p": wp,
                 "ks_statistic": ks.statistic, "ks_p": ks.pvalue}
            )
        return pd.DataFrame(rows).set_index("model")

    def diversification(self) -> pd.DataFrame:
        corr = np.nanmean([r.correlation for r in self.resamples], axis=0)
        agree = np.mean([r.agreement for r in self.resamples], axis=0)
        rows = []
        for i, a in enumerate(self.models):
            for j, b in enumerate(self.models):
                row = {"model_a": a, "model_b": b, "correlation": corr[i, j], "sign_agreement": agree[i, j]}
                if b == BASELINE and a != BASELINE:
                    gains = [r.opposing_gain[a] for r in self.resamples if r.opposing_gain[a] is not None]
                    row["opposing_day_gain"] = float(np.mean(gains)) if gains else None
                    row["opposing_days"] = float(np.mean([r.opposing_days[a] for r in self.resamples]))
                rows.append(row)
        return pd.DataFrame(rows)

    def skewness_horizons(self) -> pd.DataFrame:
        out = {}
        for m in self.models:
            out[m] = {
                h: _mean_or_none([r.skewness[m][h] for r in self.resamples]) for h in HORIZONS
            }
        return pd.DataFrame(out).T

    def sharpe_quantiles(self) -> pd.DataFrame:
        q = (0.0, 0.25, 0.5, 0.75, 1.0)
        labels = ("min", "q25", "median", "q75", "max")
        return pd.DataFrame(
            {m: dict(zip(labels, np.nanquantile(self.sharpes(m), q))) for m in self.models}
        ).T


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _mean_reports(reports: dict) -> pd.DataFrame:
    cols = PerformanceReport.metric_names()
    return pd.DataFrame(
        {m: {c: _mean_or_none([getattr(r, c) for r in reps]) for c in cols} for m, reps in reports.items()}
    ).T


def _run_resample(panel: PricePanel, models: Sequence[str], params: dict, boot: BootstrapConfig, rows: np.ndarray, index: int) -> ResampleResult:
    sample = stationary_bootstrap(panel, boot, index, rows)
    specs = [ModelSpec.from_name(m) for m in models]
    common = StrategyParams() if not params else next(iter(params.values()))
    start = evaluation_start(sample, common, specs)
    cache = LeadLagCache(sample, common.descriptor_length)
    osc = oscillators(sample.scaled_prices, common.speeds, common.slow_ratio).values
    runs = {s.name: run_model(sample, s, params[s.name], start=start, cache=cache, osc=osc) for s in specs}

    reports = {m: r.report for m, r in runs.items()}
    long, short = {}, {}
    for m, r in runs.items():
        long[m], short[m] = long_short_split(r.positions[start:], r.pnl)
    skew = {m: horizon_skewness(r.pnl.returns.to_numpy()) for m, r in runs.items()}
    k = len(models)
    corr = np.full((k, k), np.nan)
    agree = np.ones((k, k))
    gains, days = {}, {}
    for i, a in enumerate(models):
        for j, b in enumerate(models):
            ra, rb = runs[a], runs[b]
            div = diversification(ra.pnl.returns, rb.pnl.returns, ra.positions[start:], rb.positions[start:])
            corr[i, j] = np.nan if div.correlation is None else div.correlation
            agree[i, j] = div.sign_agreement
            if b == BASELINE:
                gains[a], days[a] = div.opposing_day_gain, div.opposing_days
    return ResampleResult(index, reports, long, short, skew, corr, agree, gains, days)


_WORKER: dict = {}


def _init_worker(panel, models, params, boot, rows):
    _WORKER.update(panel=panel, models=models, params=params, boot=boot, rows=rows)


def _worker(index: int) -> ResampleResult:
    w = _WORKER
    try:
        return _run_resample(w["panel"], w["models"], w["params"], w["boot"], w["rows"], index)
    except NetmomError as exc:
        raise type(exc)(f"resample {index}: {exc}") from exc
    except Exception as exc:
        raise NetmomError(f"resample {index}: {type(exc).__name__}: {exc}") from exc


def run_experiment(
    panel: PricePanel,
    models: Sequence[str],
    params: StrategyParams | dict,
    boot: BootstrapConfig,
    *,
    jobs: int = 1,
    rows: np.ndarray | None = None,
) -> ExperimentReport:
    """Run every model on every bootstrap resample and collect the results.

    ``params`` is one :class:`StrategyParams` for all models or a mapping
    from model name to its own parameters (e.g. per-model grid winners).
    Results are reduced in resample order, so they do not depend on ``jobs``.
    """
    models = tuple(ModelSpec.from_name(m).name for m in models)
    if len(set(models)) != len(models):
        raise ConfigError("duplicate model names")
    per_model = params if isinstance(params, dict) else {m: params for m in models}
    missing = [m for m in models if m not in per_model]
    if missing:
        raise ConfigError(f"no strategy parameters for {', '.join(missing)}")
    rows = source_rows(panel) if rows is None else rows
    init = (panel, models, per_model, boot, rows)
    if jobs <= 1:
        _init_worker(*init)
        results = [_worker(i) for i in range(boot.n_resamples)]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=init) as pool:
            results = list(pool.map(_worker, range(boot.n_resamples)))
    return ExperimentReport(models, tuple(results), per_model, boot.seed)
