import itertools

import numpy as np
import pytest
from scipy import stats

from netmom.errors import ConfigError, ConvergenceError, DataError, NetmomError
from netmom.evaluation import (
    BootstrapConfig,
    block_lengths,
    bootstrap_indices,
    grid_search,
    ks_one_sided,
    resample_panel,
    run_experiment,
    source_rows,
    stationary_bootstrap,
    wilcoxon_one_sided,
)
from netmom.graph import GraphHyperParams
from netmom.pipeline import StrategyParams
from netmom.synthetic import spillover_panel, trend_panel

FAST = StrategyParams(lookback=30, refresh=5)


# ---------------------------------------------------------------- bootstrap

def test_mean_block_length_matches_geometric_law():
    rng = np.random.default_rng(5)
    idx = bootstrap_indices(10**9, 22 * 100_000, 22, rng)
    lengths = block_lengths(idx, 10**9)
    assert len(lengths) > 90_000
    assert lengths[:-1].mean() == pytest.approx(22, rel=0.02)


def test_unit_block_length_is_iid_rows():
    idx = bootstrap_indices(50, 20_000, 1.0, np.random.default_rng(3))
    successor = np.mean(np.diff(idx) % 50 == 1)
    se = np.sqrt(0.02 * 0.98 / len(idx))
    assert abs(successor - 1 / 50) < 3 * se


def test_blocks_wrap_around():
    idx = bootstrap_indices(5, 2000, 50.0, np.random.default_rng(0))
    steps = np.diff(idx) % 5
    assert np.any((idx[:-1] == 4) & (idx[1:] == 0))
    assert np.all(idx < 5) and np.all(idx >= 0)
    assert np.mean(steps == 1) > 0.9


def test_bootstrap_is_deterministic_per_index():
    cfg = BootstrapConfig(seed=11)
    a = bootstrap_indices(100, 100, 22, cfg.rng(3))
    b = bootstrap_indices(100, 100, 22, cfg.rng(3))
    c = bootstrap_indices(100, 100, 22, cfg.rng(4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_resampled_rows_are_original_rows():
    panel = trend_panel(T=200, M=3, seed=1)
    rows = source_rows(panel)
    sample = stationary_bootstrap(panel, BootstrapConfig(seed=2), 0, rows)
    original = {tuple(r) for r in np.column_stack([panel.deltas, panel.vol22, panel.scaled_deltas])[rows]}
    resampled = np.column_stack([sample.deltas, sample.vol22, sample.scaled_deltas])
    assert all(tuple(r) in original for r in resampled)
    assert sample.T == len(rows)


def test_resample_keeps_cross_section_together():
    panel = trend_panel(T=120, M=4, seed=8)
    rows = source_rows(panel)
    idx = bootstrap_indices(len(rows), 200, 5, np.random.default_rng(1))
    sample = resample_panel(panel, idx, rows)
    np.testing.assert_array_equal(sample.deltas, panel.deltas[rows[idx]])
    np.testing.assert_allclose(np.diff(sample.prices, axis=0), sample.deltas[1:], atol=1e-9)


def test_bootstrap_needs_two_rows():
    with pytest.raises(DataError):
        bootstrap_indices(1, 10, 5, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        BootstrapConfig(n_resamples=0)
    with pytest.raises(ConfigError):
        BootstrapConfig(expected_block_length=0.5)


# ---------------------------------------------------------------- Wilcoxon

def wilcoxon_enumeration(d):
    d = np.asarray(d, float)
    d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))
    observed = ranks[d > 0].sum()
    hits = sum(ranks[np.array(signs, bool)].sum() >= observed - 1e-9 for signs in itertools.product([0, 1], repeat=len(d)))
    return hits / 2 ** len(d)


def test_wilcoxon_examples():
    assert wilcoxon_one_sided([1, 2, 3, 4, 5]) == pytest.approx(1 / 32)
    assert wilcoxon_one_sided([1, -1]) >= 0.5
    with pytest.raises(DataError):
        wilcoxon_one_sided([0, 0, 0])


def test_wilcoxon_exact_matches_enumeration(rng):
    for n in range(1, 13):
        for _ in range(3):
            d = np.round(rng.standard_normal(n), 1)  # rounding creates ties and zeros
            if np.all(d == 0):
                continue
            assert wilcoxon_one_sided(d, "exact") == pytest.approx(wilcoxon_enumeration(d), abs=1e-12)


def test_wilcoxon_matches_scipy_without_ties(rng):
    d = rng.standard_normal(20) + 0.3
    want = stats.wilcoxon(d, alternative="greater", method="exact").pvalue
    assert wilcoxon_one_sided(d) == pytest.approx(want, rel=1e-10)


def test_wilcoxon_branches_agree_at_25(rng):
    for _ in range(10):
        d = rng.standard_normal(25) + 0.2
        assert abs(wilcoxon_one_sided(d, "exact") - wilcoxon_one_sided(d, "approx")) < 0.005


# ---------------------------------------------------------------- KS

def ks_brute(a, b):
    best = 0.0
    for x in np.concatenate([a, b]):
        best = max(best, np.mean(a <= x) - np.mean(b <= x))
    return best


def test_ks_examples(rng):
    a = rng.standard_normal(30)
    same = ks_one_sided(a, a)
    assert same.statistic == 0.0 and same.pvalue == 1.0
    sep = ks_one_sided(np.arange(10.0), np.arange(10.0) + 100)
    assert sep.statistic == 1.0
    assert sep.pvalue == pytest.approx(np.exp(-2 * 100 / 20))


def test_ks_matches_brute_force_and_scipy(rng):
    for _ in range(30):
        a = np.round(rng.standard_normal(int(rng.integers(1, 51))), 1)
        b = np.round(rng.standard_normal(int(rng.integers(1, 51))) + 0.3, 1)
        res = ks_one_sided(a, b)
        assert res.statistic == pytest.approx(ks_brute(a, b), abs=1e-12)
        assert res.statistic == pytest.approx(stats.ks_2samp(a, b, alternative="greater").statistic, abs=1e-12)


def test_ks_monotone_invariance(rng):
    a, b = rng.standard_normal(40), rng.standard_normal(35) + 0.5
    assert ks_one_sided(np.exp(a), np.exp(b)).statistic == ks_one_sided(a, b).statistic
    assert ks_one_sided(a**3, b**3).statistic == ks_one_sided(a, b).statistic


def test_ks_rejects_empty():
    with pytest.raises(DataError):
        ks_one_sided([], [1.0])


# ---------------------------------------------------------------- grid search

@pytest.fixture(scope="module")
def spill():
    return spillover_panel(T=400, seed=3)


def test_grid_single_point(spill):
    res = grid_search(spill, "NMM-LEVY", FAST, [0.1], [1.0])
    assert (res.alpha, res.beta) == (0.1, 1.0)


def test_grid_duplicates_are_ignored(spill):
    a = grid_search(spill, "NMM-LEVY", FAST, [0.1, 1, 10], [0.1, 1])
    b = grid_search(spill, "NMM-LEVY", FAST, [10, 0.1, 1, 1, 10], [1, 0.1, 1])
    assert (a.alpha, a.beta) == (b.alpha, b.beta)
    assert a.sharpe == b.sharpe


def test_grid_winner_beats_median(spill):
    res = grid_search(spill, "NMM-LEVY", FAST, [0.01, 1, 100], [0.01, 1, 100])
    values = [v for v in res.sharpe.values() if v is not None]
    assert res.sharpe[(res.alpha, res.beta)] == max(values)
    assert res.sharpe[(res.alpha, res.beta)] >= np.median(values)


def test_grid_rejects_baseline_and_infeasible(spill):
    with pytest.raises(ConfigError):
        grid_search(spill, "MACD", FAST, [1], [1])
    bad = StrategyParams(lookback=30, refresh=5, graph=GraphHyperParams(max_iters=1))
    with pytest.raises(ConvergenceError, match="no feasible"):
        grid_search(spill, "NMM-LEVY", bad, [0.1], [0.01])


# ---------------------------------------------------------------- experiment

@pytest.fixture(scope="module")
def trend():
    return trend_panel(T=260, M=3, drift=0.1, seed=4, half_spread=0.01)


def test_single_resample_single_model(trend):
    rep = run_experiment(trend, ["MACD"], FAST, BootstrapConfig(n_resamples=1, seed=1))
    assert len(rep.resamples) == 1
    assert list(rep.resamples[0].reports) == ["MACD"]
    assert list(rep.summary().index) == ["MACD"]


def test_experiment_deterministic_and_mean_aggregation(trend):
    boot = BootstrapConfig(n_resamples=3, seed=9)
    a = run_experiment(trend, ["MACD", "NMM-LEVY"], FAST, boot)
    b = run_experiment(trend, ["MACD", "NMM-LEVY"], FAST, boot)
    for m in ("MACD", "NMM-LEVY"):
        assert a.sharpes(m).tobytes() == b.sharpes(m).tobytes()
        assert abs(a.summary().loc[m, "sharpe"] - a.sharpes(m).mean()) < 1e-12
    assert a.pvalues().equals(b.pvalues())
    assert a.diversification().equals(b.diversification())


def test_experiment_parallel_matches_serial(trend):
    boot = BootstrapConfig(n_resamples=2, seed=9)
    a = run_experiment(trend, ["MACD", "NMM-LEVY"], FAST, boot, jobs=1)
    b = run_experiment(trend, ["MACD", "NMM-LEVY"], FAST, boot, jobs=2)
    for m in a.models:
        assert a.sharpes(m).tobytes() == b.sharpes(m).tobytes()


def test_experiment_report_tables(trend):
    rep = run_experiment(trend, ["MACD", "NMM-LEVY"], FAST, BootstrapConfig(n_resamples=2, seed=1))
    assert list(rep.pvalues().index) == ["NMM-LEVY"]
    div = rep.diversification()
    assert len(div) == 4
    diag = div[div.model_a == div.model_b]
    np.testing.assert_allclose(diag.sign_agreement, 1.0)
    assert set(rep.skewness_horizons().columns) >= {"1d", "1m", "1y"}
    assert set(rep.long_short().side) == {"long", "short"}


def test_failed_resample_names_its_index(trend):
    bad = StrategyParams(lookback=30, refresh=5, graph=GraphHyperParams(max_iters=1))
    with pytest.raises(NetmomError, match=r"resample 0"):
        run_experiment(trend, ["NMM-LEVY"], bad, BootstrapConfig(n_resamples=2, seed=1))


def test_experiment_config_errors(trend):
    with pytest.raises(ConfigError):
        run_experiment(trend, ["MACD", "macd"], FAST, BootstrapConfig(n_resamples=1))
    with pytest.raises(ConfigError):
        run_experiment(trend, ["MACD", "NMM-LEVY"], {"MACD": FAST}, BootstrapConfig(n_resamples=1))
