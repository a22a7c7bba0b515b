import math
from pathlib import Path

import pytest

from netmom.config import bootstrap_config, checksum, defaults, load_config, resolve, strategy_params
from netmom.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_snapshot():
    cfg = defaults()
    s, g, b = cfg["strategy"], cfg["graph"], cfg["bootstrap"]
    assert s["speeds"] == [1, 2, 3, 4, 5, 6]
    assert s["lookback_grid"] == [22, 44, 66, 88, 110, 132]
    assert s["lookback"] == 132
    assert s["descriptor_length"] == 11
    assert s["lambda"] == math.sqrt(2)
    assert s["sigma_target"] == 0.10
    assert s["vol_span"] == 22
    assert s["slow_ratio"] == 3.0
    assert s["refresh"] == 1
    assert g["alpha_grid"] == g["beta_grid"] == [0.001, 0.01, 0.1, 1.0, 10.0, 100.0]
    assert (g["alpha"], g["beta"], g["max_iters"], g["tol"]) == (1.0, 1.0, 20000, 1e-7)
    assert (b["n_resamples"], b["block_length"]) == (100, 22.0)
    assert len(cfg["models"]) == 11


def test_defaults_yaml_matches_schema():
    cfg = load_config(CONFIGS / "defaults.yaml")
    ref = defaults()
    for key in ("strategy", "graph", "bootstrap"):
        assert cfg[key] == ref[key]


def test_missing_field_is_named():
    with pytest.raises(ConfigError, match="missing config field 'models'"):
        resolve({})


def test_unknown_field_is_named():
    with pytest.raises(ConfigError, match="unknown config field 'graph.gamma'"):
        resolve({"models": ["MACD"], "graph": {"gamma": 1}})


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"strategy": {"lookback": 1.5}}, "strategy.lookback"),
        ({"graph": {"alpha": 0}}, "graph.alpha"),
        ({"bootstrap": {"n_resamples": "many"}}, "bootstrap.n_resamples"),
        ({"strategy": {"speeds": []}}, "strategy.speeds"),
        ({"seed": -1}, "seed"),
        ({"data": {"calendar": "weekly"}}, "data.calendar"),
    ],
)
def test_invalid_values_name_the_field(patch, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        resolve({"models": ["MACD"], **patch})


def test_unknown_model_rejected():
    with pytest.raises(ConfigError, match="unknown model"):
        resolve({"models": ["NMM-FOO"]})


def test_model_names_normalised():
    assert resolve({"models": ["macd", "nmm-levy-e"]})["models"] == ["MACD", "NMM-LEVY-E"]


def test_checksum_is_stable_and_sensitive():
    a = resolve({"models": ["MACD"]})
    b = resolve({"models": ["MACD"]})
    assert checksum(a) == checksum(b)
    assert checksum(a) != checksum(resolve({"models": ["MACD"], "seed": 1}))


def test_relative_paths_resolve_against_config_file(tmp_path):
    path = tmp_path / "sub" / "c.yaml"
    path.parent.mkdir()
    path.write_text("models: [MACD]\ndata: {prices: p.csv, contracts: c.csv, cache: x/panel.csv}\noutput_dir: out\n")
    cfg = load_config(path)
    assert cfg["data"]["prices"] == [str(path.parent / "p.csv")]
    assert cfg["data"]["contracts"] == str(path.parent / "c.csv")
    assert cfg["output_dir"] == str(path.parent / "out")


def test_overrides_and_invalid_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("models: [MACD]\n")
    assert load_config(path, {"seed": 42})["seed"] == 42
    path.write_text("models: [MACD\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")


def test_params_builders():
    cfg = resolve({"models": ["MACD"], "graph": {"alpha": 0.1, "beta": 10}, "seed": 5})
    p = strategy_params(cfg)
    assert (p.graph.alpha, p.graph.beta, p.lookback) == (0.1, 10.0, 132)
    boot = bootstrap_config(cfg)
    assert (boot.seed, boot.n_resamples, boot.expected_block_length) == (5, 100, 22.0)


def test_shipped_configs_load():
    for name in ("sample.yaml", "spillover.yaml", "defaults.yaml"):
        load_config(CONFIGS / name)
