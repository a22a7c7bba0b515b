"""Experiment configuration: YAML schema, defaults and validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .evaluation import BLOCK_LENGTH, N_RESAMPLES, PARAM_GRID, BootstrapConfig
from .graph import GraphHyperParams
from .market_data import VOL_SPAN
from .pipeline import DESCRIPTOR_LENGTH, GAMMA, LOOKBACK, LOOKBACK_GRID, MODEL_NAMES, ModelSpec, StrategyParams
from .signals import LAMBDA, SIGMA_TARGET, SLOW_RATIO, SPEEDS

REQUIRED = object()

# nested schema: leaf values are defaults; REQUIRED marks mandatory leaves
SCHEMA: dict[str, Any] = {
    "data": {
        "prices": [],
        "contracts": None,
        "calendar": "intersection",
        "cache": None,
        "synthetic": None,
    },
    "windows": {
        "train": {"start": None, "end": None},
        "test": {"start": None, "end": None},
    },
    "models": REQUIRED,
    "strategy": {
        "speeds": list(SPEEDS),
        "slow_ratio": SLOW_RATIO,
        "lambda": LAMBDA,
        "sigma_target": SIGMA_TARGET,
        "gamma": GAMMA,
        "vol_span": VOL_SPAN,
        "lookback": LOOKBACK,
        "lookback_grid": list(LOOKBACK_GRID),
        "descriptor_length": DESCRIPTOR_LENGTH,
        "refresh": 1,
    },
    "graph": {
        "alpha": 1.0,
        "beta": 1.0,
        "grid_search": False,
        "alpha_grid": list(PARAM_GRID),
        "beta_grid": list(PARAM_GRID),
        "max_iters": 20000,
        "tol": 1e-7,
    },
    "bootstrap": {
        "n_resamples": N_RESAMPLES,
        "block_length": BLOCK_LENGTH,
        "resample_length": None,
    },
    "seed": 0,
    "output_dir": "out",
}

# leaves that hold free-form mappings rather than nested schema
OPEN_LEAVES = {("data", "synthetic")}


def _merge(schema: dict, given: dict, path: tuple[str, ...]) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"config field '{'.'.join(path) or '<root>'}' must be a mapping")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config field '{'.'.join(path + (unknown[0],))}'")
    out = {}
    for key, default in schema.items():
        here = path + (key,)
        if isinstance(default, dict) and here not in OPEN_LEAVES:
            out[key] = _merge(default, given.get(key) or {}, here)
        elif key in given:
            out[key] = given[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing config field '{'.'.join(here)}'")
        else:
            out[key] = copy.deepcopy(default)
    return out


def defaults() -> dict:
    """Fully resolved default configuration (``models`` set to the whole zoo)."""
    return resolve({"models": list(MODEL_NAMES)})


def _number(cfg: dict, dotted: str, *, positive=False, integer=False, allow_zero=False):
    node = cfg
    for key in dotted.split("."):
        node = node[key]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(node):
        raise ConfigError(f"config field '{dotted}' must be a finite number")
    if integer and int(node) != node:
        raise ConfigError(f"config field '{dotted}' must be an integer")
    if positive and not (node > 0 or (allow_zero and node == 0)):
        raise ConfigError(f"config field '{dotted}' must be {'non-negative' if allow_zero else 'positive'}")
    return int(node) if integer else float(node)


def _numbers(cfg: dict, dotted: str, *, integer=False) -> list:
    node = cfg
    for key in dotted.split("."):
        node = node[key]
    if not isinstance(node, list) or not node:
        raise ConfigError(f"config field '{dotted}' must be a non-empty list")
    for v in node:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and int(v) != v):
            raise ConfigError(f"config field '{dotted}' must contain {'integers' if integer else 'numbers'}")
    return [int(v) if integer else float(v) for v in node]


def resolve(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and validate every field."""
    cfg = _merge(SCHEMA, raw or {}, ())
    if not isinstance(cfg["models"], list) or not cfg["models"]:
        raise ConfigError("config field 'models' must be a non-empty list")
    cfg["models"] = [ModelSpec.from_name(str(m)).name for m in cfg["models"]]
    s = cfg["strategy"]
    s["speeds"] = _numbers(cfg, "strategy.speeds", integer=True)
    s["lookback_grid"] = _numbers(cfg, "strategy.lookback_grid", integer=True)
    for key in ("slow_ratio", "lambda", "sigma_target", "gamma"):
        s[key] = _number(cfg, f"strategy.{key}", positive=True)
    for key in ("vol_span", "lookback", "descriptor_length", "refresh"):
        s[key] = _number(cfg, f"strategy.{key}", positive=True, integer=True)
    g = cfg["graph"]
    g["alpha"] = _number(cfg, "graph.alpha", positive=True)
    g["beta"] = _number(cfg, "graph.beta", positive=True, allow_zero=True)
    g["alpha_grid"] = _numbers(cfg, "graph.alpha_grid")
    g["beta_grid"] = _numbers(cfg, "graph.beta_grid")
    g["max_iters"] = _number(cfg, "graph.max_iters", positive=True, integer=True)
    g["tol"] = _number(cfg, "graph.tol", positive=True)
    if not isinstance(g["grid_search"], bool):
        raise ConfigError("config field 'graph.grid_search' must be true or false")
    b = cfg["bootstrap"]
    b["n_resamples"] = _number(cfg, "bootstrap.n_resamples", positive=True, integer=True)
    b["block_length"] = _number(cfg, "bootstrap.block_length", positive=True)
    if b["resample_length"] is not None:
        b["resample_length"] = _number(cfg, "bootstrap.resample_length", positive=True, integer=True)
    cfg["seed"] = _number(cfg, "seed", integer=True)
    if cfg["seed"] < 0:
        raise ConfigError("config field 'seed' must be non-negative")
    if cfg["data"]["calendar"] not in ("intersection", "union"):
        raise ConfigError("config field 'data.calendar' must be 'intersection' or 'union'")
    for window in ("train", "test"):
        for edge in ("start", "end"):
            v = cfg["windows"][window][edge]
            if v is not None:
                cfg["windows"][window][edge] = str(v)
    try:
        strategy_params(cfg)
        bootstrap_config(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str | Path | None, overrides: dict | None = None) -> dict:
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        base = path.parent
        data = raw.get("data") if isinstance(raw, dict) else None
        if isinstance(data, dict):
            # relative data paths are taken from the config file's directory
            if isinstance(data.get("prices"), (str, list)):
                prices = [data["prices"]] if isinstance(data["prices"], str) else data["prices"]
                data["prices"] = [str(base / p) for p in prices]
            for key in ("contracts", "cache"):
                if isinstance(data.get(key), str):
                    data[key] = str(base / data[key])
        if isinstance(raw, dict) and isinstance(raw.get("output_dir"), str):
            raw["output_dir"] = str(base / raw["output_dir"])
    for dotted, value in (overrides or {}).items():
        node = raw
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return resolve(raw)


def checksum(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config.

    ``output_dir`` is left out: where results are written does not change them.
    """
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def strategy_params(cfg: dict) -> StrategyParams:
    s, g = cfg["strategy"], cfg["graph"]
    return StrategyParams(
        speeds=tuple(s["speeds"]),
        slow_ratio=s["slow_ratio"],
        lam=s["lambda"],
        sigma_target=s["sigma_target"],
        gamma=s["gamma"],
        lookback=s["lookback"],
        lookback_grid=tuple(s["lookback_grid"]),
        descriptor_length=s["descriptor_length"],
        graph=GraphHyperParams(g["alpha"], g["beta"], g["max_iters"], g["tol"]),
        refresh=s["refresh"],
    )


def bootstrap_config(cfg: dict) -> BootstrapConfig:
    b = cfg["bootstrap"]
    return BootstrapConfig(b["n_resamples"], b["block_length"], cfg["seed"], b["resample_length"])


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    output_dir: str
    seed: int
    version: str
    config_sha256: str

    def header(self) -> str:
        return f"# seed={self.seed}, config_sha256={self.config_sha256}, version={self.version}"

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "version": self.version,
            "config_sha256": self.config_sha256,
        }
