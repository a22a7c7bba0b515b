"""``netmom`` command-line interface.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .backtest import long_short_split
from .config import RunManifest, bootstrap_config, checksum, load_config, strategy_params
from .errors import ConfigError, DataError, NetmomError
from .evaluation import grid_search, run_experiment, source_rows
from .market_data import ContractSpec, PricePanel, Sector, assemble_panel, load_panel
from .pipeline import ModelSpec, StrategyParams, evaluation_start, run_model, with_graph
from .reporting import metrics_long, sha256_file, write_csv, write_experiment, write_json
from .synthetic import spillover_panel, trend_panel

log = logging.getLogger("netmom")

CACHE_COLUMNS = ["date", "market", "price", "point_value", "fx", "half_spread", "sector"]
SYNTHETIC = {"spillover": spillover_panel, "trend": trend_panel}


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------
# panel sources
# --------------------------------------------------------------------------

def write_cache(panel: PricePanel, path: Path) -> str:
    """Write the panel's prices and contract data as CSV; return its SHA-256."""
    rows = []
    for t, date in enumerate(panel.dates):
        for m, spec in enumerate(panel.markets):
            rows.append((date.strftime("%Y-%m-%d"), spec.market_id, repr(float(panel.prices[t, m])),
                         repr(float(panel.point_value[t, m])), repr(float(panel.fx[t, m])),
                         repr(float(spec.half_spread)), spec.sector.value))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(CACHE_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    digest = sha256_file(path)
    path.with_name(path.name + ".sha256").write_text(f"{digest}  {path.name}\n")
    return digest


def read_cache(path: Path, span: int) -> PricePanel:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"date": str, "market": str, "sector": str}, float_precision="round_trip")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read panel cache {path}: {exc}") from None
    missing = [c for c in CACHE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    markets = list(dict.fromkeys(frame["market"]))
    wide = {c: frame.pivot(index="date", columns="market", values=c)[markets] for c in ("price", "point_value", "fx")}
    if wide["price"].isna().any().any():
        raise DataError(f"{path}: cache is not a complete date x market table")
    first = frame.groupby("market", sort=False).first()
    specs = [
        ContractSpec(m, point_value=float(first.loc[m, "point_value"]), half_spread=float(first.loc[m, "half_spread"]),
                     sector=Sector(first.loc[m, "sector"]))
        for m in markets
    ]
    return assemble_panel(
        pd.DatetimeIndex(wide["price"].index), specs, wide["price"].to_numpy(),
        point_value=wide["point_value"].to_numpy(), fx=wide["fx"].to_numpy(), span=span,
    )


def source_panel(cfg: dict) -> PricePanel:
    """Build the panel from raw files or the synthetic generator (ignores the cache)."""
    data, span = cfg["data"], cfg["strategy"]["vol_span"]
    if data["synthetic"]:
        spec = dict(data["synthetic"])
        kind = spec.pop("kind", "spillover")
        if kind not in SYNTHETIC:
            raise ConfigError(f"config field 'data.synthetic.kind' must be one of {', '.join(SYNTHETIC)}")
        try:
            panel = SYNTHETIC[kind](**spec)
        except TypeError as exc:
            raise ConfigError(f"config field 'data.synthetic': {exc}") from None
        if span != panel.span:
            panel = assemble_panel(panel.dates, panel.markets, panel.prices, span=span)
        return panel
    if not data["prices"] or not data["contracts"]:
        raise ConfigError("missing config field 'data.prices' / 'data.contracts' (or 'data.synthetic')")
    return load_panel(data["prices"], data["contracts"], calendar=data["calendar"], span=span)


def get_panel(cfg: dict) -> PricePanel:
    cache = cfg["data"]["cache"]
    if cache and Path(cache).exists():
        return read_cache(Path(cache), cfg["strategy"]["vol_span"])
    return source_panel(cfg)


def window_rows(panel: PricePanel, window: dict) -> tuple[int, int]:
    start = 0 if window["start"] is None else int(panel.dates.searchsorted(pd.Timestamp(window["start"]), "left"))
    stop = panel.T if window["end"] is None else int(panel.dates.searchsorted(pd.Timestamp(window["end"]), "right"))
    if stop - start < 2:
        raise DataError(f"window {window['start']}..{window['end']} holds fewer than two panel dates")
    return start, stop


def model_params(panel: PricePanel, cfg: dict, models: list[str], params: StrategyParams) -> tuple[dict, dict]:
    """Per-model strategy parameters, grid-searched on the training window if enabled."""
    out, searched = {}, {}
    start, stop = window_rows(panel, cfg["windows"]["train"])
    for name in models:
        spec = ModelSpec.from_name(name)
        if spec.is_network and cfg["graph"]["grid_search"]:
            first = max(start, evaluation_start(panel, params, [spec]))
            res = grid_search(panel, spec, params, cfg["graph"]["alpha_grid"], cfg["graph"]["beta_grid"],
                              start=first, stop=stop)
            out[name] = with_graph(params, res.alpha, res.beta)
            searched[name] = res
        else:
            out[name] = params
    return out, searched


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _manifest(args, cfg) -> RunManifest:
    return RunManifest(args.command, args.config, cfg["output_dir"], cfg["seed"], __version__, checksum(cfg))


def cmd_ingest(args, cfg) -> int:
    panel = source_panel(cfg)
    target = Path(cfg["data"]["cache"] or Path(cfg["output_dir"]) / "panel.csv")
    digest = write_cache(panel, target)
    print(f"panel T={panel.T} M={panel.M} markets={','.join(panel.market_ids)}")
    print(f"cache {target} sha256={digest}")
    return 0


def cmd_backtest(args, cfg) -> int:
    name = ModelSpec.from_name(args.model or cfg["models"][0]).name
    panel = get_panel(cfg)
    params = strategy_params(cfg)
    per_model, _ = model_params(panel, cfg, [name], params)
    spec = ModelSpec.from_name(name)
    start, stop = window_rows(panel, cfg["windows"]["test"])
    first = max(start, evaluation_start(panel, params, [spec]))
    if first >= stop - 2:
        raise DataError(f"test window ends before {name} has enough history for its longest lookback")
    run = run_model(panel, spec, per_model[name], start=first, stop=stop)
    long_rep, short_rep = long_short_split(run.positions[first:stop], run.pnl)
    man = _manifest(args, cfg)
    out = Path(cfg["output_dir"])
    stem = f"backtest_{name}"
    reports = {name: run.report, f"{name}:long": long_rep, f"{name}:short": short_rep}
    write_csv(metrics_long(reports), out / f"{stem}.csv", man.header())
    daily = pd.DataFrame({"date": run.pnl.dates.strftime("%Y-%m-%d"), "gross": run.pnl.gross_returns.to_numpy(),
                          "cost": run.pnl.cost_returns.to_numpy(), "net": run.pnl.returns.to_numpy()})
    write_csv(daily, out / f"{stem}_daily.csv", man.header())
    g = per_model[name].graph
    write_json({"model": name, "report": run.report.as_dict(), "long": long_rep.as_dict(), "short": short_rep.as_dict(),
                "graph_params": {"alpha": g.alpha, "beta": g.beta}}, out / f"{stem}.json", man.as_dict())
    print(f"{name}: net sharpe={run.report.sharpe} net return={run.report.net_return} -> {out / (stem + '.csv')}")
    return 0


def cmd_gridsearch(args, cfg) -> int:
    panel = get_panel(cfg)
    params = strategy_params(cfg)
    names = [m for m in cfg["models"] if ModelSpec.from_name(m).is_network]
    if not names:
        raise ConfigError("config field 'models' lists no network model to grid-search")
    cfg = {**cfg, "graph": {**cfg["graph"], "grid_search": True}}
    _, searched = model_params(panel, cfg, names, params)
    rows, best = [], {}
    for name, res in searched.items():
        best[name] = {"alpha": res.alpha, "beta": res.beta, "sharpe": res.sharpe[(res.alpha, res.beta)]}
        rows += [{"model": name, "alpha": a, "beta": b, "sharpe": s} for (a, b), s in sorted(res.sharpe.items())]
    man = _manifest(args, cfg)
    out = Path(cfg["output_dir"])
    write_csv(pd.DataFrame(rows), out / "gridsearch.csv", man.header())
    write_json({"best": best}, out / "gridsearch.json", man.as_dict())
    for name, b in best.items():
        print(f"{name}: alpha={b['alpha']} beta={b['beta']} in-sample sharpe={b['sharpe']}")
    return 0


def cmd_experiment(args, cfg) -> int:
    panel = get_panel(cfg)
    params = strategy_params(cfg)
    per_model, _ = model_params(panel, cfg, cfg["models"], params)
    start, stop = window_rows(panel, cfg["windows"]["test"])
    rows = source_rows(panel, start, stop)
    rep = run_experiment(panel, cfg["models"], per_model, bootstrap_config(cfg), jobs=args.jobs, rows=rows)
    man = _manifest(args, cfg)
    written = write_experiment(rep, Path(cfg["output_dir"]), man.header(), man.as_dict())
    print(rep.summary()[["net_return", "vol", "sharpe"]].to_string())
    print(f"wrote {len(written)} files to {cfg['output_dir']}")
    return 0


def cmd_report(args, cfg) -> int:
    path = Path(args.report or Path(cfg["output_dir"]) / "report.json")
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    meta = payload.get("meta", {})
    print(f"seed={meta.get('seed')} config_sha256={meta.get('config_sha256')} version={meta.get('version')}")
    for key in ("summary", "pvalues", "skewness_horizons"):
        if key in payload:
            print(f"\n[{key}]")
            print(pd.DataFrame(payload[key]).T.to_string())
    if "report" in payload:
        print(pd.Series(payload["report"]).to_string())
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "backtest": cmd_backtest,
    "gridsearch": cmd_gridsearch,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for bootstrap resamples")
    parser = _Parser(prog="netmom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netmom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="load prices and write the panel cache")
    bt = sub.add_parser("backtest", parents=[common], help="run one model on the un-resampled panel")
    bt.add_argument("--model", help="model name (default: first model in the config)")
    sub.add_parser("gridsearch", parents=[common], help="in-sample alpha/beta search for network models")
    sub.add_parser("experiment", parents=[common], help="bootstrap comparison of the model zoo")
    rp = sub.add_parser("report", parents=[common], help="print a saved report")
    rp.add_argument("report", nargs="?", help="report.json path (default: <out>/report.json)")
    return parser


def _setup_logging():
    level = os.environ.get("NETMOM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        overrides = {}
        if args.out is not None:
            overrides["output_dir"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.config is None and args.command != "report":
            raise UsageError("--config is required")
        cfg = load_config(args.config, overrides) if args.config else load_config(None, {"models": ["MACD"], **overrides})
        return COMMANDS[args.command](args, cfg)
    except NetmomError as exc:
        print(f"netmom: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
