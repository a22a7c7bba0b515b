"""Writing report files with a provenance header."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .backtest import PerformanceReport
from .evaluation import ExperimentReport


def _plain(value):
    """JSON-safe value: NaN becomes null, numpy scalars become Python ones."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        return None if not math.isfinite(float(value)) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(frame: pd.DataFrame, path: Path, header: str, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        frame.to_csv(fh, index=index, lineterminator="\n")
    return path


def write_json(payload: dict, path: Path, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain({"meta": meta, **payload}), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def metrics_long(reports: dict[str, PerformanceReport]) -> pd.DataFrame:
    """One row per (model, metric)."""
    rows = [
        {"model": model, "metric": name, "value": getattr(rep, name)}
        for model, rep in reports.items()
        for name in PerformanceReport.metric_names()
    ]
    return pd.DataFrame(rows, columns=["model", "metric", "value"])


def frame_long(frame: pd.DataFrame, value_name: str = "value") -> pd.DataFrame:
    out = frame.copy()
    out.index.name = "model"
    return out.reset_index().melt(id_vars="model", var_name="metric", value_name=value_name)


def experiment_payload(rep: ExperimentReport) -> dict:
    summary = rep.summary()
    return {
        "models": list(rep.models),
        "n_resamples": len(rep.resamples),
        "summary": summary.to_dict(orient="index"),
        "long_short": {
            side: grp.drop(columns="side").to_dict(orient="index") for side, grp in rep.long_short().groupby("side")
        },
        "pvalues": rep.pvalues().to_dict(orient="index"),
        "diversification": rep.diversification().to_dict(orient="records"),
        "skewness_horizons": rep.skewness_horizons().to_dict(orient="index"),
        "sharpe_quantiles": rep.sharpe_quantiles().to_dict(orient="index"),
        "sharpes": {m: rep.sharpes(m) for m in rep.models},
        "graph_params": {m: {"alpha": p.graph.alpha, "beta": p.graph.beta} for m, p in rep.params.items()},
    }


def write_experiment(rep: ExperimentReport, out: Path, header: str, meta: dict) -> list[Path]:
    out = Path(out)
    written = [
        write_csv(frame_long(rep.summary()), out / "summary.csv", header),
        write_csv(rep.pvalues().reset_index(), out / "pvalues.csv", header),
        write_csv(rep.diversification(), out / "diversification.csv", header),
        write_csv(frame_long(rep.skewness_horizons(), "skewness").rename(columns={"metric": "horizon"}),
                  out / "skewness_horizons.csv", header),
        write_csv(rep.long_short().reset_index().rename(columns={"index": "model"}), out / "long_short.csv", header),
        write_csv(rep.sharpe_quantiles().rename_axis("model").reset_index(), out / "sharpe_quantiles.csv", header),
        write_json(experiment_payload(rep), out / "report.json", meta),
    ]
    return written
