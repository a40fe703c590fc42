"""Forecast accuracy statistics against the AR benchmark, tables and figure data."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ContractError, NumericError

MODEL_ORDER = ("FAR", "VAR", "FAVAR", "ECM", "FECM", "FECMc")


@dataclass
class EvalReport:
    """Per (target, horizon) benchmark RMSE and model-vs-AR error ratios."""

    targets: tuple
    horizons: tuple
    models: tuple                       # comparison models, AR excluded
    rmse_ar: dict = field(default_factory=dict)       # (target, h) -> float
    mse_ratios: dict = field(default_factory=dict)    # (target, h) -> {model: ratio}
    rmse_ratios: dict = field(default_factory=dict)
    rank_summary: dict = field(default_factory=dict)  # model -> (mean, min, max)
    lag_summary: dict = field(default_factory=dict)
    n_errors: dict = field(default_factory=dict)      # (target, h) -> count


def compute_rmse(errors) -> float:
    e = np.asarray(errors, float).ravel()
    if e.size == 0:
        raise ContractError("RMSE of an empty error vector")
    return float(np.sqrt(np.mean(e ** 2)))


def relative_mse(model_errors, ar_errors, root: bool = False) -> float:
    """MSE ratio model/AR on matched origins; ``root=True`` gives the RMSE ratio."""
    me = np.asarray(model_errors, float).ravel()
    ae = np.asarray(ar_errors, float).ravel()
    if me.size != ae.size:
        raise ContractError(f"unmatched error vectors: {me.size} vs {ae.size}")
    ar_mse = float(np.mean(ae ** 2))
    if ar_mse == 0:
        raise NumericError("AR benchmark has zero MSE")
    ratio = float(np.mean(me ** 2)) / ar_mse
    return float(np.sqrt(ratio)) if root else ratio


def build_report(frame: pd.DataFrame, rank_trace: dict | None = None,
                 lag_trace: dict | None = None, basis: str = "level") -> EvalReport:
    """Aggregate a long-format forecast table into an EvalReport.

    ``frame`` must carry columns model, target, origin, horizon,
    forecast_level, realized_level (and forecast_transformed /
    realized_transformed when ``basis='transformed'``). For each
    (target, horizon) cell only origins forecast by every model enter, so
    error counts match across models.
    """
    fc_col = {"level": "forecast_level", "transformed": "forecast_transformed"}[basis]
    re_col = {"level": "realized_level", "transformed": "realized_transformed"}[basis]
    if "AR" not in set(frame["model"]):
        raise ContractError("report needs the AR benchmark forecasts")
    models = tuple(m for m in MODEL_ORDER if m in set(frame["model"]))
    targets = tuple(sorted(set(frame["target"])))
    horizons = tuple(sorted(set(frame["horizon"])))
    rep = EvalReport(targets=targets, horizons=horizons, models=models)
    for tgt in targets:
        for h in horizons:
            cell = frame[(frame["target"] == tgt) & (frame["horizon"] == h)]
            common = None
            for m in ("AR",) + models:
                origins = set(cell[cell["model"] == m]["origin"])
                common = origins if common is None else common & origins
            if not common:
                continue
            errs = {}
            for m in ("AR",) + models:
                sub = cell[(cell["model"] == m) & cell["origin"].isin(common)].sort_values("origin")
                errs[m] = (sub[fc_col] - sub[re_col]).to_numpy()
            rep.rmse_ar[(tgt, h)] = compute_rmse(errs["AR"])
            rep.n_errors[(tgt, h)] = len(common)
            rep.mse_ratios[(tgt, h)] = {m: relative_mse(errs[m], errs["AR"]) for m in models}
            rep.rmse_ratios[(tgt, h)] = {m: relative_mse(errs[m], errs["AR"], root=True)
                                         for m in models}
    for trace, store in ((rank_trace, rep.rank_summary), (lag_trace, rep.lag_summary)):
        for kind, vals in (trace or {}).items():
            v = np.asarray(vals, float)
            if v.size:
                store[kind] = (float(v.mean()), float(v.min()), float(v.max()))
    return rep


def _fmt(x: float, locale: str) -> str:
    s = f"{x:.2f}"
    return s.replace(".", ",") if locale == "comma" else s


def render_tables(report: EvalReport, horizon: int, locale: str = "point") -> str:
    """One text table per horizon in the shape: benchmark RMSE, model/AR MSE
    ratios per target, then lag and cointegration-rank summary blocks."""
    models = report.models
    lines = []
    lines.append("Variables\tRMSE of AR\tMSE model/MSE_AR" + "\t" * max(len(models) - 1, 0))
    lines.append("\t\t" + "\t".join(models))
    for tgt in report.targets:
        key = (tgt, horizon)
        if key not in report.rmse_ar:
            continue
        cells = [tgt, _fmt(report.rmse_ar[key], locale)]
        cells += [_fmt(report.mse_ratios[key][m], locale) for m in models]
        lines.append("\t".join(cells))
    if report.lag_summary:
        lines.append("Lags\tMean\tMin\tMax")
        for kind in ("AR",) + tuple(models):
            if kind in report.lag_summary:
                mean, lo, hi = report.lag_summary[kind]
                lines.append("\t".join([kind, _fmt(mean, locale), _fmt(lo, locale), _fmt(hi, locale)]))
    if report.rank_summary:
        lines.append("Cointegration rank\tMean\tMin\tMax")
        for kind in ("ECM", "FECM", "FECMc"):
            if kind in report.rank_summary:
                mean, lo, hi = report.rank_summary[kind]
                lines.append("\t".join([kind, _fmt(mean, locale), _fmt(lo, locale), _fmt(hi, locale)]))
    return "\n".join(lines) + "\n"


def figure_frame(report: EvalReport) -> pd.DataFrame:
    """Grouped-bar data: one row per target x horizon x model MSE ratio."""
    rows = []
    for tgt in report.targets:
        for h in report.horizons:
            key = (tgt, h)
            if key not in report.mse_ratios:
                continue
            for m in report.models:
                rows.append({"target": tgt, "horizon": h, "model": m,
                             "mse_ratio": report.mse_ratios[key][m]})
    return pd.DataFrame(rows)


def emit_figure_data(report: EvalReport, svg_path, csv_path) -> None:
    """Write the grouped-bar figure (SVG) and its companion data file.

    Output bytes are deterministic for identical reports.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    df = figure_frame(report)
    df.to_csv(csv_path, index=False, float_format="%.6f")

    groups = [(t, h) for t in report.targets for h in report.horizons
              if (t, h) in report.mse_ratios]
    n_m = max(len(report.models), 1)
    width = 0.8 / n_m
    with plt.rc_context({"svg.hashsalt": "fecmcast"}):
        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(groups)), 4))
        x = np.arange(len(groups))
        for i, m in enumerate(report.models):
            heights = [report.mse_ratios[g][m] for g in groups]
            ax.bar(x + (i - (n_m - 1) / 2) * width, heights, width, label=m)
        ax.axhline(1.0, color="black", linewidth=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels([f"{t} h={h}" for t, h in groups], rotation=45, ha="right")
        ax.set_ylabel("MSE model / MSE AR")
        ax.legend(ncol=min(n_m, 6), fontsize=8)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready summary of the report (documented machine-readable schema)."""
    return {
        "targets": list(report.targets),
        "horizons": [int(h) for h in report.horizons],
        "models": list(report.models),
        "cells": [
            {
                "target": t, "horizon": int(h),
                "rmse_ar": report.rmse_ar[(t, h)],
                "n_errors": report.n_errors.get((t, h)),
                "mse_ratios": report.mse_ratios[(t, h)],
                "rmse_ratios": report.rmse_ratios[(t, h)],
            }
            for t in report.targets for h in report.horizons
            if (t, h) in report.rmse_ar
        ],
        "rank_summary": {k: list(v) for k, v in report.rank_summary.items()},
        "lag_summary": {k: list(v) for k, v in report.lag_summary.items()},
    }


def write_report(report: EvalReport, out_dir, locale: str = "point") -> None:
    """Write per-horizon tables, figure files and the JSON summary into out_dir."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for h in report.horizons:
        (out / f"table_h{h}.txt").write_text(render_tables(report, h, locale))
    emit_figure_data(report, out / "figure_relative_mse.svg", out / "figure_relative_mse.csv")
    (out / "report.json").write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True))
