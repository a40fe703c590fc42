"""Command-line entry point.

Subcommands: transform, factors, fit, forecast, evaluate, run, simulate.
Settings come from an optional JSON config file plus flags; flags override
file values. Every output directory receives a manifest (config hash, seed,
version) sufficient to reproduce the run.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import data_pipeline as dp
from . import evaluation_report as er
from . import factor_extraction as fx
from .errors import FecmcastError
from .forecast_engine import OosPlan, paths_to_frame, run_recursive_oos
from .model_suite import MODEL_KINDS, ModelSpec, save_model
from .synthetic_dgp import DgpConfig, generate_panel, read_dgp_config

DEFAULT_TARGETS = ("PPI", "CPI", "MMIR")
DEFAULT_HORIZONS = (1, 2, 4, 8)


@dataclass
class RunConfig:
    data: str | None = None
    meta: str | None = None
    out: str = "fecmcast_out"
    targets: tuple = DEFAULT_TARGETS
    horizons: tuple = DEFAULT_HORIZONS
    models: tuple = MODEL_KINDS
    r1: int = 1
    r0: int = 3
    max_lag: int = 4
    criterion: str = "BIC"
    rank_method: str = "ChengPhillipsBIC"
    detrend: bool = True
    eval_start: str | None = None
    eval_end: str | None = None
    seed: int = 0
    locale: str = "point"
    jobs: int = 1

    def validate(self):
        for m in self.models:
            if m not in MODEL_KINDS:
                raise FecmcastError(f"unknown model kind {m!r} (valid: {', '.join(MODEL_KINDS)})")
        if any(h < 1 for h in self.horizons) or list(self.horizons) != sorted(set(self.horizons)):
            raise FecmcastError("horizons must be positive and ascending")
        if self.locale not in ("point", "comma"):
            raise FecmcastError("locale must be 'point' or 'comma'")
        return self

    def specs(self) -> list[ModelSpec]:
        return [ModelSpec(kind=k, variables=list(self.targets), max_lag=self.max_lag,
                          lag_criterion=self.criterion, rank_method=self.rank_method,
                          r1=self.r1, r0=self.r0) for k in self.models]

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()


_CRIT = {"bic": "BIC", "hq": "HQ"}
_RANK = {"johansen": "JohansenTrace", "cp-bic": "ChengPhillipsBIC"}


def _load_config(config_path, **overrides) -> RunConfig:
    values: dict = {}
    if config_path:
        values.update(json.loads(Path(config_path).read_text()))
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    for key in ("targets", "horizons", "models"):
        if key in values and isinstance(values[key], str):
            parts = [p.strip() for p in values[key].split(",") if p.strip()]
            values[key] = tuple(int(p) for p in parts) if key == "horizons" else tuple(parts)
        elif key in values:
            values[key] = tuple(values[key])
    if "criterion" in values:
        values["criterion"] = _CRIT.get(str(values["criterion"]).lower(), values["criterion"])
    if "rank_method" in values:
        values["rank_method"] = _RANK.get(str(values["rank_method"]).lower(), values["rank_method"])
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise FecmcastError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values).validate()


def _write_manifest(out: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    manifest = {"tool": "fecmcast", "version": __version__, "seed": cfg.seed,
                "config_sha256": cfg.digest(), "config": asdict(cfg)}
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=list))


def _require(cfg: RunConfig, *names):
    for n in names:
        if getattr(cfg, n) in (None, ""):
            raise FecmcastError(f"missing required setting --{n.replace('_', '-')}")


def _common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="JSON config file; flags override its values."),
        click.option("--data", default=None, help="Panel CSV (date, one column per mnemonic)."),
        click.option("--meta", default=None, help="Metadata CSV."),
        click.option("--out", default=None, help="Output directory."),
        click.option("--seed", type=int, default=None),
        click.option("--horizons", default=None, help="Comma-separated, e.g. 1,2,4,8."),
        click.option("--targets", default=None, help="Comma-separated mnemonics."),
        click.option("--models", default=None, help="Comma-separated model kinds."),
        click.option("--r1", type=int, default=None),
        click.option("--r0", type=int, default=None),
        click.option("--max-lag", "max_lag", type=int, default=None),
        click.option("--criterion", type=click.Choice(["bic", "hq"]), default=None),
        click.option("--rank-method", "rank_method", type=click.Choice(["johansen", "cp-bic"]),
                     default=None),
        click.option("--locale", type=click.Choice(["point", "comma"]), default=None),
        click.option("--jobs", type=int, default=None),
        click.option("--eval-start", "eval_start", default=None, help="YYYYQn."),
        click.option("--eval-end", "eval_end", default=None, help="YYYYQn."),
        click.option("--detrend/--no-detrend", "detrend", default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Factor-augmented error-correction forecasting toolkit."""


def _cfg_from(config_path, kwargs) -> RunConfig:
    return _load_config(config_path, **kwargs)


@main.command()
@_common_options
def transform(config_path, **kwargs):
    """Apply transformation codes, screen outliers, write transformed panel."""
    cfg = _cfg_from(config_path, kwargs)
    _require(cfg, "data", "meta")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = dp.read_panel(cfg.data, cfg.meta)
    tpanel, records, outliers = dp.transform_panel(panel)
    dp.write_panel(tpanel, out / "transformed_panel.csv")
    rows = ["mnemonic,index,original,replacement"]
    for mn, entries in sorted(outliers.items()):
        rows += [f"{mn},{i},{orig:.10g},{repl:.10g}" for i, orig, repl in entries]
    (out / "outlier_log.csv").write_text("\n".join(rows) + "\n")
    flagged = dp.seasonality_check(tpanel)
    if flagged:
        click.echo(f"advisory: possible residual seasonality in {len(flagged)} series: "
                   f"{', '.join(flagged[:10])}{'...' if len(flagged) > 10 else ''}", err=True)
    _write_manifest(out, cfg, {"n_series": panel.n_series, "n_obs": tpanel.n_obs,
                               "n_outliers": sum(len(v) for v in outliers.values())})
    click.echo(f"transformed {panel.n_series} series, {tpanel.n_obs} observations -> {out}")


def _factor_step(cfg: RunConfig, panel):
    raw_clean_t, records, _ = dp.transform_panel(panel)
    std_panel, _, _ = dp.standardize(raw_clean_t)
    level_panel = dp.build_level_panel(panel)
    f1, l1 = fx.extract_level_factors(level_panel, cfg.r1, detrend=cfg.detrend)
    f0, l0 = fx.extract_diff_factors(std_panel, cfg.r0)
    fs = fx.FactorSet(f_i1=f1, f_i0=f0, loadings_i1=l1, loadings_i0=l0,
                      r1=cfg.r1, r0=cfg.r0)
    return fs, level_panel, std_panel


@main.command()
@_common_options
def factors(config_path, **kwargs):
    """Extract level and stationary factors, export them as CSV."""
    cfg = _cfg_from(config_path, kwargs)
    _require(cfg, "data", "meta")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = dp.read_panel(cfg.data, cfg.meta)
    fs, level_panel, std_panel = _factor_step(cfg, panel)
    fs.export_frame(level_panel.time_index).to_csv(out / "factors.csv", float_format="%.10g")
    n1, crit1 = fx.select_num_i1_factors(level_panel, min(8, level_panel.n_series), cfg.detrend)
    n0, crit0 = fx.select_num_i0_factors(std_panel, min(8, std_panel.n_series))
    (out / "factor_selection.json").write_text(json.dumps({
        "selected_r1": n1, "selected_r0": n0,
        "criterion_i1": list(map(float, crit1)), "criterion_i0": list(map(float, crit0)),
        "configured_r1": cfg.r1, "configured_r0": cfg.r0}, indent=1))
    _write_manifest(out, cfg)
    click.echo(f"factors written to {out} (criteria suggest r1={n1}, r0={n0})")


def _plan_from(cfg: RunConfig, panel) -> OosPlan:
    if cfg.eval_start and cfg.eval_end:
        start, end = dp.parse_quarter(cfg.eval_start), dp.parse_quarter(cfg.eval_end)
    else:
        # default: last quarter of the sample for evaluation, at least 40 obs before
        n = panel.n_obs
        cut = max(int(n * 0.75), 41)
        if cut >= n:
            raise FecmcastError("panel too short for a default evaluation window")
        start, end = panel.time_index[cut], panel.time_index[-1]
    return OosPlan(estimation_start=panel.time_index[0], eval_start=start, eval_end=end)


@main.command()
@_common_options
def fit(config_path, **kwargs):
    """Fit every configured model on the full sample, write JSON models."""
    from .forecast_engine import _cleaned_raw_panel, _fit_and_forecast

    cfg = _cfg_from(config_path, kwargs)
    _require(cfg, "data", "meta")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = dp.read_panel(cfg.data, cfg.meta)
    raw, tpanel, records = _cleaned_raw_panel(panel)
    fs, level_panel, std_panel = _factor_step(cfg, raw)
    fecmc_f1 = fx.cumulate_diff_factors(std_panel, cfg.r1)[-fs.f_i1.shape[0]:]
    for spec in cfg.specs():
        _, model = _fit_and_forecast(spec, list(cfg.targets), tpanel, raw, fs,
                                     fecmc_f1, max_h=1)
        models = model if isinstance(model, list) else [model]
        for j, m in enumerate(models):
            suffix = f"_{cfg.targets[j]}" if len(models) > 1 else ""
            save_model(m, out / f"model_{spec.kind}{suffix}.json")
    _write_manifest(out, cfg)
    click.echo(f"fitted {len(cfg.models)} model kinds -> {out}")


def _run_forecasts(cfg: RunConfig, panel):
    plan = _plan_from(cfg, panel)
    result = run_recursive_oos(panel, cfg.specs(), plan, targets=list(cfg.targets),
                               horizons=cfg.horizons, r1=cfg.r1, r0=cfg.r0,
                               detrend=cfg.detrend, jobs=cfg.jobs)
    frame = paths_to_frame(result, panel, list(cfg.targets))
    return result, frame


@main.command()
@_common_options
def forecast(config_path, **kwargs):
    """Run the recursive out-of-sample forecasts, write forecasts.csv."""
    cfg = _cfg_from(config_path, kwargs)
    _require(cfg, "data", "meta")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = dp.read_panel(cfg.data, cfg.meta)
    result, frame = _run_forecasts(cfg, panel)
    frame.to_csv(out / "forecasts.csv", index=False, float_format="%.12g")
    (out / "selection_trace.json").write_text(json.dumps(
        {"rank_trace": result.rank_trace, "lag_trace": result.lag_trace,
         "failures": [[list(o), k, msg] for o, k, msg in result.failures]},
        indent=1, sort_keys=True))
    _write_manifest(out, cfg, {"n_forecasts": len(frame), "n_failures": len(result.failures)})
    click.echo(f"{len(frame)} forecasts written to {out} ({len(result.failures)} origin failures)")


@main.command()
@_common_options
@click.option("--forecasts", "forecasts_path", default=None,
              help="forecasts.csv from a previous run (default: <out>/forecasts.csv).")
def evaluate(config_path, forecasts_path, **kwargs):
    """Build relative-MSE tables and figure data from a forecast file."""
    import pandas as pd

    cfg = _cfg_from(config_path, kwargs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fpath = Path(forecasts_path) if forecasts_path else out / "forecasts.csv"
    if not fpath.exists():
        raise FecmcastError(f"forecast file not found: {fpath}")
    frame = pd.read_csv(fpath)
    trace_path = fpath.parent / "selection_trace.json"
    rank_trace = lag_trace = None
    if trace_path.exists():
        trace = json.loads(trace_path.read_text())
        rank_trace, lag_trace = trace.get("rank_trace"), trace.get("lag_trace")
    report = er.build_report(frame, rank_trace=rank_trace, lag_trace=lag_trace)
    er.write_report(report, out, locale=cfg.locale)
    _write_manifest(out, cfg)
    click.echo(f"report written to {out}")


@main.command()
@_common_options
def run(config_path, **kwargs):
    """Full experiment: transform, factors, fit, forecast, evaluate."""
    cfg = _cfg_from(config_path, kwargs)
    _require(cfg, "data", "meta")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = dp.read_panel(cfg.data, cfg.meta)
    result, frame = _run_forecasts(cfg, panel)
    frame.to_csv(out / "forecasts.csv", index=False, float_format="%.12g")
    (out / "selection_trace.json").write_text(json.dumps(
        {"rank_trace": result.rank_trace, "lag_trace": result.lag_trace,
         "failures": [[list(o), k, msg] for o, k, msg in result.failures]},
        indent=1, sort_keys=True))
    report = er.build_report(frame, rank_trace=result.rank_trace, lag_trace=result.lag_trace)
    er.write_report(report, out, locale=cfg.locale)
    _write_manifest(out, cfg, {"n_forecasts": len(frame), "n_failures": len(result.failures)})
    click.echo(f"run complete -> {out}")


@main.command()
@click.option("--config", "dgp_config_path", type=click.Path(exists=True), default=None,
              help="DGP config file (key = value lines).")
@click.option("--out", default="fecmcast_sim", help="Output directory.")
@click.option("--seed", type=int, default=None)
@click.option("--n", "n_series", type=int, default=None)
@click.option("--t", "n_obs", type=int, default=None)
@click.option("--r1-true", type=int, default=None)
@click.option("--r0-true", type=int, default=None)
def simulate(dgp_config_path, out, seed, n_series, n_obs, r1_true, r0_true):
    """Generate a synthetic panel plus ground-truth files."""
    if dgp_config_path:
        base = read_dgp_config(dgp_config_path)
        values = asdict(base)
    else:
        values = asdict(DgpConfig())
    for key, val in (("seed", seed), ("N", n_series), ("T", n_obs),
                     ("r1_true", r1_true), ("r0_true", r0_true)):
        if val is not None:
            values[key] = val
    cfg = DgpConfig(**values)
    panel, truth = generate_panel(cfg)
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    dp.write_panel(panel, outp / "panel.csv")
    meta_rows = ["id,mnemonic,description,tc,is_interest_rate,integration_order"]
    meta_rows += [f"{m.id},{m.mnemonic},{m.description},{m.tc},{m.is_interest_rate},"
                  f"{m.integration_order}" for m in panel.meta]
    (outp / "meta.csv").write_text("\n".join(meta_rows) + "\n")
    (outp / "truth.json").write_text(json.dumps(
        {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in truth.items()},
        indent=1, sort_keys=True))
    digest = hashlib.sha256((outp / "panel.csv").read_bytes()).hexdigest()
    (outp / "manifest.json").write_text(json.dumps(
        {"tool": "fecmcast", "version": __version__, "dgp": asdict(cfg),
         "panel_sha256": digest}, indent=1, sort_keys=True))
    click.echo(f"panel {panel.n_obs}x{panel.n_series} written to {outp} (sha256 {digest[:12]})")


def cli_main():
    try:
        main(standalone_mode=False)
    except FecmcastError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)


if __name__ == "__main__":
    cli_main()
