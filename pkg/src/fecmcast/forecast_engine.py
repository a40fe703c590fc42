"""Iterated multi-step forecasting and the recursive pseudo-out-of-sample loop.

Conventions
-----------
A forecast *origin* is the date of the last observation in the information
set: forecasts made at origin t cover t+1 .. t+h and use data dated <= t
only. The evaluation window of an OosPlan refers to realization dates, so
with a window of Q quarters there are Q origins for h = 1 and Q - (h-1)
complete origins for larger h.

Stationary-family models (AR, FAR, VAR, FAVAR) are iterated in transformed
units; the error-correction family is iterated in (log-)levels with the
error-correction term updated from the cumulated forecasts. All level
forecasts are reconstructed through the data-pipeline inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data_pipeline as dp
from .data_pipeline import Panel, TransformRecord
from .errors import ContractError
from .factor_extraction import (FactorSet, cumulate_diff_factors,
                                extract_diff_factors, extract_level_factors)
from .model_suite import (ModelSpec, VarModel, VecmModel, fit_ar, fit_ecm,
                          fit_far, fit_favar, fit_fecm, fit_var)


@dataclass
class ModelState:
    """Most recent data a model needs to start iterating.

    ``history`` holds recent rows of the modeled vector (most recent last):
    differenced data for the VAR family, differenced levels for the VECM
    family. ``levels`` is the last (log-)level vector (VECM family only);
    ``exog`` the last observed exogenous-factor row.
    """

    history: np.ndarray
    levels: np.ndarray | None = None
    exog: np.ndarray | None = None


@dataclass
class ForecastPath:
    """Per-origin forecasts of one model for all targets and horizons."""

    origin: tuple[int, int]
    origin_pos: int
    horizons: tuple[int, ...]
    model_kind: str
    targets: tuple[str, ...]
    diff_forecasts: dict = field(default_factory=dict)    # h -> vector over targets
    level_forecasts: dict = field(default_factory=dict)   # h -> vector over targets

    def __post_init__(self):
        self.horizons = tuple(sorted(self.horizons))


@dataclass
class OosPlan:
    """Expanding-window evaluation design; dates are (year, quarter) pairs."""

    estimation_start: tuple[int, int]
    eval_start: tuple[int, int]
    eval_end: tuple[int, int]
    refit_every: int = 1

    def positions(self, time_index) -> tuple[int, int, int]:
        idx = {t: i for i, t in enumerate(time_index)}
        try:
            es, vs, ve = (idx[tuple(self.estimation_start)], idx[tuple(self.eval_start)],
                          idx[tuple(self.eval_end)])
        except KeyError as exc:
            raise ContractError(f"plan date {exc.args[0]} not in panel time index") from None
        if not es < vs <= ve:
            raise ContractError("need estimation_start < eval_start <= eval_end")
        if vs - es < 40:
            raise ContractError("need at least 40 observations before eval_start")
        if self.refit_every < 1:
            raise ContractError("refit_every must be >= 1")
        return es, vs, ve


# ---------------------------------------------------------------------------
# Iterated forecasts
# ---------------------------------------------------------------------------

def _var_one_step(model: VarModel, recent: list, exog_row) -> np.ndarray:
    y = model.mu.copy()
    for k, Ak in enumerate(model.A, start=1):
        y = y + Ak @ recent[-k]
    if model.exog_coeffs is not None:
        y = y + model.exog_coeffs @ exog_row
    return y


def iterate_forecast(model, state: ModelState, h: int) -> np.ndarray:
    """Dynamic h-step path: one-step predictions chained, length h x n.

    For a VarModel the rows are forecasts of the modeled (differenced)
    vector; for a VecmModel they are forecasts of the stacked differences,
    with the error-correction term updated from the cumulated level path.
    Exogenous factors propagate through the model's companion dynamics.
    """
    if h < 1:
        raise ContractError("horizon must be >= 1")
    exog = None if state.exog is None else np.asarray(state.exog, float).ravel()

    def step_exog(x):
        if x is None or model.factor_var is None:
            return x
        return _var_one_step(model.factor_var, [x], None)

    if isinstance(model, VarModel):
        hist = np.atleast_2d(np.asarray(state.history, float))
        if hist.shape[0] < model.lags:
            raise ContractError(f"state supplies {hist.shape[0]} rows, model needs {model.lags}")
        recent = [hist[i] for i in range(hist.shape[0])]
        out = []
        for _ in range(h):
            y = _var_one_step(model, recent, exog)
            out.append(y)
            recent.append(y)
            exog = step_exog(exog)
        return np.array(out)

    if isinstance(model, VecmModel):
        if state.levels is None:
            raise ContractError("VECM forecasting needs the last level vector in the state")
        level = np.asarray(state.levels, float).copy()
        hist = np.atleast_2d(np.asarray(state.history, float)) if model.lags > 1 else np.empty((0, model.m))
        if model.lags > 1 and hist.shape[0] < model.lags - 1:
            raise ContractError(f"state supplies {hist.shape[0]} difference rows, model needs {model.lags - 1}")
        recent = [hist[i] for i in range(hist.shape[0])]
        out = []
        for _ in range(h):
            d = model.mu.copy()
            if model.rank:
                d = d + model.alpha @ (model.beta.T @ level)
            for k, Phik in enumerate(model.Phi, start=1):
                d = d + Phik @ recent[-k]
            if model.exog_coeffs is not None and exog is not None:
                d = d + model.exog_coeffs @ exog
            level = level + d
            out.append(d)
            recent.append(d)
            exog = step_exog(exog)
        return np.array(out)

    raise ContractError(f"cannot forecast model of type {type(model).__name__}")


def aggregate_to_levels(diffs: np.ndarray, record: TransformRecord, last_levels) -> np.ndarray:
    """Levels implied by a path of transformed-unit forecasts.

    Thin wrapper over the pipeline's exact inverse transform; ``last_levels``
    are the most recent observed levels in original units.
    """
    return dp.invert_transformation(last_levels, np.asarray(diffs, float), record)


# ---------------------------------------------------------------------------
# Recursive out-of-sample experiment
# ---------------------------------------------------------------------------

@dataclass
class OosResult:
    paths: list
    failures: list          # (origin label, model kind, message)
    rank_trace: dict        # kind -> list of selected ranks across origins
    lag_trace: dict         # kind -> list of selected lag orders


def _cleaned_raw_panel(panel: Panel):
    """Outlier-screen in transformed space, then rebuild consistent raw levels.

    Returns (raw panel over the balanced window, transformed panel, records).
    """
    tpanel, records, _ = dp.transform_panel(panel, screen_outliers=True)
    T, Tb = panel.n_obs, tpanel.n_obs
    cols = []
    for j, m in enumerate(panel.meta):
        rec = records[m.mnemonic]
        c = dp.OBS_CONSUMED[rec.tc]
        prior = panel.values[T - Tb - c: T - Tb, j]
        cols.append(dp.invert_transformation(prior, tpanel.values[:, j], rec))
    raw = Panel(np.column_stack(cols), tpanel.time_index, panel.meta)
    return raw, tpanel, records


def _target_level_matrix(raw: Panel, targets) -> np.ndarray:
    cols = []
    for tgt in targets:
        meta = raw.meta[raw.mnemonics.index(tgt)]
        cols.append(dp.level_representation(raw.column(tgt), meta))
    return np.column_stack(cols)


def _levels_to_transformed(level_path: np.ndarray, observed_levels: np.ndarray, tc: int) -> np.ndarray:
    """Transformed-unit path implied by a (log-)level forecast path."""
    if tc in (1, 4):
        return level_path
    ext = np.concatenate([observed_levels[-2:], level_path])
    if tc in (2, 5):
        return np.diff(ext)[-len(level_path):]
    return np.diff(ext, n=2)[-len(level_path):]


def _fit_and_forecast(spec: ModelSpec, targets, tpanel: Panel, raw: Panel,
                      factors: FactorSet, fecmc_f1, max_h: int, fitted=None):
    """Fit one model kind (unless pre-fitted) and produce its target paths.

    Returns (per-target transformed forecast matrix of shape max_h x n_targets,
    fitted model object).
    """
    kind = spec.kind
    n_t = len(targets)
    X_targets = np.column_stack([tpanel.column(t) for t in targets])

    if kind in ("AR", "FAR"):
        cols, models = [], []
        for j, tgt in enumerate(targets):
            y = X_targets[:, j]
            if fitted is not None:
                model = fitted[j]
            elif kind == "AR":
                model = fit_ar(y, spec)
            else:
                model = fit_far(y, factors, spec)
            p = model.lags
            state = ModelState(history=y[-p:][:, None],
                               exog=factors.f_i0[-1] if kind == "FAR" else None)
            cols.append(iterate_forecast(model, state, max_h)[:, 0])
            models.append(model)
        return np.column_stack(cols), models

    if kind in ("VAR", "FAVAR"):
        if fitted is not None:
            model = fitted
        elif kind == "VAR":
            model = fit_var(X_targets, spec)
        else:
            model = fit_favar(X_targets, factors, spec)
        data = X_targets if kind == "VAR" else np.hstack([X_targets, factors.f_i0])
        state = ModelState(history=data[-model.lags:])
        path = iterate_forecast(model, state, max_h)
        return path[:, :n_t], model

    if kind in ("ECM", "FECM", "FECMc"):
        Y_lvl = _target_level_matrix(raw, targets)
        if fitted is not None:
            model = fitted
        elif kind == "ECM":
            model = fit_ecm(Y_lvl, spec)
        else:
            f1 = factors.f_i1 if kind == "FECM" else fecmc_f1
            model = fit_fecm(Y_lvl, factors, spec, f_i1_override=None if kind == "FECM" else f1)
        if kind == "ECM":
            stacked = Y_lvl
            exog_last = None
        else:
            f1 = factors.f_i1 if kind == "FECM" else fecmc_f1
            stacked = np.hstack([Y_lvl[-f1.shape[0]:], f1])
            exog_last = factors.f_i0[-1] if factors.f_i0.size else None
        dstacked = np.diff(stacked, axis=0)
        state = ModelState(history=dstacked[-(model.lags - 1):] if model.lags > 1 else np.empty((0, model.m)),
                           levels=stacked[-1], exog=exog_last)
        dpath = iterate_forecast(model, state, max_h)[:, :n_t]
        lvl_path = stacked[-1, :n_t] + np.cumsum(dpath, axis=0)
        cols = []
        for j, tgt in enumerate(targets):
            tc = raw.meta[raw.mnemonics.index(tgt)].tc
            cols.append(_levels_to_transformed(lvl_path[:, j], Y_lvl[:, j], tc))
        return np.column_stack(cols), model

    raise ContractError(f"unknown model kind {kind!r}")


def _forecasts_at_origin(panel: Panel, specs, targets, horizons, origin_pos: int,
                         r1: int, r0: int, detrend: bool, fitted_by_kind=None):
    """All models' ForecastPaths at one origin; single-model failures are collected."""
    max_h = max(horizons)
    sub = panel.subset_rows(origin_pos + 1)
    raw, tpanel, records = _cleaned_raw_panel(sub)
    level_panel = dp.build_level_panel(raw)
    std_panel, _, _ = dp.standardize(tpanel)
    f1, l1 = extract_level_factors(level_panel, r1, detrend=detrend)
    f0, l0 = extract_diff_factors(std_panel, r0)
    factors = FactorSet(f_i1=f1, f_i0=f0, loadings_i1=l1, loadings_i0=l0, r1=r1, r0=r0)
    needs_c = any(s.kind == "FECMc" for s in specs)
    fecmc_f1 = cumulate_diff_factors(std_panel, r1)[-f1.shape[0]:] if needs_c else None

    origin = panel.time_index[origin_pos]
    paths, failures, fitted_out = [], [], {}
    for spec in specs:
        try:
            pre = None if fitted_by_kind is None else fitted_by_kind.get(spec.kind)
            fc, model = _fit_and_forecast(spec, targets, tpanel, raw, factors,
                                          fecmc_f1, max_h, fitted=pre)
            fitted_out[spec.kind] = model
        except Exception as exc:  # single-origin failures never abort the run
            failures.append((origin, spec.kind, f"{type(exc).__name__}: {exc}"))
            continue
        path = ForecastPath(origin=origin, origin_pos=origin_pos, horizons=tuple(horizons),
                            model_kind=spec.kind, targets=tuple(targets))
        for h in horizons:
            if origin_pos + h >= panel.n_obs:
                continue
            diffs = fc[h - 1]
            levels = np.empty(len(targets))
            for j, tgt in enumerate(targets):
                rec = records[tgt]
                last = raw.column(tgt)[-2:]
                levels[j] = aggregate_to_levels(fc[: h, j], rec, last)[-1]
            path.diff_forecasts[h] = diffs.copy()
            path.level_forecasts[h] = levels
        paths.append(path)
    return paths, failures, fitted_out


def run_recursive_oos(panel: Panel, specs, plan: OosPlan, targets=None,
                      horizons=(1, 2, 4, 8), r1: int = 1, r0: int = 3,
                      detrend: bool = True, jobs: int = 1) -> OosResult:
    """Expanding-window pseudo-out-of-sample experiment.

    Factors, standardization statistics and outlier screens are re-estimated
    within each origin's sample; factor counts stay fixed across origins.
    Realization dates inside [eval_start, eval_end] define the origin set.
    """
    if targets is None:
        targets = sorted({v for s in specs for v in s.variables}) or panel.mnemonics[:1]
    missing = [t for t in targets if t not in panel.mnemonics]
    if missing:
        raise ContractError(f"target variables not in panel: {missing}")
    es, vs, ve = plan.positions(panel.time_index)
    work = panel if es == 0 else Panel(panel.values[es:], panel.time_index[es:], panel.meta)
    vs, ve = vs - es, ve - es
    origin_positions = list(range(vs - 1, ve))

    def one(pos, fitted):
        return _forecasts_at_origin(work, specs, targets, horizons, pos, r1, r0,
                                    detrend, fitted_by_kind=fitted)

    results = []
    if jobs != 1:
        from joblib import Parallel, delayed

        # refit at every origin when parallel; order-stable collection
        results = Parallel(n_jobs=jobs)(delayed(one)(pos, None) for pos in origin_positions)
    else:
        fitted = None
        for i, pos in enumerate(origin_positions):
            reuse = fitted if (plan.refit_every > 1 and i % plan.refit_every) else None
            paths, failures, fitted_out = one(pos, reuse)
            fitted = fitted_out if fitted_out else fitted
            results.append((paths, failures, fitted_out))

    all_paths, all_failures = [], []
    rank_trace: dict[str, list] = {}
    lag_trace: dict[str, list] = {}
    for paths, failures, fitted_out in results:
        all_paths.extend(paths)
        all_failures.extend(failures)
        for kind, model in fitted_out.items():
            models = model if isinstance(model, list) else [model]
            for m in models:
                if isinstance(m, VecmModel):
                    rank_trace.setdefault(kind, []).append(m.rank)
                lag_trace.setdefault(kind, []).append(m.lags)
    return OosResult(paths=all_paths, failures=all_failures,
                     rank_trace=rank_trace, lag_trace=lag_trace)


def paths_to_frame(result: OosResult, panel: Panel, targets):
    """Long-format forecast table: one row per (model, target, origin, horizon)."""
    import pandas as pd

    pos_by_label = {t: i for i, t in enumerate(panel.time_index)}
    rows = []
    for path in result.paths:
        opos = pos_by_label[path.origin]
        for h in sorted(path.diff_forecasts):
            for j, tgt in enumerate(path.targets):
                rows.append({
                    "model": path.model_kind,
                    "target": tgt,
                    "origin": f"{path.origin[0]}Q{path.origin[1]}",
                    "horizon": h,
                    "forecast_transformed": path.diff_forecasts[h][j],
                    "forecast_level": path.level_forecasts[h][j],
                    "realized_level": panel.column(tgt)[opos + h],
                })
    return pd.DataFrame(rows)
