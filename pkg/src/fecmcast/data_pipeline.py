"""Panel loading, stationarity transformations, outlier screening and level reconstruction.

Transformation codes (TC) follow the usual macro-panel convention:

    1  no transformation          x_t = y_t
    2  first difference           x_t = y_t - y_{t-1}
    3  second difference          x_t = (y_t - y_{t-1}) - (y_{t-1} - y_{t-2})
    4  logarithm                  x_t = ln y_t
    5  first difference of log    x_t = ln y_t - ln y_{t-1}
    6  second difference of log   x_t = delta^2 ln y_t

Each transform retains the level observations it consumes so that the
transformation is exactly invertible, which is what level reconstruction of
multi-step forecasts relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import ConfigError, ContractError, DomainError, NumericError

VALID_TCODES = {1, 2, 3, 4, 5, 6}

# Number of leading observations consumed by each code.
OBS_CONSUMED = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2}

LOG_TCODES = {4, 5, 6}


@dataclass(frozen=True)
class SeriesMeta:
    """Per-series metadata: identity, transformation code and integration order."""

    id: int
    mnemonic: str
    description: str
    tc: int
    is_interest_rate: bool = False
    integration_order: str | None = None  # "I0" or "I1"

    def __post_init__(self):
        if self.tc not in VALID_TCODES:
            raise ConfigError(f"series {self.mnemonic!r}: invalid transformation code {self.tc}")
        if not self.mnemonic:
            raise ConfigError(f"series id {self.id}: empty mnemonic")
        if self.integration_order not in (None, "I0", "I1"):
            raise ConfigError(
                f"series {self.mnemonic!r}: integration_order must be 'I0' or 'I1', "
                f"got {self.integration_order!r}"
            )


@dataclass(frozen=True)
class Panel:
    """A balanced T x N panel with a quarterly time index and per-column metadata."""

    values: np.ndarray
    time_index: tuple[tuple[int, int], ...]
    meta: tuple[SeriesMeta, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_index", tuple(tuple(t) for t in self.time_index))
        object.__setattr__(self, "meta", tuple(self.meta))
        if values.ndim != 2:
            raise ContractError("panel values must be a 2-d array")
        T, N = values.shape
        if len(self.time_index) != T:
            raise ContractError(f"time index length {len(self.time_index)} != T={T}")
        if len(self.meta) != N:
            raise ContractError(f"metadata length {len(self.meta)} != N={N}")
        if np.isnan(values).any():
            raise ContractError("panel contains missing values; balance it first")
        mnemonics = [m.mnemonic for m in self.meta]
        if len(set(mnemonics)) != len(mnemonics):
            dupes = sorted({m for m in mnemonics if mnemonics.count(m) > 1})
            raise ConfigError(f"duplicate mnemonics in panel: {dupes}")
        for prev, cur in zip(self.time_index, self.time_index[1:]):
            if _next_quarter(prev) != cur:
                raise ContractError(f"time index not consecutive quarterly: {prev} -> {cur}")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    @property
    def mnemonics(self) -> list[str]:
        return [m.mnemonic for m in self.meta]

    def column(self, mnemonic: str) -> np.ndarray:
        try:
            j = self.mnemonics.index(mnemonic)
        except ValueError:
            raise ConfigError(f"mnemonic {mnemonic!r} not in panel") from None
        return self.values[:, j]

    def subset_rows(self, stop: int) -> "Panel":
        """Panel restricted to the first ``stop`` observations."""
        return Panel(self.values[:stop], self.time_index[:stop], self.meta)

    def to_frame(self) -> pd.DataFrame:
        idx = [f"{y}Q{q}" for y, q in self.time_index]
        return pd.DataFrame(self.values, index=pd.Index(idx, name="date"), columns=self.mnemonics)


@dataclass(frozen=True)
class TransformRecord:
    """Level observations consumed by a transform, kept for exact inversion."""

    original_first_values: tuple[float, ...]
    tc: int
    log_applied: bool

    def __post_init__(self):
        object.__setattr__(self, "original_first_values", tuple(float(v) for v in self.original_first_values))
        if len(self.original_first_values) != OBS_CONSUMED[self.tc]:
            raise ContractError(
                f"tc={self.tc} consumes {OBS_CONSUMED[self.tc]} observations, "
                f"record holds {len(self.original_first_values)}"
            )


def _next_quarter(t: tuple[int, int]) -> tuple[int, int]:
    year, quarter = t
    return (year + 1, 1) if quarter == 4 else (year, quarter + 1)


def parse_quarter(label: str) -> tuple[int, int]:
    """Parse a ``YYYYQn`` label into a (year, quarter) pair."""
    label = label.strip().upper()
    try:
        year_s, quarter_s = label.split("Q")
        year, quarter = int(year_s), int(quarter_s)
    except ValueError:
        raise ConfigError(f"bad quarterly date label {label!r}, expected YYYYQn") from None
    if not 1 <= quarter <= 4:
        raise ConfigError(f"quarter out of range in {label!r}")
    return year, quarter


def apply_transformation(series: np.ndarray, tc: int, name: str = "series"):
    """Apply transformation code ``tc``; returns (transformed, TransformRecord)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ContractError(f"{name}: need a 1-d series of length >= 3")
    if tc not in VALID_TCODES:
        raise ConfigError(f"{name}: invalid transformation code {tc}")
    log_applied = tc in LOG_TCODES
    if log_applied:
        bad = np.flatnonzero(x <= 0)
        if bad.size:
            raise DomainError(
                f"{name}: non-positive value {x[bad[0]]} at index {bad[0]} under log code tc={tc}"
            )
        z = np.log(x)
    else:
        z = x
    if tc in (1, 4):
        out = z.copy()
    elif tc in (2, 5):
        out = np.diff(z)
    else:  # 3, 6
        out = np.diff(z, n=2)
    record = TransformRecord(tuple(x[: OBS_CONSUMED[tc]]), tc, log_applied)
    return out, record


def invert_transformation(last_levels, diffs, record: TransformRecord) -> np.ndarray:
    """Reconstruct levels from transformed values.

    ``last_levels`` are the most recent observed levels (original units), of
    which the transform's consumed count is used: none for tc 1/4, the last one
    for tc 2/5, the last two for tc 3/6.
    """
    last = np.asarray(last_levels, dtype=float)
    d = np.asarray(diffs, dtype=float)
    tc = record.tc
    need = OBS_CONSUMED[tc]
    if last.size < need:
        raise ContractError(f"tc={tc} needs {need} prior level(s), got {last.size}")
    if record.log_applied != (tc in LOG_TCODES):
        raise ContractError("transform record inconsistent with its own tc")
    if tc == 1:
        return d.copy()
    if tc == 4:
        return np.exp(d)
    if record.log_applied:
        if np.any(last[-need:] <= 0):
            raise DomainError("non-positive prior level under a log code")
        base = np.log(last[-need:])
    else:
        base = last[-need:]
    if tc in (2, 5):
        levels = base[-1] + np.cumsum(d)
    else:  # 3, 6
        first_diffs = (base[1] - base[0]) + np.cumsum(d)
        levels = base[1] + np.cumsum(first_diffs)
    return np.exp(levels) if record.log_applied else levels


def cumulate(series) -> np.ndarray:
    """Running sum: out[t] = sum of input up to and including t."""
    return np.cumsum(np.asarray(series, dtype=float))


def replace_outliers(series, name: str = "series"):
    """Screen a (transformed) series for large outliers.

    A point is an outlier when it deviates from the sample median by more than
    six times the sample interquartile range. Flagged points are replaced by
    the median of the five preceding cleaned observations; near the start of
    the sample, by the median of whatever cleaned observations precede the
    point, and for an outlier at the very first observation by the series
    median excluding that point.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 6:
        raise ContractError(f"{name}: outlier screening needs at least 6 observations")
    med = np.median(x)
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    flagged = np.flatnonzero(np.abs(x - med) > 6.0 * iqr)
    cleaned = x.copy()
    for i in flagged:
        if i == 0:
            cleaned[0] = np.median(np.delete(x, 0))
        else:
            window = cleaned[max(0, i - 5): i]
            cleaned[i] = np.median(window)
    return cleaned, flagged.tolist()


def standardize(panel: Panel):
    """Scale each column to sample mean 0 and sample standard deviation 1.

    Returns (standardized panel, means, standard deviations); the statistics
    invert the mapping exactly.
    """
    X = panel.values
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    zero = np.flatnonzero(sds <= 0)
    if zero.size:
        names = [panel.meta[j].mnemonic for j in zero]
        raise NumericError(f"zero-variance column(s): {names}")
    out = replace(panel, values=(X - means) / sds)
    return out, means, sds


def destandardize(values: np.ndarray, means, sds) -> np.ndarray:
    return np.asarray(values) * np.asarray(sds) + np.asarray(means)


def level_representation(series: np.ndarray, meta: SeriesMeta, name: str | None = None) -> np.ndarray:
    """(Log-)level representation of one series: log for log codes, raw otherwise."""
    name = name or meta.mnemonic
    x = np.asarray(series, dtype=float)
    if meta.tc in LOG_TCODES and not meta.is_interest_rate:
        if np.any(x <= 0):
            raise DomainError(f"{name}: non-positive value under log policy")
        return np.log(x)
    return x


def build_level_panel(panel: Panel) -> Panel:
    """Panel ready for I(1) factor extraction.

    I(1) series enter in (log-)levels; I(0) series are cumulated (after their
    own stationarity transform) so every column behaves like an I(1) process.
    Interest-rate series are never logged.
    """
    cols = []
    for j, m in enumerate(panel.meta):
        if m.integration_order is None:
            raise ConfigError(f"series {m.mnemonic!r}: integration_order not set")
        x = panel.values[:, j]
        if m.integration_order == "I1":
            cols.append(level_representation(x, m))
        else:
            transformed, _ = apply_transformation(x, m.tc, m.mnemonic)
            cols.append(cumulate(transformed))
    T = min(len(c) for c in cols)
    values = np.column_stack([c[-T:] for c in cols])
    return Panel(values, panel.time_index[-T:], panel.meta)


def transform_panel(panel: Panel, screen_outliers: bool = True):
    """Apply each series' TC, balance, and optionally screen outliers.

    Returns (transformed panel, records by mnemonic, outlier log). The outlier
    log maps mnemonic -> list of (index, original, replacement) in the
    balanced transformed panel.
    """
    cols, records = [], {}
    for j, m in enumerate(panel.meta):
        out, rec = apply_transformation(panel.values[:, j], m.tc, m.mnemonic)
        cols.append(out)
        records[m.mnemonic] = rec
    T = min(len(c) for c in cols)
    values = np.column_stack([c[-T:] for c in cols])
    outlier_log: dict[str, list[tuple[int, float, float]]] = {}
    if screen_outliers:
        for j, m in enumerate(panel.meta):
            cleaned, idx = replace_outliers(values[:, j], m.mnemonic)
            if idx:
                outlier_log[m.mnemonic] = [(i, float(values[i, j]), float(cleaned[i])) for i in idx]
                values[:, j] = cleaned
    out_panel = Panel(values, panel.time_index[-T:], panel.meta)
    return out_panel, records, outlier_log


def seasonality_check(panel: Panel, level: float = 0.05) -> list[str]:
    """Advisory quarterly-dummy F-test; returns mnemonics with seasonality at ``level``.

    Never modifies data: the pipeline assumes seasonally adjusted input.
    """
    from scipy import stats

    flagged = []
    quarters = np.array([q for _, q in panel.time_index])
    for j, m in enumerate(panel.meta):
        y = panel.values[:, j]
        groups = [y[quarters == q] for q in (1, 2, 3, 4) if np.any(quarters == q)]
        if len(groups) < 2 or any(len(g) < 2 for g in groups):
            continue
        fstat, pval = stats.f_oneway(*groups)
        if np.isfinite(pval) and pval < level:
            flagged.append(m.mnemonic)
    return flagged


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def read_metadata(path) -> list[SeriesMeta]:
    """Read series metadata from a delimited file.

    Expected columns: mnemonic, description, tc, is_interest_rate,
    integration_order (order-insensitive; extra columns ignored).
    """
    df = pd.read_csv(path)
    required = {"mnemonic", "tc"}
    missing = required - set(df.columns)
    if missing:
        raise ConfigError(f"metadata file missing columns: {sorted(missing)}")
    metas = []
    for i, row in df.iterrows():
        metas.append(
            SeriesMeta(
                id=int(row.get("id", i + 1)),
                mnemonic=str(row["mnemonic"]),
                description=str(row.get("description", "")),
                tc=int(row["tc"]),
                is_interest_rate=_as_bool(row.get("is_interest_rate", False)),
                integration_order=(str(row["integration_order"])
                                   if "integration_order" in df.columns and pd.notna(row["integration_order"])
                                   else None),
            )
        )
    return metas


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in {"1", "true", "yes"}
    return bool(v)


def read_panel(data_path, meta_path) -> Panel:
    """Read a panel from a delimited data file plus its metadata file.

    The data file's first column is ``date`` in ``YYYYQn`` format, one column
    per mnemonic. Leading/trailing rows with missing values are trimmed to the
    maximal common span; interior gaps are an error.
    """
    metas = {m.mnemonic: m for m in read_metadata(meta_path)}
    df = pd.read_csv(data_path)
    if df.columns[0].lower() != "date":
        raise ConfigError("panel file must start with a 'date' column")
    unknown = [c for c in df.columns[1:] if c not in metas]
    if unknown:
        raise ConfigError(f"panel columns without metadata: {unknown}")
    dates = [parse_quarter(str(d)) for d in df.iloc[:, 0]]
    values = df.iloc[:, 1:].to_numpy(dtype=float)
    ok = ~np.isnan(values).any(axis=1)
    if not ok.any():
        raise ConfigError("no complete rows in panel")
    start, stop = np.flatnonzero(ok)[0], np.flatnonzero(ok)[-1] + 1
    values, dates = values[start:stop], dates[start:stop]
    if np.isnan(values).any():
        raise ConfigError("interior missing values in panel; EM imputation is out of scope")
    meta = tuple(metas[c] for c in df.columns[1:])
    return Panel(values, tuple(dates), meta)


def write_panel(panel: Panel, path) -> None:
    panel.to_frame().to_csv(path)
