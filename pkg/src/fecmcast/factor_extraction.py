"""Principal-component factor estimation for large panels.

Two factor families are estimated:

* I(1) ("level") factors: principal components of the demeaned (optionally
  linearly detrended) level panel, with the T^2 normalization appropriate for
  integrated data, and their count picked by a penalized criterion tuned to
  the integrated case.
* I(0) ("stationary") factors: principal components of the standardized
  differenced panel, with the usual F'F/T = I normalization and the ICp2
  information criterion for their count.

A third stationary source is supported: principal components of the residuals
from regressing the level panel on the level factors, for panels with common
cycles on top of common trends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_pipeline import Panel
from .errors import ContractError, NumericError


@dataclass
class FactorSet:
    """Estimated factors, loadings and the criterion trace behind the counts."""

    f_i1: np.ndarray            # T x r1 level factors
    f_i0: np.ndarray            # (T-1) x r0 stationary factors
    loadings_i1: np.ndarray     # N x r1
    loadings_i0: np.ndarray     # N x r0
    r1: int
    r0: int
    criteria_trace: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r1 < 0 or self.r0 < 0:
            raise ContractError("factor counts must be nonnegative")

    def export_frame(self, time_index):
        import pandas as pd

        idx = [f"{y}Q{q}" for y, q in time_index]
        cols = {f"F1_{k + 1}": self.f_i1[:, k] for k in range(self.r1)}
        df = pd.DataFrame(cols, index=pd.Index(idx, name="date"))
        # stationary factors start one quarter later
        for k in range(self.r0):
            df[f"F0_{k + 1}"] = np.concatenate([[np.nan], self.f_i0[:, k]])
        return df


def _fix_signs(factors: np.ndarray, loadings: np.ndarray):
    """Sign convention: first nonzero loading of each factor is positive."""
    F, L = factors.copy(), loadings.copy()
    for k in range(L.shape[1]):
        col = L[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            F[:, k] *= -1.0
            L[:, k] *= -1.0
    return F, L


def _top_eigvecs(S: np.ndarray, r: int):
    """Leading r eigenpairs of a symmetric PSD matrix, descending."""
    eigval, eigvec = np.linalg.eigh(S)
    order = np.argsort(eigval)[::-1]
    return eigval[order][:r], eigvec[:, order][:, :r]


def demean_or_detrend(X: np.ndarray, detrend: bool) -> np.ndarray:
    """Remove column means, or an OLS linear trend per column when ``detrend``."""
    T = X.shape[0]
    if not detrend:
        return X - X.mean(axis=0)
    t = np.arange(T, dtype=float)
    D = np.column_stack([np.ones(T), t])
    coef, *_ = np.linalg.lstsq(D, X, rcond=None)
    return X - D @ coef


def extract_level_factors(level_panel: Panel | np.ndarray, r1: int, detrend: bool = True):
    """Level-panel principal components under the integrated-data normalization.

    Returns (factors T x r1, loadings N x r1) with F'F/T^2 = I and
    loadings = X'F (F'F)^{-1}.
    """
    X = level_panel.values if isinstance(level_panel, Panel) else np.asarray(level_panel, float)
    T, N = X.shape
    if r1 > min(T, N):
        raise ContractError(f"r1={r1} exceeds min(T,N)={min(T, N)}")
    if r1 == 0:
        return np.empty((T, 0)), np.empty((N, 0))
    Xc = demean_or_detrend(X, detrend)
    _, vecs = _top_eigvecs(Xc @ Xc.T / (T * T * N), r1)
    F = T * vecs                       # F'F = T^2 I
    lam = Xc.T @ F / (T * T)           # X'F (F'F)^{-1}
    return _fix_signs(F, lam)


def extract_diff_factors(diff_panel: Panel | np.ndarray, r0: int):
    """Stationary principal components of a standardized differenced panel.

    Returns (factors T x r0, loadings N x r0) with F'F/T = I.
    """
    X = diff_panel.values if isinstance(diff_panel, Panel) else np.asarray(diff_panel, float)
    T, N = X.shape
    if r0 > min(T, N):
        raise ContractError(f"r0={r0} exceeds min(T,N)={min(T, N)}")
    if r0 == 0:
        return np.empty((T, 0)), np.empty((N, 0))
    _, vecs = _top_eigvecs(X @ X.T / (T * N), r0)
    F = np.sqrt(T) * vecs              # F'F = T I
    lam = X.T @ F / T
    return _fix_signs(F, lam)


def residual_factors(level_panel: Panel | np.ndarray, f_i1: np.ndarray, r_extra: int):
    """Stationary PCs of the residuals of the level panel on the level factors.

    Residuals with (numerically) zero variance are reported as degenerate via
    NumericError; an empty result is returned for r_extra = 0.
    """
    X = level_panel.values if isinstance(level_panel, Panel) else np.asarray(level_panel, float)
    T, N = X.shape
    if f_i1.size == 0:
        raise ContractError("residual factor extraction needs a nonempty level-factor block")
    if r_extra == 0:
        return np.empty((T, 0))
    G = f_i1.T @ f_i1
    if np.linalg.cond(G) > 1e12:
        raise NumericError("singular factor cross-product in residual regression")
    proj = f_i1 @ np.linalg.solve(G, f_i1.T @ X)
    E = X - proj
    sds = E.std(axis=0, ddof=1)
    if np.all(sds < 1e-10):
        raise NumericError("degenerate residual panel: all residual variances are numerically zero")
    keep = sds > 1e-10
    Z = (E[:, keep] - E[:, keep].mean(axis=0)) / sds[keep]
    F, _ = extract_diff_factors(Z, min(r_extra, min(T, int(keep.sum()))))
    return F


def cumulate_diff_factors(diff_panel: Panel | np.ndarray, r1: int) -> np.ndarray:
    """I(1) factor proxies: running sums of the differenced-data PCs.

    Output has length T (one more than the differenced sample), starting at 0.
    """
    X = diff_panel.values if isinstance(diff_panel, Panel) else np.asarray(diff_panel, float)
    F, _ = extract_diff_factors(X, r1)
    return np.vstack([np.zeros((1, r1)), np.cumsum(F, axis=0)])


def _ssr_profile(X: np.ndarray, r_max: int, integrated: bool):
    """Residual sums of squares of the r-factor approximations, r = 0..r_max."""
    T, N = X.shape
    scale = T * T * N if integrated else T * N
    eigval, _ = np.linalg.eigh(X @ X.T / scale)
    eigval = np.sort(eigval)[::-1]
    total = float(np.sum(eigval))
    # V(r): residual variance after removing the top r components
    return np.array([total - float(np.sum(eigval[:r])) for r in range(r_max + 1)])


def select_num_i1_factors(level_panel: Panel | np.ndarray, r_max: int, detrend: bool = True):
    """Count of level factors by the integrated-panel IPC criterion.

    IPC(r) = V(r) + r * sigma2 * alpha_T * (N+T)/(NT) * log(min(N,T)) with
    alpha_T = T / (4 log log T), V(r) the T^2-scaled residual variance and
    sigma2 = V(r_max). Returns (count, criterion values indexed by r).
    """
    X = level_panel.values if isinstance(level_panel, Panel) else np.asarray(level_panel, float)
    T, N = X.shape
    if r_max > min(T, N):
        raise ContractError(f"r_max={r_max} exceeds min(T,N)")
    if r_max == 0:
        return 0, np.zeros(1)
    Xc = demean_or_detrend(X, detrend)
    V = _ssr_profile(Xc, r_max, integrated=True)
    alpha_T = T / (4.0 * np.log(np.log(T)))
    penalty = V[r_max] * alpha_T * (N + T) / (N * T) * np.log(min(N, T))
    crit = V + penalty * np.arange(r_max + 1)
    return int(np.argmin(crit)), crit


def select_num_i0_factors(diff_panel: Panel | np.ndarray, r_max: int):
    """Count of stationary factors by the ICp2 criterion.

    ICp2(r) = ln V(r) + r * (N+T)/(NT) * ln(min(N,T)). Returns
    (count, criterion values indexed by r).
    """
    X = diff_panel.values if isinstance(diff_panel, Panel) else np.asarray(diff_panel, float)
    T, N = X.shape
    if r_max > min(T, N):
        raise ContractError(f"r_max={r_max} exceeds min(T,N)")
    if r_max == 0:
        return 0, np.zeros(1)
    V = _ssr_profile(X, r_max, integrated=False)
    with np.errstate(divide="ignore"):
        logV = np.where(V > 0, np.log(np.maximum(V, 1e-300)), -np.inf)
    crit = logV + np.arange(r_max + 1) * (N + T) / (N * T) * np.log(min(N, T))
    return int(np.argmin(crit)), crit


def estimate_factors(level_panel, diff_panel, r1: int, r0: int, detrend: bool = True,
                     r_extra: int = 0) -> FactorSet:
    """Full factor step: level factors, stationary factors, optional residual PCs."""
    f1, l1 = extract_level_factors(level_panel, r1, detrend=detrend)
    f0, l0 = extract_diff_factors(diff_panel, r0)
    trace = {}
    if r_extra > 0 and r1 > 0:
        extra = residual_factors(level_panel, f1, r_extra)
        if f0.size:
            L = min(f0.shape[0], extra.shape[0])
            f0 = np.column_stack([f0[-L:], extra[-L:]])
        else:
            f0 = extra
        l0 = np.column_stack([l0, np.full((l0.shape[0], extra.shape[1]), np.nan)])
        r0 = f0.shape[1]
    return FactorSet(f_i1=f1, f_i0=f0, loadings_i1=l1, loadings_i0=l0,
                     r1=r1, r0=r0, criteria_trace=trace)


def idiosyncratic_stationarity_report(level_panel: Panel | np.ndarray, f_i1: np.ndarray,
                                      level: float = 0.05) -> dict:
    """Diagnostic ADF screen of the idiosyncratic residuals behind the level factors.

    Reported only; nonstationary idiosyncratics undermine the validity of the
    level-factor step but are never enforced here.
    """
    from statsmodels.tsa.stattools import adfuller

    X = level_panel.values if isinstance(level_panel, Panel) else np.asarray(level_panel, float)
    if f_i1.size == 0:
        return {"n_series": X.shape[1], "n_nonstationary": 0, "pvalues": []}
    proj = f_i1 @ np.linalg.solve(f_i1.T @ f_i1, f_i1.T @ X)
    E = X - proj
    pvals = []
    for j in range(E.shape[1]):
        col = E[:, j]
        if col.std() < 1e-10:
            pvals.append(0.0)
            continue
        pvals.append(float(adfuller(col, regression="c", autolag="AIC")[1]))
    pvals = np.array(pvals)
    return {
        "n_series": X.shape[1],
        "n_nonstationary": int(np.sum(pvals > level)),
        "pvalues": pvals.tolist(),
    }


def canonical_correlations(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Canonical correlations between the column spaces of A and B (descending)."""
    A = np.atleast_2d(A.T).T - np.atleast_2d(A.T).T.mean(axis=0)
    B = np.atleast_2d(B.T).T - np.atleast_2d(B.T).T.mean(axis=0)
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    sv = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.clip(sv, 0.0, 1.0)
