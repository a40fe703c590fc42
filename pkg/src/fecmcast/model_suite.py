"""Estimation of the seven competing forecast models.

AR, VAR and ECM use the observable target variables only; FAR, FAVAR and FECM
augment them with estimated factors; FECMc is the FECM variant whose I(1)
factors are cumulated differenced-data principal components.

The error-correction family is estimated by reduced-rank (Johansen)
regression with an unrestricted constant. Cointegration rank comes either
from the sequential trace test or from a BIC-style criterion over lag-free
reduced-rank regressions; lag orders from BIC or Hannan-Quinn.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError, UnsupportedDimensionError
from .factor_extraction import FactorSet

MODEL_KINDS = ("AR", "FAR", "VAR", "FAVAR", "ECM", "FECM", "FECMc")
LAG_CRITERIA = ("BIC", "HQ")
RANK_METHODS = ("JohansenTrace", "ChengPhillipsBIC")


@dataclass
class ModelSpec:
    """What to estimate: model kind, targets, and selection settings."""

    kind: str
    variables: list[str] = field(default_factory=list)
    max_lag: int = 4
    lag_criterion: str = "BIC"
    rank_method: str = "ChengPhillipsBIC"
    r1: int = 1
    r0: int = 3
    lags: int | None = None        # fixed lag order; None = select
    rank: int | None = None        # fixed cointegration rank; None = select

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.lag_criterion not in LAG_CRITERIA:
            raise ContractError(f"unknown lag criterion {self.lag_criterion!r}")
        if self.rank_method not in RANK_METHODS:
            raise ContractError(f"unknown rank method {self.rank_method!r}")
        if self.kind in ("FAR", "FAVAR") and self.r0 < 1:
            raise ContractError(f"{self.kind} requires r0 >= 1")
        if self.kind in ("FECM", "FECMc") and self.r1 < 1:
            raise ContractError(f"{self.kind} requires r1 >= 1")


@dataclass
class VarModel:
    """VAR in the modeled space: y_t = mu + sum_k A_k y_{t-k} (+ C x_{t-1}) + e_t."""

    mu: np.ndarray               # (n,)
    A: list                      # p matrices, each n x n
    Sigma: np.ndarray            # n x n residual covariance
    exog_coeffs: np.ndarray | None = None   # n x q, on lagged exogenous regressors
    factor_var: "VarModel | None" = None    # companion dynamics for exogenous factors
    kind: str = "VAR"
    variables: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def lags(self) -> int:
        return len(self.A)


@dataclass
class VecmModel:
    """Error-correction model: Dy_t = mu + alpha beta' y_{t-1} + sum Phi_k Dy_{t-k} (+ C x_{t-1}) + e_t."""

    mu: np.ndarray               # (m,)
    alpha: np.ndarray            # m x r
    beta: np.ndarray             # m x r, leading r x r block = identity
    Phi: list                    # p-1 matrices, each m x m
    rank: int
    lags: int                    # p, the order of the level-VAR counterpart
    Sigma: np.ndarray            # m x m
    exog_coeffs: np.ndarray | None = None
    factor_var: "VarModel | None" = None
    kind: str = "ECM"
    variables: list[str] = field(default_factory=list)
    n_targets: int | None = None            # leading block of observable targets
    eigenvalues: np.ndarray | None = None   # reduced-rank regression eigenvalues

    @property
    def m(self) -> int:
        return self.mu.shape[0]


# ---------------------------------------------------------------------------
# OLS building blocks
# ---------------------------------------------------------------------------

def _lagged_design(Y: np.ndarray, p: int, exog: np.ndarray | None = None,
                   start: int | None = None):
    """Regressor matrix [1, Y_{t-1..t-p}, exog_{t-1}] for t = start..T-1.

    ``exog`` is aligned row-for-row with Y; its first lag enters. ``start``
    defaults to p (the earliest usable observation).
    """
    T, n = Y.shape
    start = p if start is None else start
    rows = T - start
    blocks = [np.ones((rows, 1))]
    for k in range(1, p + 1):
        blocks.append(Y[start - k: T - k])
    if exog is not None and exog.size:
        blocks.append(exog[start - 1: T - 1])
    return np.hstack(blocks), Y[start:]


def _ols(X: np.ndarray, Y: np.ndarray):
    """Least squares with a conditioning check; returns (coeffs, residuals, Sigma)."""
    if X.shape[0] <= X.shape[1]:
        raise NumericError(f"too few observations ({X.shape[0]}) for {X.shape[1]} regressors")
    B, _, rank_, _ = np.linalg.lstsq(X, Y, rcond=None)
    E = Y - X @ B
    Sigma = E.T @ E / X.shape[0]
    return B, E, Sigma


def _criterion_value(Sigma: np.ndarray, n_params_per_eq_lags: int, n: int, T: int,
                     criterion: str) -> float:
    sign, logdet = np.linalg.slogdet(Sigma)
    logdet = logdet if sign > 0 else -np.inf
    if criterion == "BIC":
        return logdet + n_params_per_eq_lags * n * n * np.log(T) / T
    if criterion == "HQ":
        return logdet + 2.0 * n_params_per_eq_lags * n * n * np.log(np.log(T)) / T
    raise ContractError(f"unknown criterion {criterion!r}")


def select_lags(Y: np.ndarray, max_lag: int, criterion: str = "BIC") -> int:
    """Lag order minimizing BIC or HQ over p = 1..max_lag, ties to smaller p.

    All candidates are compared on the common sample that drops max_lag
    initial observations.
    """
    Y = np.atleast_2d(np.asarray(Y, float).T).T
    if max_lag < 1:
        raise ContractError("max_lag must be >= 1")
    T, n = Y.shape
    T_eff = T - max_lag
    best_p, best_val = 1, np.inf
    for p in range(1, max_lag + 1):
        X, Z = _lagged_design(Y, p, start=max_lag)
        _, _, Sigma = _ols(X, Z)
        val = _criterion_value(Sigma, p, n, T_eff, criterion)
        if val < best_val - 1e-12:
            best_p, best_val = p, val
    return best_p


def fit_var(Y: np.ndarray, spec: ModelSpec, exog: np.ndarray | None = None) -> VarModel:
    """Equation-wise OLS VAR with joint lag selection by the spec's criterion."""
    Y = np.atleast_2d(np.asarray(Y, float).T).T
    T, n = Y.shape
    p = spec.lags if spec.lags is not None else select_lags(Y, spec.max_lag, spec.lag_criterion)
    if T < n * p + 10:
        raise ContractError(f"sample too short (T={T}) for a VAR({p}) in {n} variables")
    X, Z = _lagged_design(Y, p, exog=exog)
    B, _, Sigma = _ols(X, Z)
    mu = B[0]
    A = [B[1 + k * n: 1 + (k + 1) * n].T for k in range(p)]
    C = B[1 + p * n:].T if exog is not None and exog.size else None
    return VarModel(mu=mu, A=A, Sigma=Sigma, exog_coeffs=C, kind=spec.kind,
                    variables=list(spec.variables))


def fit_ar(y: np.ndarray, spec: ModelSpec) -> VarModel:
    """Univariate AR benchmark; lag order by the spec's criterion."""
    y = np.asarray(y, float).ravel()
    if y.std() == 0:
        raise NumericError("constant series: zero variance")
    if y.size < spec.max_lag + 10:
        raise ContractError(f"series too short (T={y.size}) for max_lag={spec.max_lag}")
    return fit_var(y[:, None], spec)


# ---------------------------------------------------------------------------
# Reduced-rank (Johansen) machinery
# ---------------------------------------------------------------------------

def _concentrated_moments(Y: np.ndarray, p: int, det_case: str = "const",
                          exog: np.ndarray | None = None):
    """Product-moment matrices of the concentrated error-correction regression.

    Regresses Dy_t and y_{t-1} on the short-run terms (constant, lagged
    differences, lagged exogenous regressors) and returns the residual moment
    matrices plus the pieces needed to recover the short-run coefficients.
    """
    Y = np.asarray(Y, float)
    T, m = Y.shape
    if p < 1:
        raise ContractError("lag order must be >= 1")
    dY = np.diff(Y, axis=0)
    start = p - 1                        # first usable row of dY
    Z0 = dY[start:]                      # T_eff x m
    Z1 = Y[p - 1: T - 1]                 # levels lagged once
    T_eff = Z0.shape[0]
    blocks = []
    if det_case == "const":
        blocks.append(np.ones((T_eff, 1)))
    elif det_case != "none":
        raise ContractError(f"unsupported deterministic case {det_case!r}")
    for k in range(1, p):
        blocks.append(dY[start - k: dY.shape[0] - k])
    if exog is not None and exog.size:
        blocks.append(exog[p - 1: T - 1])
    Z2 = np.hstack(blocks) if blocks else np.empty((T_eff, 0))
    if Z2.shape[1]:
        B0, _, _, _ = np.linalg.lstsq(Z2, Z0, rcond=None)
        B1, _, _, _ = np.linalg.lstsq(Z2, Z1, rcond=None)
        R0, R1 = Z0 - Z2 @ B0, Z1 - Z2 @ B1
    else:
        R0, R1 = Z0, Z1
    S00 = R0.T @ R0 / T_eff
    S11 = R1.T @ R1 / T_eff
    S01 = R0.T @ R1 / T_eff
    return dict(Z0=Z0, Z1=Z1, Z2=Z2, R0=R0, R1=R1, S00=S00, S11=S11, S01=S01,
                T_eff=T_eff, det_case=det_case)


def _rrr_eigen(S00, S11, S01):
    """Eigenvalues/vectors of S10 S00^{-1} S01 with respect to S11, descending."""
    try:
        L = np.linalg.cholesky(S11)
        np.linalg.cholesky(S00)
    except np.linalg.LinAlgError:
        raise NumericError("singular product-moment matrix in reduced-rank regression") from None
    # whitened symmetric problem: M = L^{-1} S10 S00^{-1} S01 L^{-T}, S11 = L L'
    M = np.linalg.solve(L, S01.T) @ np.linalg.solve(S00, S01) @ np.linalg.inv(L).T
    M = (M + M.T) / 2.0
    eigval, W = np.linalg.eigh(M)
    order = np.argsort(eigval)[::-1]
    eigval = np.clip(eigval[order], 0.0, 1.0 - 1e-12)
    V = np.linalg.solve(L.T, W[:, order])             # beta candidates, full set
    return eigval, V


def fit_vecm(Y: np.ndarray, rank: int, lags: int, det_case: str = "const",
             exog: np.ndarray | None = None, kind: str = "ECM",
             variables: list[str] | None = None) -> VecmModel:
    """Johansen reduced-rank estimation of a VECM at the given rank and lag order.

    ``lags`` is the order p of the level-VAR counterpart; p-1 lagged
    differences enter the short-run part. ``exog`` (aligned with Y's rows)
    enters with one lag as stationary regressors.
    """
    Y = np.asarray(Y, float)
    T, m = Y.shape
    if not 0 <= rank <= m:
        raise ContractError(f"rank {rank} outside [0, {m}]")
    if T < m * lags + 10:
        raise ContractError(f"sample too short (T={T}) for a VECM with p={lags} in {m} variables")
    mo = _concentrated_moments(Y, lags, det_case, exog)
    eigval, V = _rrr_eigen(mo["S00"], mo["S11"], mo["S01"])
    if rank > 0:
        beta = V[:, :rank]
        head = beta[:rank, :rank]
        if np.linalg.cond(head) > 1e10:
            raise NumericError("cointegrating matrix cannot be identity-normalized for this ordering")
        beta = beta @ np.linalg.inv(head)
        ect = mo["Z1"] @ beta
        X = np.hstack([ect, mo["Z2"]])
    else:
        beta = np.zeros((m, 0))
        ect = np.empty((mo["T_eff"], 0))
        X = mo["Z2"] if mo["Z2"].shape[1] else np.zeros((mo["T_eff"], 0))
    if X.shape[1]:
        B, E, Sigma = _ols(X, mo["Z0"])
    else:
        B = np.empty((0, m))
        E = mo["Z0"]
        Sigma = E.T @ E / mo["T_eff"]
    alpha = B[:rank].T if rank else np.zeros((m, 0))
    pos = rank
    if det_case == "const":
        mu = B[pos]
        pos += 1
    else:
        mu = np.zeros(m)
    Phi = []
    for _ in range(lags - 1):
        Phi.append(B[pos: pos + m].T)
        pos += m
    C = B[pos:].T if exog is not None and exog.size else None
    return VecmModel(mu=mu, alpha=alpha, beta=beta, Phi=Phi, rank=rank, lags=lags,
                     Sigma=(Sigma + Sigma.T) / 2, exog_coeffs=C, kind=kind,
                     variables=list(variables or []), eigenvalues=eigval)


def johansen_trace_rank(Y: np.ndarray, lags: int = 1, det_case: str = "const",
                        level: float = 0.05) -> int:
    """Cointegration rank by the sequential trace test at the given level.

    Critical-value tables cover systems of dimension m <= 12 for the
    unrestricted-constant case.
    """
    from statsmodels.tsa.coint_tables import c_sjt

    Y = np.asarray(Y, float)
    m = Y.shape[1]
    if m > 12:
        raise UnsupportedDimensionError(f"trace-test tables cover m <= 12, got {m}")
    col = {0.10: 0, 0.05: 1, 0.01: 2}.get(round(level, 2))
    if col is None:
        raise ContractError(f"unsupported test level {level}")
    det_p = 0 if det_case == "const" else -1
    mo = _concentrated_moments(Y, lags, det_case)
    eigval, _ = _rrr_eigen(mo["S00"], mo["S11"], mo["S01"])
    T_eff = mo["T_eff"]
    for r in range(m):
        trace = -T_eff * float(np.sum(np.log(1.0 - eigval[r:])))
        if trace < c_sjt(m - r, det_p)[col]:
            return r
    return m


def cheng_phillips_rank(Y: np.ndarray, det_case: str = "const") -> int:
    """Cointegration rank minimizing a BIC criterion over lag-free reduced-rank fits.

    crit(r) = ln det Sigma(r) + r (2m - r) ln(T) / T, with Sigma(r) the
    residual covariance of Dy_t = alpha beta' y_{t-1} (+ const) + e_t.
    """
    Y = np.asarray(Y, float)
    m = Y.shape[1]
    mo = _concentrated_moments(Y, 1, det_case)
    eigval, _ = _rrr_eigen(mo["S00"], mo["S11"], mo["S01"])
    T_eff = mo["T_eff"]
    sign, logdet_S00 = np.linalg.slogdet(mo["S00"])
    if sign <= 0:
        raise NumericError("residual covariance not positive definite")
    best_r, best_val = 0, np.inf
    for r in range(m + 1):
        logdet = logdet_S00 + float(np.sum(np.log(1.0 - eigval[:r])))
        val = logdet + r * (2 * m - r) * np.log(T_eff) / T_eff
        if val < best_val - 1e-12:
            best_r, best_val = r, val
    return best_r


def _resolve_rank(Y: np.ndarray, spec: ModelSpec, lags: int) -> int:
    if spec.rank is not None:
        return spec.rank
    if spec.rank_method == "ChengPhillipsBIC":
        return cheng_phillips_rank(Y)
    return johansen_trace_rank(Y, lags=lags)


def fit_ecm(Y_levels: np.ndarray, spec: ModelSpec) -> VecmModel:
    """ECM on observable targets only: VECM with selected rank and lags."""
    Y = np.asarray(Y_levels, float)
    lags = spec.lags if spec.lags is not None else select_lags(Y, spec.max_lag, spec.lag_criterion)
    rank = _resolve_rank(Y, spec, lags)
    model = fit_vecm(Y, rank, lags, kind="ECM", variables=spec.variables)
    model.n_targets = Y.shape[1]
    return model


def fit_fecm(y_levels: np.ndarray, factors: FactorSet, spec: ModelSpec,
             f_i1_override: np.ndarray | None = None) -> VecmModel:
    """FECM: joint VECM on targets stacked with the I(1) factors.

    Stationary factors enter every equation as lagged exogenous regressors
    and receive VAR(1) companion dynamics for iterated forecasting. Passing
    ``f_i1_override`` (e.g. cumulated differenced-data PCs) yields the FECMc
    variant. With an empty I(1) factor block the model degenerates to the ECM.
    """
    y = np.atleast_2d(np.asarray(y_levels, float).T).T
    f1 = factors.f_i1 if f_i1_override is None else f_i1_override
    if f1.size:
        if f1.shape[0] != y.shape[0]:
            raise ContractError(
                f"factor/target misalignment: {f1.shape[0]} factor rows vs {y.shape[0]} target rows")
        Y = np.hstack([y, f1])
    else:
        Y = y
    exog = factors.f_i0 if factors.f_i0.size else None
    if exog is not None:
        if exog.shape[0] == Y.shape[0] - 1:
            # stationary factors start one period later; drop the first level row
            Y = Y[1:]
        elif exog.shape[0] != Y.shape[0]:
            raise ContractError(
                f"stationary factor block has {exog.shape[0]} rows, "
                f"levels have {Y.shape[0]}")
    lags = spec.lags if spec.lags is not None else select_lags(Y, spec.max_lag, spec.lag_criterion)
    rank = _resolve_rank(Y, spec, lags)
    model = fit_vecm(Y, rank, lags, exog=exog, kind=spec.kind, variables=spec.variables)
    model.n_targets = y.shape[1]
    if exog is not None:
        model.factor_var = fit_var(exog, ModelSpec(kind="VAR", lags=1))
    return model


def fit_favar(y_diff: np.ndarray, factors: FactorSet, spec: ModelSpec) -> VarModel:
    """FAVAR: joint VAR on the differenced targets stacked with stationary factors."""
    y = np.atleast_2d(np.asarray(y_diff, float).T).T
    f0 = factors.f_i0
    if f0.size and f0.shape[0] != y.shape[0]:
        raise ContractError(
            f"factor/target misalignment: {f0.shape[0]} factor rows vs {y.shape[0]} target rows")
    X = np.hstack([y, f0]) if f0.size else y
    model = fit_var(X, spec)
    model.kind = spec.kind
    return model


def fit_far(y_diff: np.ndarray, factors: FactorSet, spec: ModelSpec) -> VarModel:
    """FAR: AR on a differenced target augmented with lagged stationary factors.

    Factor propagation for iterated forecasting uses VAR(1) companion
    dynamics on the stationary factors.
    """
    y = np.asarray(y_diff, float).ravel()
    f0 = factors.f_i0
    if not f0.size:
        raise ContractError("FAR requires a nonempty stationary factor block")
    if f0.shape[0] != y.size:
        raise ContractError(
            f"factor/target misalignment: {f0.shape[0]} factor rows vs {y.size} target rows")
    p = spec.lags if spec.lags is not None else select_lags(y[:, None], spec.max_lag, spec.lag_criterion)
    sub = ModelSpec(kind=spec.kind, variables=spec.variables, lags=p)
    model = fit_var(y[:, None], sub, exog=f0)
    model.factor_var = fit_var(f0, ModelSpec(kind="VAR", lags=1))
    return model


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def model_to_dict(model) -> dict:
    """Plain-dict form of a fitted model (matrices row-major nested lists)."""
    if isinstance(model, VarModel):
        d = {
            "type": "VarModel", "kind": model.kind, "variables": model.variables,
            "mu": _arr(model.mu), "A": [_arr(a) for a in model.A],
            "Sigma": _arr(model.Sigma), "exog_coeffs": _arr(model.exog_coeffs),
            "lags": model.lags,
        }
    elif isinstance(model, VecmModel):
        d = {
            "type": "VecmModel", "kind": model.kind, "variables": model.variables,
            "mu": _arr(model.mu), "alpha": _arr(model.alpha), "beta": _arr(model.beta),
            "Phi": [_arr(a) for a in model.Phi], "rank": model.rank, "lags": model.lags,
            "Sigma": _arr(model.Sigma), "exog_coeffs": _arr(model.exog_coeffs),
            "n_targets": model.n_targets,
        }
    else:
        raise ContractError(f"cannot serialize {type(model).__name__}")
    if getattr(model, "factor_var", None) is not None:
        d["factor_var"] = model_to_dict(model.factor_var)
    return d


def model_from_dict(d: dict):
    fv = model_from_dict(d["factor_var"]) if d.get("factor_var") else None
    if d["type"] == "VarModel":
        return VarModel(
            mu=np.array(d["mu"], float), A=[np.array(a, float) for a in d["A"]],
            Sigma=np.array(d["Sigma"], float),
            exog_coeffs=None if d["exog_coeffs"] is None else np.array(d["exog_coeffs"], float),
            factor_var=fv, kind=d["kind"], variables=list(d["variables"]),
        )
    if d["type"] == "VecmModel":
        m = len(d["mu"])
        return VecmModel(
            mu=np.array(d["mu"], float),
            alpha=np.array(d["alpha"], float).reshape(m, -1),
            beta=np.array(d["beta"], float).reshape(m, -1),
            Phi=[np.array(a, float) for a in d["Phi"]],
            rank=d["rank"], lags=d["lags"], Sigma=np.array(d["Sigma"], float),
            exog_coeffs=None if d["exog_coeffs"] is None else np.array(d["exog_coeffs"], float),
            factor_var=fv, kind=d["kind"], variables=list(d["variables"]),
            n_targets=d.get("n_targets"),
        )
    raise ContractError(f"unknown model type {d.get('type')!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
