import numpy as np
import pytest

from fecmcast import model_suite as ms
from fecmcast.errors import ContractError, NumericError, UnsupportedDimensionError
from fecmcast.factor_extraction import FactorSet
from fecmcast.model_suite import (ModelSpec, VarModel, VecmModel, fit_ar,
                                  fit_ecm, fit_far, fit_favar, fit_fecm,
                                  fit_var, fit_vecm, select_lags)


def ar2_series(rng, T, phi1=0.5, phi2=0.3, mu=1.0):
    y = np.zeros(T + 50)
    eps = rng.standard_normal(T + 50)
    for t in range(2, T + 50):
        y[t] = mu + phi1 * y[t - 1] + phi2 * y[t - 2] + eps[t]
    return y[50:]


def coint_pair(rng, T, load=0.5):
    w = np.cumsum(rng.standard_normal(T) + 0.1)
    y1 = w + rng.standard_normal(T)
    y2 = load * w + rng.standard_normal(T)
    return np.column_stack([y1, y2])


def empty_factorset(T):
    return FactorSet(f_i1=np.empty((T, 0)), f_i0=np.empty((T - 1, 0)),
                     loadings_i1=np.empty((0, 0)), loadings_i0=np.empty((0, 0)),
                     r1=0, r0=0)


class TestModelSpec:
    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            ModelSpec(kind="ARIMA")

    def test_far_needs_factors(self):
        with pytest.raises(ContractError):
            ModelSpec(kind="FAR", r0=0)

    def test_fecm_needs_trend_factors(self):
        with pytest.raises(ContractError):
            ModelSpec(kind="FECM", r1=0)

    def test_defaults_valid(self):
        spec = ModelSpec(kind="VAR")
        assert spec.max_lag == 4 and spec.lag_criterion == "BIC"


class TestSelectLags:
    def test_ar2_rate(self):
        hits = 0
        for rep in range(100):
            y = ar2_series(np.random.default_rng(2000 + rep), 200)
            hits += select_lags(y[:, None], 4, "BIC") == 2
        assert hits >= 85

    def test_hq_never_below_bic_order_on_average(self):
        # HQ penalizes less than BIC for T with log T > 2 log log T
        bic_sum = hq_sum = 0
        for rep in range(50):
            y = ar2_series(np.random.default_rng(2100 + rep), 150)
            bic_sum += select_lags(y[:, None], 6, "BIC")
            hq_sum += select_lags(y[:, None], 6, "HQ")
        assert hq_sum >= bic_sum

    def test_white_noise_picks_one(self):
        hits = 0
        for rep in range(50):
            rng = np.random.default_rng(2200 + rep)
            hits += select_lags(rng.standard_normal((150, 1)), 4, "BIC") == 1
        assert hits >= 45

    def test_invalid_max_lag(self):
        with pytest.raises(ContractError):
            select_lags(np.zeros((50, 1)), 0)


class TestFitVar:
    def test_matches_reference_implementation(self, rng):
        from statsmodels.tsa.api import VAR as SmVAR

        A1 = np.array([[0.5, 0.1], [-0.2, 0.4]])
        T = 300
        Y = np.zeros((T, 2))
        eps = rng.standard_normal((T, 2))
        for t in range(1, T):
            Y[t] = np.array([0.3, -0.1]) + A1 @ Y[t - 1] + eps[t]
        model = fit_var(Y, ModelSpec(kind="VAR", lags=2))
        ref = SmVAR(Y).fit(2, trend="c")
        assert np.allclose(model.mu, ref.params[0], atol=1e-8)
        for k in range(2):
            assert np.allclose(model.A[k], ref.coefs[k], atol=1e-8)

    def test_coefficient_recovery(self, rng):
        A1 = np.array([[0.6, 0.0], [0.2, 0.5]])
        T = 5000
        Y = np.zeros((T, 2))
        eps = rng.standard_normal((T, 2))
        for t in range(1, T):
            Y[t] = A1 @ Y[t - 1] + eps[t]
        model = fit_var(Y, ModelSpec(kind="VAR", lags=1))
        assert np.allclose(model.A[0], A1, atol=0.05)
        assert np.allclose(model.Sigma, np.eye(2), atol=0.1)

    def test_too_short(self, rng):
        with pytest.raises(ContractError):
            fit_var(rng.standard_normal((12, 3)), ModelSpec(kind="VAR", lags=4))


class TestFitAr:
    def test_recovery(self, rng):
        y = ar2_series(rng, 5000)
        model = fit_ar(y, ModelSpec(kind="AR", lags=2))
        assert abs(model.A[0][0, 0] - 0.5) < 0.05
        assert abs(model.A[1][0, 0] - 0.3) < 0.05
        assert abs(model.mu[0] - 1.0) < 0.15

    def test_constant_series_rejected(self):
        with pytest.raises(NumericError):
            fit_ar(np.ones(100), ModelSpec(kind="AR"))


class TestFitVecm:
    def test_matches_reference_implementation(self, rng):
        from statsmodels.tsa.vector_ar.vecm import VECM as SmVECM

        Y = coint_pair(rng, 400)
        model = fit_vecm(Y, rank=1, lags=2)
        ref = SmVECM(Y, k_ar_diff=1, coint_rank=1, deterministic="co").fit()
        assert np.allclose(model.beta, ref.beta, atol=1e-8)
        assert np.allclose(model.alpha, ref.alpha, atol=1e-8)
        assert np.allclose(model.mu, ref.det_coef[:, 0], atol=1e-8)
        assert np.allclose(model.Phi[0], ref.gamma, atol=1e-8)

    def test_eigenvalues_match_johansen(self, rng):
        from statsmodels.tsa.vector_ar.vecm import coint_johansen

        Y = coint_pair(rng, 300)
        model = fit_vecm(Y, rank=1, lags=2)
        jo = coint_johansen(Y, 0, 1)
        assert np.allclose(model.eigenvalues, jo.eig, atol=1e-8)

    def test_beta_recovery(self):
        errs = []
        for rep in range(20):
            Y = coint_pair(np.random.default_rng(2300 + rep), 2000, load=1.0)
            model = fit_vecm(Y, rank=1, lags=1)
            errs.append(abs(model.beta[1, 0] + 1.0))
        assert np.median(errs) < 0.02

    def test_rank_zero_equals_diff_var(self, rng):
        Y = coint_pair(rng, 200)
        model = fit_vecm(Y, rank=0, lags=3)
        diff_var = fit_var(np.diff(Y, axis=0), ModelSpec(kind="VAR", lags=2))
        assert np.allclose(model.mu, diff_var.mu, atol=1e-8)
        for k in range(2):
            assert np.allclose(model.Phi[k], diff_var.A[k], atol=1e-8)

    def test_identity_normalization(self, rng):
        Y = np.column_stack([coint_pair(rng, 300), coint_pair(rng, 300)])
        model = fit_vecm(Y, rank=2, lags=2)
        assert np.allclose(model.beta[:2, :2], np.eye(2), atol=1e-10)

    def test_rank_bounds(self, rng):
        Y = coint_pair(rng, 100)
        with pytest.raises(ContractError):
            fit_vecm(Y, rank=3, lags=1)


class TestRankSelection:
    def test_johansen_detects_cointegration(self):
        hits = 0
        for rep in range(50):
            Y = coint_pair(np.random.default_rng(2400 + rep), 500)
            hits += ms.johansen_trace_rank(Y, lags=2) == 1
        assert hits >= 40

    def test_johansen_size_with_drift(self):
        # independent drifted random walks: rejection of rank 0 near the 5% level
        rejections = 0
        n_reps = 200
        for rep in range(n_reps):
            rng = np.random.default_rng(2500 + rep)
            Y = np.cumsum(rng.standard_normal((200, 2)) + np.array([0.5, 0.3]), axis=0)
            rejections += ms.johansen_trace_rank(Y, lags=1) > 0
        assert 0.01 * n_reps <= rejections <= 0.10 * n_reps

    def test_johansen_dimension_cap(self, rng):
        with pytest.raises(UnsupportedDimensionError):
            ms.johansen_trace_rank(rng.standard_normal((100, 13)))

    def test_cheng_phillips_rank_one(self):
        hits = 0
        for rep in range(100):
            Y = coint_pair(np.random.default_rng(2600 + rep), 500, load=1.0)
            hits += ms.cheng_phillips_rank(Y) == 1
        assert hits >= 80

    def test_cheng_phillips_rank_zero(self):
        hits = 0
        for rep in range(100):
            rng = np.random.default_rng(2700 + rep)
            Y = np.cumsum(rng.standard_normal((200, 2)) + np.array([0.4, 0.2]), axis=0)
            hits += ms.cheng_phillips_rank(Y) == 0
        assert hits >= 85

    def test_cheng_phillips_full_rank_on_stationary(self, rng):
        Y = rng.standard_normal((300, 2))
        assert ms.cheng_phillips_rank(Y) == 2


class TestFactorModels:
    def make_factors(self, rng, T, r1=1, r0=2):
        f1 = np.cumsum(rng.standard_normal((T, r1)), axis=0) if r1 else np.empty((T, 0))
        f0 = rng.standard_normal((T - 1, r0)) if r0 else np.empty((T - 1, 0))
        return FactorSet(f_i1=f1, f_i0=f0,
                         loadings_i1=np.empty((0, r1)), loadings_i0=np.empty((0, r0)),
                         r1=r1, r0=r0)

    def test_fecm_shapes(self, rng):
        T = 150
        Y = coint_pair(rng, T)
        fs = self.make_factors(rng, T)
        model = fit_fecm(Y, fs, ModelSpec(kind="FECM", lags=2, rank=1))
        assert model.m == 3
        assert model.n_targets == 2
        assert model.exog_coeffs.shape == (3, 2)
        assert model.factor_var is not None and model.factor_var.lags == 1

    def test_fecm_without_stationary_factors_extends_ecm(self, rng):
        T = 150
        Y = coint_pair(rng, T)
        fs = self.make_factors(rng, T, r1=1, r0=0)
        model = fit_fecm(Y, fs, ModelSpec(kind="FECM", lags=2, rank=1))
        assert model.m == 3
        assert model.exog_coeffs is None and model.factor_var is None

    def test_fecm_misalignment(self, rng):
        Y = coint_pair(rng, 150)
        fs = self.make_factors(rng, 120)
        with pytest.raises(ContractError, match="misalignment"):
            fit_fecm(Y, fs, ModelSpec(kind="FECM", lags=1, rank=1))

    def test_fecmc_uses_override(self, rng):
        T = 150
        Y = coint_pair(rng, T)
        fs = self.make_factors(rng, T, r1=1, r0=1)
        override = np.cumsum(rng.standard_normal((T, 2)), axis=0)
        model = fit_fecm(Y, fs, ModelSpec(kind="FECMc", lags=1, rank=1),
                         f_i1_override=override)
        assert model.m == 4
        assert model.kind == "FECMc"

    def test_favar(self, rng):
        T = 150
        fs = self.make_factors(rng, T + 1, r1=0, r0=2)
        dy = rng.standard_normal((T, 2))
        model = fit_favar(dy, fs, ModelSpec(kind="FAVAR", lags=1))
        assert model.n == 4
        assert model.kind == "FAVAR"

    def test_far(self, rng):
        T = 150
        fs = self.make_factors(rng, T + 1, r1=0, r0=3)
        dy = rng.standard_normal(T)
        model = fit_far(dy, fs, ModelSpec(kind="FAR", lags=2))
        assert model.n == 1
        assert model.exog_coeffs.shape == (1, 3)
        assert model.factor_var.n == 3

    def test_far_needs_factors(self, rng):
        fs = empty_factorset(100)
        with pytest.raises(ContractError):
            fit_far(rng.standard_normal(99), fs, ModelSpec(kind="FAR", lags=1))

    def test_ecm_resolves_rank_and_lags(self, rng):
        Y = coint_pair(rng, 300, load=1.0)
        model = fit_ecm(Y, ModelSpec(kind="ECM", max_lag=4))
        assert 1 <= model.lags <= 4
        assert 0 <= model.rank <= 2
        assert model.n_targets == 2


class TestSerialization:
    def test_var_round_trip(self, rng, tmp_path):
        Y = rng.standard_normal((120, 2))
        model = fit_var(Y, ModelSpec(kind="VAR", lags=2, variables=["a", "b"]))
        path = tmp_path / "var.json"
        ms.save_model(model, path)
        back = ms.load_model(path)
        assert isinstance(back, VarModel)
        assert np.allclose(back.mu, model.mu)
        for k in range(2):
            assert np.allclose(back.A[k], model.A[k])
        assert back.variables == ["a", "b"]

    def test_vecm_round_trip(self, rng, tmp_path):
        Y = coint_pair(rng, 200)
        f0 = rng.standard_normal((199, 2))
        fs = FactorSet(f_i1=np.cumsum(rng.standard_normal((200, 1)), axis=0), f_i0=f0,
                       loadings_i1=np.empty((0, 1)), loadings_i0=np.empty((0, 2)),
                       r1=1, r0=2)
        model = fit_fecm(Y, fs, ModelSpec(kind="FECM", lags=2, rank=1))
        path = tmp_path / "fecm.json"
        ms.save_model(model, path)
        back = ms.load_model(path)
        assert isinstance(back, VecmModel)
        assert back.rank == 1 and back.lags == 2 and back.kind == "FECM"
        assert np.allclose(back.alpha @ back.beta.T, model.alpha @ model.beta.T)
        assert np.allclose(back.exog_coeffs, model.exog_coeffs)
        assert back.factor_var is not None
        assert np.allclose(back.factor_var.A[0], model.factor_var.A[0])
