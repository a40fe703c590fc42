from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fecmcast import evaluation_report as er
from fecmcast.errors import ContractError, NumericError
from fecmcast.evaluation_report import (EvalReport, build_report, compute_rmse,
                                        emit_figure_data, figure_frame,
                                        relative_mse, render_tables,
                                        report_to_dict, write_report)

GOLDEN = Path(__file__).parent / "golden"

MODELS = ("FAR", "VAR", "FAVAR", "ECM", "FECM", "FECMc")


def benchmark_report():
    """Report filled with the published benchmark values, h = 1."""
    rep = EvalReport(targets=("PPI", "CPI", "MMIR"), horizons=(1,), models=MODELS)
    rep.rmse_ar = {("PPI", 1): 0.93, ("CPI", 1): 0.75, ("MMIR", 1): 1.26}
    vals = {
        "PPI": [1.21, 1.01, 1.41, 1.04, 1.09, 0.98],
        "CPI": [0.97, 0.95, 1.00, 0.98, 0.82, 0.87],
        "MMIR": [1.16, 1.26, 1.52, 1.16, 1.33, 1.24],
    }
    for t, row in vals.items():
        rep.mse_ratios[(t, 1)] = dict(zip(MODELS, row))
        rep.rmse_ratios[(t, 1)] = {m: np.sqrt(v) for m, v in zip(MODELS, row)}
        rep.n_errors[(t, 1)] = 28
    rep.rank_summary = {"ECM": (2.00, 2.00, 2.00), "FECM": (2.55, 2.00, 3.00)}
    return rep


def toy_frame():
    """Two models, one target, three origins with hand-checkable errors."""
    rows = []
    errors = {"AR": [1.0, -1.0, 2.0], "VAR": [0.5, -0.5, 1.0]}
    for model, errs in errors.items():
        for i, e in enumerate(errs):
            rows.append({"model": model, "target": "Y1", "origin": f"2010Q{i + 1}",
                         "horizon": 1, "forecast_level": 10.0 + e,
                         "realized_level": 10.0,
                         "forecast_transformed": e, "realized_transformed": 0.0})
    return pd.DataFrame(rows)


class TestStatistics:
    def test_rmse_hand_value(self):
        assert np.isclose(compute_rmse([3.0, 4.0]), np.sqrt(12.5))

    def test_rmse_empty(self):
        with pytest.raises(ContractError):
            compute_rmse([])

    def test_relative_mse_quarter(self):
        assert np.isclose(relative_mse([0.5, -0.5, 1.0], [1.0, -1.0, 2.0]), 0.25)

    def test_root_is_sqrt(self):
        r = relative_mse([0.5, 1.0], [1.0, 2.0])
        assert np.isclose(relative_mse([0.5, 1.0], [1.0, 2.0], root=True), np.sqrt(r))

    def test_unmatched_lengths(self):
        with pytest.raises(ContractError):
            relative_mse([1.0], [1.0, 2.0])

    def test_zero_benchmark(self):
        with pytest.raises(NumericError):
            relative_mse([1.0], [0.0])


class TestBuildReport:
    def test_hand_computed_cell(self):
        rep = build_report(toy_frame())
        assert np.isclose(rep.rmse_ar[("Y1", 1)], np.sqrt(2.0))
        assert np.isclose(rep.mse_ratios[("Y1", 1)]["VAR"], 0.25)
        assert rep.n_errors[("Y1", 1)] == 3

    def test_transformed_basis(self):
        rep = build_report(toy_frame(), basis="transformed")
        assert np.isclose(rep.mse_ratios[("Y1", 1)]["VAR"], 0.25)

    def test_origin_intersection(self):
        # VAR missing one origin: that origin drops from the AR errors too
        frame = toy_frame()
        frame = frame[~((frame["model"] == "VAR") & (frame["origin"] == "2010Q3"))]
        rep = build_report(frame)
        assert rep.n_errors[("Y1", 1)] == 2
        assert np.isclose(rep.rmse_ar[("Y1", 1)], 1.0)
        assert np.isclose(rep.mse_ratios[("Y1", 1)]["VAR"], 0.25)

    def test_requires_ar(self):
        frame = toy_frame()
        frame = frame[frame["model"] != "AR"]
        with pytest.raises(ContractError, match="AR"):
            build_report(frame)

    def test_model_column_order_fixed(self):
        frame = toy_frame()
        extra = frame[frame["model"] == "VAR"].copy()
        extra["model"] = "FECM"
        rep = build_report(pd.concat([frame, extra], ignore_index=True))
        assert rep.models == ("VAR", "FECM")

    def test_traces_summarized(self):
        rep = build_report(toy_frame(), rank_trace={"ECM": [2, 2, 3]},
                           lag_trace={"AR": [1, 2]})
        assert rep.rank_summary["ECM"] == (pytest.approx(7 / 3), 2.0, 3.0)
        assert rep.lag_summary["AR"] == (1.5, 1.0, 2.0)


class TestRendering:
    def test_golden_benchmark_table(self):
        text = render_tables(benchmark_report(), 1, locale="comma")
        assert text == (GOLDEN / "table2_h1.txt").read_text()

    def test_point_locale(self):
        text = render_tables(benchmark_report(), 1, locale="point")
        assert "0.93" in text and "," not in text.replace(", ", "")

    def test_render_deterministic(self):
        rep = benchmark_report()
        assert render_tables(rep, 1) == render_tables(rep, 1)

    def test_missing_horizon_renders_headers_only(self):
        text = render_tables(benchmark_report(), 4)
        body = [ln for ln in text.splitlines() if ln.startswith(("PPI", "CPI", "MMIR"))]
        assert body == []
        assert text.startswith("Variables\t")


class TestFigure:
    def test_row_count(self):
        df = figure_frame(benchmark_report())
        assert len(df) == 3 * 1 * 6
        assert set(df.columns) == {"target", "horizon", "model", "mse_ratio"}

    def test_svg_bytes_deterministic(self, tmp_path):
        rep = benchmark_report()
        emit_figure_data(rep, tmp_path / "a.svg", tmp_path / "a.csv")
        emit_figure_data(rep, tmp_path / "b.svg", tmp_path / "b.csv")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestSerialization:
    def test_report_dict_schema(self):
        d = report_to_dict(benchmark_report())
        assert d["targets"] == ["PPI", "CPI", "MMIR"]
        assert d["models"] == list(MODELS)
        assert len(d["cells"]) == 3
        cell = next(c for c in d["cells"] if c["target"] == "PPI")
        assert cell["rmse_ar"] == 0.93
        assert cell["mse_ratios"]["FECMc"] == 0.98
        assert d["rank_summary"]["FECM"] == [2.55, 2.0, 3.0]

    def test_write_report_files(self, tmp_path):
        write_report(benchmark_report(), tmp_path, locale="comma")
        assert (tmp_path / "table_h1.txt").read_text() == (GOLDEN / "table2_h1.txt").read_text()
        assert (tmp_path / "figure_relative_mse.svg").exists()
        assert (tmp_path / "figure_relative_mse.csv").exists()
        import json

        d = json.loads((tmp_path / "report.json").read_text())
        assert d["horizons"] == [1]
