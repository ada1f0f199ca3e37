import io
import json

import numpy as np
import pandas as pd
import pytest

from mrd.dgp import ConfigError, simulate_panel
from mrd.estimation import fuzzy_estimate
from mrd.learners import LearnerSpec
from mrd.montecarlo import (
    ExperimentConfig,
    MetricsError,
    MetricsRow,
    compute_metrics,
    emit_table,
    rep_seed,
    run_experiment,
    summarize,
    write_report,
)

SMALL = dict(seed=5, n_lots=1500, designs=("fuzzy",), subsets=(False,))


def cell(coef, oracle, half=0.1, se=0.05, status=None):
    coef = np.asarray(coef, float)
    oracle = np.broadcast_to(np.asarray(oracle, float), coef.shape)
    return pd.DataFrame({"coef": coef, "oracle": oracle, "se": se, "ci_low": coef - half,
                         "ci_high": coef + half, "status": status or ["ok"] * coef.size})


class TestMetrics:
    def test_coverage_nine_of_ten(self):
        coef = np.zeros(10)
        coef[3] = 1.0
        assert compute_metrics(cell(coef, 0.0)).coverage == pytest.approx(0.9)

    def test_perfect(self):
        m = compute_metrics(cell([0.2, 0.2, 0.2], [0.2, 0.2, 0.2]))
        assert m.mean_bias == 0 and m.se_empirical == 0 and m.coverage == 1

    def test_hand_computed(self):
        # errors 0.1, -0.2, 0.4: mean 0.1; sd of estimates 1.1, 0.8, 1.4 is 0.3
        m = compute_metrics(cell([1.1, 0.8, 1.4], [1.0, 1.0, 1.0], half=0.25, se=[0.1, 0.2, 0.3]))
        assert abs(m.mean_bias - 0.1) < 1e-12
        assert abs(m.se_empirical - 0.3) < 1e-12
        assert abs(m.se_est_mean - 0.2) < 1e-12
        assert abs(m.coverage - 2 / 3) < 1e-12

    def test_failures_excluded(self):
        c = cell([0.1, 0.2, 9.0], 0.0, status=["ok", "ok", "failed"])
        m = compute_metrics(c)
        assert m.n_ok == 2 and m.n_failed == 1
        assert m.mean_bias == pytest.approx(0.15)

    def test_all_failed(self):
        with pytest.raises(MetricsError):
            compute_metrics(cell([0.1], 0.0, status=["failed"]))

    def test_failure_isolation_and_order(self):
        a = cell([0.1, 0.2, 0.3], 0.0, status=["ok", "failed", "ok"]).assign(method="A")
        b = cell([0.5, 0.4, 0.6], 0.5).assign(method="B")
        raw = pd.concat([a, b]).assign(axis="D", setting="Fuzzy", rep=[0, 1, 2, 0, 1, 2], cell=[0] * 3 + [1] * 3)
        rows = summarize(raw)
        assert rows[1] == compute_metrics(b, "D", "Fuzzy", "B")
        shuffled = summarize(raw.sample(frac=1, random_state=3))
        assert emit_table(shuffled, "csv") == emit_table(rows, "csv")

    def test_all_failed_cell_reported(self):
        raw = cell([0.1, 0.2], 0.0, status=["failed", "failed"]).assign(axis="D", setting="Sharp", method="A")
        (row,) = summarize(raw)
        assert row.n_ok == 0 and row.n_failed == 2 and np.isnan(row.mean_bias)


def two_rows():
    fuzzy = MetricsRow("D", "Fuzzy", "RDD Without Covs", -0.0027, 0.0301, 0.0312, 0.95, 0.1, 0.2, 0.3, 0.4,
                       0.94, -0.1, -0.0973, 250, 0)
    sharp = MetricsRow("D", "Sharp", "RDD Without Covs", 0.001, 0.02, 0.021, 0.9, 0.1, None, 0.3, None,
                       0.9, -0.07, -0.071, 250, 0)
    return [fuzzy, sharp]


GOLDEN_MD = """\
| axis | setting | method | mean_bias | se_est_mean | se_empirical | coverage | rmse_left | logloss_left | rmse_right | logloss_right | coverage_grand | mean_estimate | mean_oracle | n_ok | n_failed |
|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|
| D | Fuzzy | RDD Without Covs | -0.0027 | 0.0301 | 0.0312 | 0.9500 | 0.1000 | 0.2000 | 0.3000 | 0.4000 | 0.9400 | -0.1000 | -0.0973 | 250 | 0 |
| D | Sharp | RDD Without Covs | 0.0010 | 0.0200 | 0.0210 | 0.9000 | 0.1000 |  | 0.3000 |  | 0.9000 | -0.0700 | -0.0710 | 250 | 0 |
"""


class TestEmit:
    def test_markdown_golden(self):
        assert emit_table(two_rows(), "markdown").decode() == GOLDEN_MD

    def test_csv_round_trip(self):
        rows = two_rows()
        back = pd.read_csv(io.BytesIO(emit_table(rows, "csv")))
        expected = pd.DataFrame([r.__dict__ for r in rows])
        pd.testing.assert_frame_equal(back, expected, check_dtype=False)

    def test_sharp_logloss_blank(self):
        lines = emit_table(two_rows(), "csv").decode().splitlines()
        fields = lines[2].split(",")
        header = lines[0].split(",")
        assert fields[header.index("logloss_left")] == ""
        assert fields[header.index("logloss_right")] == ""

    def test_json(self):
        data = json.loads(emit_table(two_rows(), "json"))
        assert data[1]["logloss_left"] is None and data[0]["n_ok"] == 250

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_table(two_rows(), "xlsx")


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(r=3, learners=(LearnerSpec(), LearnerSpec(kind="boosting", rounds=50)))
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [{"r": 0}, {"learners": []}, {"axes": ["Z"]}, {"dgp": "other"},
                                     {"learners": ["forest"]}, {"rr": 1}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)


class TestRun:
    def test_single_rep_matches_direct_call(self):
        cfg = ExperimentConfig(r=1, **SMALL)
        report = run_experiment(cfg)
        seed = rep_seed(cfg.seed, 0)
        est = fuzzy_estimate(simulate_panel(seed, cfg.n_lots, cfg.lot, cfg.policy), "x_d", seed=seed)
        assert report.raw.loc[0, "coef"] == est.coef
        assert report.raw.loc[0, "se"] == est.se

    def test_prefix_stable(self):
        short = run_experiment(ExperimentConfig(r=2, **SMALL)).raw
        long = run_experiment(ExperimentConfig(r=4, **SMALL)).raw
        pd.testing.assert_frame_equal(short, long.iloc[: len(short)])

    def test_workers_do_not_matter(self, tmp_path):
        cfg = ExperimentConfig(r=3, **SMALL)
        a = run_experiment(cfg, workers=1)
        b = run_experiment(cfg, workers=2)
        pa = write_report(a, tmp_path / "a", plot=False)
        pb = write_report(b, tmp_path / "b", plot=False)
        for key in pa:
            assert pa[key].read_bytes() == pb[key].read_bytes()

    def test_failures_become_rows(self):
        # a fixed bandwidth this small leaves too few points in the window
        cfg = ExperimentConfig(r=1, bandwidth=1e-4, **SMALL)
        report = run_experiment(cfg)
        assert (report.raw.status == "failed").all()
        assert report.metrics[0].n_failed == 1

    def test_outputs(self, tmp_path):
        report = run_experiment(ExperimentConfig(r=2, **SMALL))
        paths = write_report(report, tmp_path)
        assert {p.name for p in paths.values()} == {"metrics.csv", "estimates_raw.csv", "mc_errors.png"}
        metrics = pd.read_csv(paths["metrics"])
        assert len(metrics) == 1 and metrics.n_ok.iloc[0] == 2


def test_subset_bias_direction(cautious_experiment):
    m = {(r.setting, r.method): r for r in cautious_experiment.metrics}
    full = m["Fuzzy", "RDD Without Covs"]
    sub = m["Fuzzy Subset", "RDD Without Covs"]
    print(f"fuzzy full bias {full.mean_bias:+.4f}, subset bias {sub.mean_bias:+.4f}")
    assert abs(sub.mean_bias) <= abs(full.mean_bias)
