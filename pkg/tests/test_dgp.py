import dataclasses

import numpy as np
import pandas as pd
import pytest

from mrd.dgp import (
    ConfigError,
    Lot,
    LotConfig,
    OperatorPolicy,
    distance_score,
    generate_lot,
    improvement_scores,
    itt_contrast,
    noisy_rework,
    operator_decision,
    optimal_rework,
    optimal_shift,
    oracle_defier_correction,
    oracle_effect,
    simulate_panel,
    yield_criteria,
)


@pytest.fixture(scope="module")
def cautious():
    return simulate_panel(11, 3000, policy="cautious")


def rng(seed=0):
    return np.random.default_rng(seed)


class TestLots:
    def test_degenerate_spread(self):
        cfg = LotConfig(lot_mean_spread=0, within_lot_spread=0, off_curve_spread=0)
        pts = generate_lot(rng(), cfg).color_points
        assert (pts == pts[0]).all()

    def test_reproducible(self):
        a = generate_lot(rng(3), LotConfig()).color_points
        b = generate_lot(rng(3), LotConfig()).color_points
        assert np.array_equal(a, b)

    def test_sample_mean_clt(self):
        cfg = LotConfig(n_items=100_000, lot_mean_spread=0, off_curve_spread=0, within_spread_cv=0)
        lot = generate_lot(rng(4), cfg)
        center = np.asarray(cfg.target) - cfg.mean_shortfall * cfg.direction
        bound = 3 * cfg.within_lot_spread / np.sqrt(cfg.n_items)
        assert np.all(np.abs(lot.mean - center) < bound)

    @pytest.mark.parametrize("field,value", [("n_items", 0), ("m", 0), ("rework_noise_sd", -1.0),
                                             ("lot_mean_spread", -0.1)])
    def test_validation_names_field(self, field, value):
        with pytest.raises(ConfigError, match=f"lot.{field}"):
            LotConfig(**{field: value})

    def test_config_round_trip(self):
        cfg = LotConfig(c_d=0.3, max_shift=2.0)
        assert LotConfig.from_dict(cfg.to_dict()) == cfg


class TestDistance:
    cfg = LotConfig()

    def lot_at(self, point):
        return Lot(np.asarray(point, float)[None, :] + np.zeros((4, 2)))

    def test_zero_at_projection(self):
        u = self.cfg.direction
        perp = np.array([-u[1], u[0]])
        assert distance_score(self.lot_at(0.7 * perp), self.cfg) == pytest.approx(0, abs=1e-15)

    @pytest.mark.parametrize("delta", [-1.0, 0.25, 2.0])
    def test_displacement(self, delta):
        lot = self.lot_at(-delta * self.cfg.direction)
        assert distance_score(lot, self.cfg) == pytest.approx(delta, abs=1e-12)

    def test_monotone(self):
        deltas = np.linspace(-2, 2, 41)
        scores = [distance_score(self.lot_at(-d * self.cfg.direction), self.cfg) for d in deltas]
        assert np.all(np.diff(scores) > 0)


class TestYield:
    cfg = LotConfig()

    def test_extremes(self):
        assert yield_criteria(np.zeros((5, 2)), self.cfg) == 1.0
        assert yield_criteria(np.full((5, 2), 3.0), self.cfg) == 0.0

    def test_half(self):
        pts = np.array([[0.0, 0.0], [0.5, -0.5], [3.0, 0.0], [0.0, -1.5]])
        assert yield_criteria(pts, self.cfg) == 0.5

    def test_boundary_closed(self):
        assert yield_criteria(np.array([[1.0, -1.0]]), self.cfg) == 1.0


class TestRework:
    def test_noise_free_equals_optimal(self):
        cfg = LotConfig(rework_noise_sd=0, dispersion_inflation=1)
        lot = generate_lot(rng(5), cfg)
        a = noisy_rework(lot, rng(6), cfg).color_points
        b = optimal_rework(lot, cfg).color_points
        assert np.allclose(a, b, atol=1e-12)

    def test_optimal_beats_grid_search(self):
        cfg = LotConfig()
        grid = np.linspace(0, 6, 1201)
        for seed in range(40):
            lot = generate_lot(rng(seed), cfg)
            best = yield_criteria(optimal_rework(lot, cfg).color_points, cfg)
            searched = max(yield_criteria(lot.color_points + s * cfg.direction, cfg) for s in grid)
            assert best >= searched
            assert best >= yield_criteria(lot.color_points, cfg)

    def test_shift_respects_cap(self):
        cfg = LotConfig(max_shift=0.1, mean_shortfall=2.0)
        for seed in range(10):
            assert 0 <= optimal_shift(generate_lot(rng(seed), cfg), cfg) <= 0.1

    def test_reproducible(self):
        cfg = LotConfig()
        lot = generate_lot(rng(7), cfg)
        assert np.array_equal(noisy_rework(lot, rng(8), cfg).color_points,
                              noisy_rework(lot, rng(8), cfg).color_points)


class TestImprovement:
    def test_full_measurement(self):
        cfg = LotConfig(m=1)
        lot = generate_lot(rng(9), cfg)
        x_y, x_e, x_r = improvement_scores(lot, optimal_rework(lot, cfg), cfg)
        assert x_y == x_e and x_r == 0

    def test_identical(self):
        cfg = LotConfig()
        lot = generate_lot(rng(10), cfg)
        assert improvement_scores(lot, lot, cfg)[:2] == (0.0, 0.0)

    def test_subsample_unbiased(self):
        panel = simulate_panel(12, 10_000, classify=False)
        xr = panel.x_r.to_numpy()
        assert abs(xr.mean()) < 3 * xr.std(ddof=1) / np.sqrt(xr.size)


class TestDecision:
    def test_acknowledging(self):
        i_d = np.array([1, 1, 0, 0], bool)
        x_y = np.array([0.1, -0.1, 0.1, -0.1])
        d = operator_decision("acknowledging", i_d, x_y, -x_y)
        assert np.array_equal(d, i_d & (x_y > 0))

    def test_cautious_blocks_on_estimate(self):
        assert operator_decision("cautious", True, 0.2, 0.0) is False

    def test_reasonable_ignores_measured(self):
        assert operator_decision(OperatorPolicy.REASONABLE, True, -0.1, 0.2) is True

    def test_unknown_policy(self):
        with pytest.raises(ConfigError, match="policy"):
            OperatorPolicy.parse("reckless")


class TestPanel:
    def test_invariants(self, cautious):
        p = cautious
        assert np.array_equal(p.y, np.where(p.d == 1, p.y1, p.y0))
        assert np.allclose(p.x_e, p.x_y + p.x_r, atol=1e-12)
        assert p[["y", "y0", "y1"]].stack().between(0, 1).all()
        assert np.array_equal(p.t, ((p.x_d > 0) & (p.x_y > 0)).astype(int))

    def test_cautious_one_sided(self, cautious):
        assert (cautious.d <= cautious.t).all()
        assert cautious.loc[cautious.t == 0, "d"].sum() == 0

    def test_treated_share(self, cautious):
        assert 0.3 <= cautious.t.mean() <= 0.6

    def test_acknowledging(self):
        p = simulate_panel(13, 800, policy="acknowledging")
        assert (p.d == p.t).all()
        assert (p.category == "C").all()
        assert np.array_equal(p.category_d == "C", p.x_y > 0)

    def test_cautious_closed_forms(self, cautious):
        p = cautious
        assert np.array_equal(p.category == "C", p.x_e > 0)
        assert set(p.category[p.x_e <= 0]) == {"NT"}
        assert np.array_equal(p.category_d == "C", (p.x_e > 0) & (p.x_y > 0))

    def test_reasonable_categories(self):
        p = simulate_panel(14, 600, policy="reasonable")
        assert np.array_equal(p.category == "C", p.x_r == 0)
        assert set(p.category[p.x_r != 0]) == {"IND"}

    def test_determinism_and_prefix(self):
        a = simulate_panel(15, 300)
        pd.testing.assert_frame_equal(a, simulate_panel(15, 300))
        longer = simulate_panel(15, 700)
        pd.testing.assert_frame_equal(a, longer.iloc[:300])

    def test_zero_lots(self):
        with pytest.raises(ConfigError):
            simulate_panel(0, 0)


def constructed(x, effect, category="C"):
    return pd.DataFrame({"x_d": x, "x_y": x, "x_e": x, "y0": 0.2 + 0 * x, "y1": 0.2 + effect,
                         "category_d": category, "category_y": category})


class TestOracles:
    x = np.linspace(-1, 1, 401)

    def test_zero_effect(self):
        assert oracle_effect(constructed(self.x, 0 * self.x), h=0.5) == 0

    def test_constant(self):
        assert oracle_effect(constructed(self.x, 0 * self.x + 0.3), h=0.5) == pytest.approx(0.3, abs=1e-12)

    def test_piecewise_linear(self):
        effect = 0.1 + np.where(self.x > 0, 0.4 * self.x, -0.2 * self.x)
        assert abs(oracle_effect(constructed(self.x, effect), h=0.5) - 0.1) < 1e-10

    def test_itt_vs_complier(self, cautious):
        complier = oracle_effect(cautious, "D")
        itt = oracle_effect(cautious, "D", "itt", policy="cautious")
        assert abs(itt) < abs(complier)

    def test_itt_contrast_is_compliance(self, cautious):
        c = itt_contrast(cautious, "D", "cautious")
        assert np.array_equal(c == 1, cautious.category_d == "C")
        assert set(np.unique(c)) <= {0.0, 1.0}

    def test_no_defiers_in_shipped_policies(self, cautious):
        assert oracle_defier_correction(cautious, "D") == 0.0
        assert oracle_defier_correction(simulate_panel(16, 500, policy="acknowledging"), "Y") == 0.0

    def test_injected_defiers(self):
        cats = np.array(["C", "C", "DF", "NT", "C"] * 80)
        x = np.linspace(-0.5, 0.5, cats.size)
        panel = constructed(x, 0 * x, cats)
        assert oracle_defier_correction(panel, h=10.0, kernel="uniform") == 0.0
        delta = 0.15
        panel["y0"] = np.where(cats == "DF", panel.y1 + delta, panel.y0)
        expected = (np.mean(cats == "DF") / np.mean(cats == "C")) * delta
        assert oracle_defier_correction(panel, h=10.0, kernel="uniform") == pytest.approx(expected, rel=1e-12)
