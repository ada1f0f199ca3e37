import numpy as np
import pandas as pd
import pytest

from helpers import random_rule, random_scores
from mrd.categories import (
    ALL_CATEGORIES,
    AT,
    C,
    DF,
    IND,
    NT,
    DegenerateRuleError,
    GridSpec,
    SubsetError,
    category_counts,
    classify_cutoff,
    classify_cutoff_many,
    classify_dataset,
    classify_general,
    classify_general_many,
    inherited_category,
    simple_rule_categories,
    subset_mask,
)
from mrd.rules import (
    RuleError,
    combine,
    evaluate,
    negate,
    parse_rule,
    support_directions,
    supports_direct_sum,
)

XOR = "(I1 | I2) & (!I1 | !I2)"
# D from the exhaustiveness counterexample, with T = I1 & I2 written out
INDECISIVE_D = "((I1 & I2) & I1 & I2) | (!(I1 & I2) & !I1 & I2) | (I1 & !I2)"
FOUR_VAR_D = "((I1 & I2) & I3) | (!I3 & I4)"


def cat(t, d, x, dim):
    return classify_cutoff(parse_rule(t, dim), parse_rule(d, dim), x).category


class TestPaperFixtures:
    def test_and_rule(self):
        assert cat("I1", "I1 & I2", [7.0, 0.5], 2) is C
        assert cat("I1", "I1 & I2", [7.0, -0.5], 2) is NT

    def test_and_rule_general_k(self):
        # D = I1 & ... & I4, T = I1 & I2: compliers iff x3, x4 > 0
        t, d = parse_rule("I1 & I2", 4), parse_rule("I1 & I2 & I3 & I4", 4)
        rng = np.random.default_rng(0)
        x = random_scores(rng, 200, 4)
        codes = classify_cutoff_many(t, d, x)
        expected = np.where((x[:, 2] > 0) & (x[:, 3] > 0), "C", "NT")
        assert (codes == expected).all()

    def test_or_rule(self):
        t, d = parse_rule("I1", 3), parse_rule("I1 | I2 | I3", 3)
        rng = np.random.default_rng(1)
        x = random_scores(rng, 200, 3)
        codes = classify_cutoff_many(t, d, x)
        expected = np.where((x[:, 1] <= 0) & (x[:, 2] <= 0), "C", "AT")
        assert (codes == expected).all()

    def test_xor_dominant(self):
        assert cat("I1", XOR, [0.3, 0.5], 2) is DF
        assert cat("I1", XOR, [0.3, -0.5], 2) is C

    def test_indecisive_construction(self):
        res = classify_cutoff(parse_rule("I1 & I2", 2), parse_rule(INDECISIVE_D, 2), [0.0, 0.0])
        assert res.category is IND
        # truth table: configs (0,0) and (1,1) agree, (1,0) and (0,1) disagree
        table = {cfg: (tb, db) for cfg, tb, db in res.witness_configs}
        assert table[(0, 0)] == (False, False)
        assert table[(1, 1)] == (True, True)
        assert table[(1, 0)][0] != table[(1, 0)][1]
        assert table[(0, 1)][0] != table[(0, 1)][1]

    def test_and_not_example_is_indecisive(self):
        assert cat("I1 & I2", "!I1 & I2", [0.0, 0.0], 2) is IND

    @pytest.mark.parametrize(
        "x,expected",
        [([9, -9, 0.5, -3], C), ([1, 1, -0.5, 0.5], AT), ([1, 1, -0.5, -0.5], NT)],
    )
    def test_four_variable(self, x, expected):
        assert cat("I1 & I2", FOUR_VAR_D, x, 4) is expected

    def test_four_variable_subrule(self):
        # G = I1: C iff x3>0 & x2>0; AT iff x3<=0 & x4>0; NT otherwise
        g, d = parse_rule("I1", 4), parse_rule(FOUR_VAR_D, 4)
        x = random_scores(np.random.default_rng(2), 300, 4)
        codes = classify_cutoff_many(g, d, x)
        exp = np.full(len(x), "NT", dtype=object)
        exp[(x[:, 2] > 0) & (x[:, 1] > 0)] = "C"
        exp[(x[:, 2] <= 0) & (x[:, 3] > 0)] = "AT"
        assert (codes == exp).all()

    def test_counterexample_to_equality(self):
        # D = (I1 & I2) | I3, T = I1 & I3, G = I1: no compliers of T, but G has some
        t, g, d = (parse_rule(s, 3) for s in ("I1 & I3", "I1", "(I1 & I2) | I3"))
        x = random_scores(np.random.default_rng(3), 300, 3)
        assert not (classify_cutoff_many(t, d, x) == "C").any()
        comp_g = classify_cutoff_many(g, d, x) == "C"
        assert (comp_g == ((x[:, 2] <= 0) & (x[:, 1] > 0))).all()

    def test_witnesses_justify_category(self):
        res = classify_cutoff(parse_rule("I1", 2), parse_rule(XOR, 2), [1.0, 1.0])
        assert all(tb != db for _, tb, db in res.witness_configs)


class TestGuards:
    def test_degenerate(self):
        with pytest.raises(DegenerateRuleError, match="degenerate rule"):
            cat("I1 | !I1", "I1", [1, 1], 2)

    def test_dim_mismatch(self):
        with pytest.raises(RuleError):
            classify_cutoff(parse_rule("I1", 2), parse_rule("I1", 3), [1, 1])

    def test_nonzero_cutoff_rejected(self):
        with pytest.raises(RuleError, match="zero cutoff"):
            classify_cutoff(parse_rule("I1", 2), parse_rule("I1 & I2 @ c=(0, 1)", 2), [1, 1])


class TestGeneral:
    def test_constant_zero(self):
        t = parse_rule("I1 & I2", 3)
        res = classify_general(t, lambda u: np.zeros(len(u), bool), [0.3, -2, 1])
        assert res.category is NT and res.approximate

    def test_matches_exact_on_fixtures(self):
        cases = [
            ("I1", "I1 & I2", 2),
            ("I1", XOR, 2),
            ("I1 & I2", INDECISIVE_D, 2),
            ("I1 & I2", FOUR_VAR_D, 4),
        ]
        rng = np.random.default_rng(4)
        for ts, ds, K in cases:
            t, d = parse_rule(ts, K), parse_rule(ds, K)
            x = random_scores(rng, 100, K)
            exact = classify_cutoff_many(t, d, x)
            approx = classify_general_many(t, lambda u, d=d: evaluate(d, u), x)
            assert (exact == approx).all()

    def test_reasonable_operator_indecisive(self):
        # scores (x_d, x_y, x_r); D = I_D & 1[x_y + x_r > 0]
        t = parse_rule("I1 & I2", 3)

        def d_fn(u):
            return (u[:, 0] > 0) & (u[:, 1] + u[:, 2] > 0)

        assert classify_general(t, d_fn, [0.4, 0.1, 0.05]).category is IND
        assert classify_general(t, d_fn, [0.4, 0.1, -0.05]).category is IND
        assert classify_general(t, d_fn, [-0.4, 0.1, 0.0]).category is C

    def test_explicit_grid_must_bracket(self):
        t = parse_rule("I1", 1)
        with pytest.raises(ValueError, match="bracket"):
            classify_general(t, lambda u: u[:, 0] > 0, [5.0], GridSpec(offsets={1: (0.0, 1.0)}))
        res = classify_general(t, lambda u: u[:, 0] > 0, [5.0], GridSpec(offsets={1: (0.0, 10.0)}))
        assert res.category is C

    def test_empty_grid(self):
        with pytest.raises(ValueError, match="empty"):
            classify_general(parse_rule("I1", 1), lambda u: u[:, 0] > 0, [1.0], GridSpec(offsets={1: ()}))


def _random_instances(rng, n_pairs, n_x, K_max=4):
    for _ in range(n_pairs):
        K = int(rng.integers(1, K_max + 1))
        t = random_rule(rng, K)
        if not support_directions(t):
            continue
        d = random_rule(rng, K)
        yield K, t, d, random_scores(rng, n_x, K)


class TestProperties:
    def test_partition_and_disjointness(self):
        rng = np.random.default_rng(20)
        for K, t, d, x in _random_instances(rng, 300, 50):
            codes = classify_cutoff_many(t, d, x)
            assert set(codes) <= {c.value for c in ALL_CATEGORIES}
            # recompute membership of each defining condition independently
            for i in range(len(x)):
                res = classify_cutoff(t, d, x[i])
                ds = [db for _, _, db in res.witness_configs]
                agree = [tb == db for _, tb, db in res.witness_configs]
                flags = [not any(ds), all(ds), all(agree), not any(agree)]
                assert sum(flags) <= 1
                assert (sum(flags) == 0) == (codes[i] == "IND")

    def test_exhaustive_at_dim_one(self):
        rng = np.random.default_rng(21)
        hits = 0
        for K, t, d, x in _random_instances(rng, 400, 30):
            if len(support_directions(t)) != 1:
                continue
            hits += 1
            assert "IND" not in set(classify_cutoff_many(t, d, x))
        assert hits > 30

    def test_dualities(self):
        rng = np.random.default_rng(22)
        for K, t, d, x in _random_instances(rng, 300, 30):
            base = classify_cutoff_many(t, d, x)
            not_t = classify_cutoff_many(negate(t), d, x)
            not_d = classify_cutoff_many(t, negate(d), x)
            assert ((base == "AT") == (not_d == "NT")).all()
            assert ((base == "AT") == (not_t == "AT")).all()
            assert ((base == "NT") == (not_t == "NT")).all()
            assert ((base == "C") == (not_t == "DF")).all()
            assert ((base == "C") == (not_d == "DF")).all()
            assert ((base == "IND") == (not_t == "IND")).all()
            assert ((base == "IND") == (not_d == "IND")).all()

    def test_non_change_bounds(self):
        rng = np.random.default_rng(23)
        for K, t, d, x in _random_instances(rng, 300, 30):
            supp_t = sorted(support_directions(t))
            sub = rng.choice(supp_t, size=int(rng.integers(1, len(supp_t) + 1)), replace=False)
            g = random_rule(rng, K, atoms=sub)
            if not support_directions(g):
                continue
            assert support_directions(g) <= set(supp_t)
            ct = classify_cutoff_many(t, d, x)
            cg = classify_cutoff_many(g, d, x)
            for code in ("NT", "AT"):
                assert (cg[ct == code] == code).all()

    def test_factorization(self):
        rng = np.random.default_rng(24)
        checked = 0
        for _ in range(400):
            K = int(rng.integers(2, 5))
            perm = rng.permutation(np.arange(1, K + 1))
            split = int(rng.integers(1, K))
            g = random_rule(rng, K, atoms=perm[:split])
            h = random_rule(rng, K, atoms=perm[split:])
            if not support_directions(g) or not support_directions(h):
                continue
            d = random_rule(rng, K)
            x = random_scores(rng, 40, K)
            for op in ("and", "or"):
                t = combine(g, h, op)
                assert supports_direct_sum(g, h, op)
                c_gt = classify_cutoff_many(g, t, x)
                c_td = classify_cutoff_many(t, d, x)
                c_gd = classify_cutoff_many(g, d, x)
                for a, b, out in zip(c_gt, c_td, c_gd):
                    if b == "IND":
                        continue
                    allowed = inherited_category(a, b, op)
                    assert out in {c.value for c in allowed}, (op, a, b, out)
                    checked += 1
        assert checked > 5000


class TestSimpleRule:
    def test_and_complier(self):
        g, h = parse_rule("I1", 2), parse_rule("I2", 2)
        assert simple_rule_categories(g, h, "and", [0.1, 1.0]) is C
        assert simple_rule_categories(g, h, "and", [0.1, -1.0]) is NT

    def test_or(self):
        g, h = parse_rule("I1", 2), parse_rule("I2", 2)
        assert simple_rule_categories(g, h, "or", [0.1, 1.0]) is AT
        assert simple_rule_categories(g, h, "or", [0.1, -1.0]) is C

    def test_agrees_with_exact_classifier(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            g = random_rule(rng, 4, atoms=[1, 2])
            h = random_rule(rng, 4, atoms=[3, 4])
            if not support_directions(g) or not support_directions(h):
                continue
            for op in ("and", "or"):
                for x in random_scores(rng, 10, 4):
                    exact = classify_cutoff(g, combine(g, h, op), x).category
                    assert simple_rule_categories(g, h, op, x) is exact

    def test_precondition(self):
        with pytest.raises(RuleError):
            simple_rule_categories(parse_rule("I1", 2), parse_rule("I1 & I2", 2), "and", [1, 1])


class TestInheritance:
    def test_complier_defier_and(self):
        assert inherited_category(C, DF, "and") == {DF}

    def test_nevertaker_defier_and(self):
        assert inherited_category(NT, DF, "and") == {AT}

    @pytest.mark.parametrize("op", ["and", "or"])
    def test_non_change_passes_through(self, op):
        for g in (C, NT, AT):
            assert inherited_category(g, NT, op) == {NT}
            assert inherited_category(g, AT, op) == {AT}

    def test_or_cases(self):
        assert inherited_category(C, C, "or") == {C}
        assert inherited_category(AT, C, "or") == {AT}
        assert inherited_category(AT, DF, "or") == {NT}

    def test_impossible_inputs(self):
        assert inherited_category(AT, C, "and") == frozenset()


class TestDataset:
    def test_four_variable_panel(self):
        t, d = parse_rule("I1 & I2", 4), parse_rule(FOUR_VAR_D, 4)
        x = [[9, -9, 0.5, -3], [1, 1, -0.5, 0.5], [1, 1, -0.5, -0.5]]
        codes, counts = classify_dataset(t, d, x)
        assert counts == {"C": 1, "NT": 1, "AT": 1, "DF": 0, "IND": 0}

    def test_empty(self):
        codes, counts = classify_dataset(parse_rule("I1", 1), parse_rule("I1", 1), np.empty((0, 1)))
        assert len(codes) == 0 and sum(counts.values()) == 0

    def test_general_decision(self):
        t = parse_rule("I1", 2)
        codes, counts = classify_dataset(t, lambda u: u[:, 0] > 0, np.ones((4, 2)))
        assert counts["C"] == 4

    def test_counts(self):
        assert category_counts(["C", "C", "IND"]) == {"C": 2, "NT": 0, "AT": 0, "DF": 0, "IND": 1}


class TestSubsetMask:
    def panel(self):
        return pd.DataFrame(
            {"x_y": [-1.0, 0.0, 0.5, 2.0], "category_d": ["NT", "NT", "C", "C"]}
        )

    def test_drops_exactly(self):
        keep = subset_mask(self.panel(), "x_y <= 0", "category_d")
        assert keep.tolist() == [False, False, True, True]

    def test_empty_omega(self):
        assert subset_mask(self.panel(), None).all()
        assert subset_mask(self.panel(), "").all()

    def test_complier_guard(self):
        with pytest.raises(SubsetError):
            subset_mask(self.panel(), "x_y <= 1", "category_d")

    def test_bad_expression(self):
        with pytest.raises(ValueError):
            subset_mask(self.panel(), "nope <= 0")
