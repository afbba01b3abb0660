import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from helpers import RandomSubModels, dropback_context, enumerate_dropback, toy_table
from playvalue.models import ModelConfig, fit_model
from playvalue.synthgen import TwoComponentConfig, two_component_sample
from playvalue.valuation import (
    GRID,
    CatchModelOutputs,
    ConstantQbDecision,
    ContractViolation,
    DensityForest,
    DistanceTargetModel,
    DropbackContext,
    ExpectedPoints,
    GameState,
    LookupTable,
    PositionCarrierModel,
    QbDecisionDistribution,
    SeparationCatchModel,
    TargetDistribution,
    ValuationTimeline,
    WinProbability,
    YardlineDensity,
    combine_dropback,
    combine_run,
    density_modes,
    expected_end_yardline,
    expected_play_value,
    fit_yardline_density,
    load_value_function,
    next_state,
    softmax_normalize,
    timelines_csv,
    valuation_timeline,
    valuation_timelines,
)

EPS = 1e-9


def point_mass(y):
    m = np.zeros(len(GRID))
    m[y] = 1.0
    return YardlineDensity(m)


class TestExpectedEndYardline:
    def test_gain_reduces_distance(self):
        assert expected_end_yardline(15.0, 50.0) == (35.0, False)

    def test_zero_gain_is_identity(self):
        assert expected_end_yardline(0.0, 37.25) == (37.25, False)

    def test_clamped_at_touchdown(self):
        assert expected_end_yardline(60.0, 50.0) == (0.0, True)

    def test_clamped_at_back_of_own_endzone(self):
        assert expected_end_yardline(-20.0, 100.0) == (110.0, True)

    def test_elementwise(self):
        y, flag = expected_end_yardline(np.array([1.0, 80.0]), np.array([10.0, 50.0]))
        np.testing.assert_array_equal(y, [9.0, 0.0])
        np.testing.assert_array_equal(flag, [False, True])


class TestSoftmax:
    def test_all_zero_is_uniform(self):
        np.testing.assert_allclose(softmax_normalize(np.zeros(5), 5), 0.2, atol=1e-15)

    def test_dominant_value(self):
        p = softmax_normalize([1e6, 1, 1, 1, 1])
        assert p[0] > 0.99

    def test_sums_to_one_on_random_inputs(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(10_000):
            n = rng.integers(1, 20)
            v = rng.exponential(size=n) * (rng.random(n) < 0.5) * 10.0 ** rng.integers(-6, 6)
            worst = max(worst, abs(softmax_normalize(v).sum() - 1.0))
        assert worst <= 1e-12

    def test_proportional_to_shifted_scores(self):
        v = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(softmax_normalize(v), (v + EPS) / np.sum(v + EPS), rtol=1e-14)

    @pytest.mark.parametrize("bad", [[-1.0, 1.0], [np.nan, 1.0], [np.inf, 0.0]])
    def test_rejects_invalid_scores(self, bad):
        with pytest.raises(ContractViolation):
            softmax_normalize(bad)

    def test_wrong_length(self):
        with pytest.raises(ContractViolation):
            softmax_normalize([1, 2, 3], 5)


class TestDistributionTypes:
    def test_qb_decision_must_sum_to_one(self):
        with pytest.raises(ContractViolation):
            QbDecisionDistribution(0.2, 0.2, 0.2)

    def test_qb_decision_rejects_negative(self):
        with pytest.raises(ContractViolation):
            QbDecisionDistribution(-0.1, 0.6, 0.5)

    def test_target_distribution_from_zero_scores(self):
        np.testing.assert_allclose(TargetDistribution.from_scores(np.zeros(5)).probs, 0.2)

    def test_catch_outputs_sum_to_global(self):
        out = CatchModelOutputs.from_scores(0.37, np.arange(16.0))
        assert abs(math.fsum(out.individual) - 0.37) <= 1e-12
        assert max(out.individual) <= 0.37

    def test_catch_outputs_reject_mismatch(self):
        with pytest.raises(ContractViolation):
            CatchModelOutputs(0.5, tuple([0.5 / 15] * 16))

    def test_catch_probability_range(self):
        with pytest.raises(ContractViolation):
            CatchModelOutputs.from_scores(1.2, np.ones(16))


class TestCombineDropback:
    def test_two_leaf_weighted_mean(self, rng):
        ctx = dropback_context(rng)
        qb = lambda c: QbDecisionDistribution(0.3, 0.7, 0.0)
        out = combine_dropback(ctx, qb, lambda c: np.ones(5), lambda c, j: 0.5, lambda c, j: np.ones(16),
                               lambda c, pid: 10.0, original_yardline=20.0)
        assert out.expected == pytest.approx(13.0, abs=1e-12)

    def test_pure_run_equals_qb_carrier_value(self, rng):
        ctx = dropback_context(rng)
        carrier = PositionCarrierModel()
        out = combine_dropback(ctx, lambda c: (0.0, 1.0, 0.0), DistanceTargetModel(),
                               SeparationCatchModel().global_catch, SeparationCatchModel().individual_catch,
                               carrier, original_yardline=40.0)
        assert out.expected == pytest.approx(carrier(ctx, ctx.qb_id), abs=1e-12)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(200):
            ctx = dropback_context(rng)
            sub = RandomSubModels(rng)
            original = float(rng.uniform(1, 99))
            out = combine_dropback(ctx, sub.qb_model, sub.target_model, sub.global_catch, sub.individual_catch,
                                   sub.carrier_model, original)
            want, mass = enumerate_dropback(ctx, sub, original)
            assert abs(mass - 1.0) <= 1e-9
            worst = max(worst, abs(out.expected - want))
        assert worst <= 1e-9

    def test_leaf_table_shape_and_mass(self, rng):
        ctx = dropback_context(rng)
        sub = RandomSubModels(rng)
        out = combine_dropback(ctx, sub.qb_model, sub.target_model, sub.global_catch, sub.individual_catch,
                               sub.carrier_model, 30.0)
        # throw away, run, then per receiver: incomplete plus 16 catchers
        assert len(out.leaves) == 2 + 5 * 17
        assert abs(out.total_probability - 1.0) <= 1e-9
        table = out.node_table()
        assert math.fsum(r["probability"] * r["value"] for r in table) == pytest.approx(out.expected, abs=1e-12)
        assert sum(r["possession_change"] for r in table) == 5 * 11

    def test_constant_shift(self, rng):
        ctx = dropback_context(rng)
        sub = RandomSubModels(rng)
        args = (ctx, sub.qb_model, sub.target_model, sub.global_catch, sub.individual_catch)
        base = combine_dropback(*args, sub.carrier_model, 30.0)
        c = 3.5
        # defender values enter as 100 - v, so shifting every leaf by c means v - c for them
        shifted = {pid: (v - c if pid in ctx.defenders else v + c) for pid, v in sub.carrier.items()}
        moved = combine_dropback(*args, lambda ctx_, pid: shifted[pid], 30.0 + c)
        assert moved.expected == pytest.approx(base.expected + c, abs=1e-9)

    def test_invalid_qb_distribution(self, rng):
        ctx = dropback_context(rng)
        with pytest.raises(ContractViolation):
            combine_dropback(ctx, lambda c: (0.5, 0.5, 0.5), DistanceTargetModel(),
                             SeparationCatchModel().global_catch, SeparationCatchModel().individual_catch,
                             PositionCarrierModel(), 30.0)

    def test_invalid_catch_probability(self, rng):
        ctx = dropback_context(rng)
        with pytest.raises(ContractViolation):
            combine_dropback(ctx, ConstantQbDecision(), DistanceTargetModel(), lambda c, j: 1.5,
                             SeparationCatchModel().individual_catch, PositionCarrierModel(), 30.0)

    def test_placeholders_run_end_to_end(self, rng):
        ctx = dropback_context(rng)
        catch = SeparationCatchModel()
        out = combine_dropback(ctx, ConstantQbDecision(), DistanceTargetModel(), catch.global_catch,
                               catch.individual_catch, PositionCarrierModel(), 50.0)
        assert 0.0 <= out.expected <= 110.0


class TestCombineRun:
    def test_composition(self, rng):
        table = toy_table(rng, n_seq=20)
        table.bc_x_adj[:] = rng.uniform(1, 99, len(table))
        model = fit_model(table, ModelConfig("lasso", {"n_lambda": 10}))
        got, clamped = combine_run(model, table)
        want, want_flag = expected_end_yardline(model.predict(table), table.bc_x_adj)
        np.testing.assert_array_equal(got, want)
        np.testing.assert_array_equal(clamped, want_flag)


class TestNextState:
    def test_touchdown(self):
        out = next_state(0, GameState(20))
        assert out.kind == "touchdown" and out.points == 7.0 and out.next is None

    def test_first_down(self):
        out = next_state(38, GameState(50, down=2, distance=10))
        assert out.kind == "first_down"
        assert (out.next.down, out.next.distance, out.next.yardline) == (1, 10.0, 38)

    def test_goal_to_go(self):
        out = next_state(6, GameState(30))
        assert out.next.distance == 6.0

    def test_next_down(self):
        out = next_state(46, GameState(50, down=1, distance=10))
        assert (out.next.down, out.next.distance) == (2, 6.0)

    def test_turnover_on_downs(self):
        out = next_state(48, GameState(50, down=4, distance=3, score_diff=4))
        assert out.possession_change
        assert (out.next.yardline, out.next.down, out.next.score_diff) == (52, 1, -4)

    def test_safety(self):
        out = next_state(102, GameState(95))
        assert out.kind == "safety" and out.points == -2.0 and out.possession_change

    def test_clock_carried(self):
        out = next_state(40, GameState(50, seconds_remaining=321.0))
        assert out.next.seconds_remaining == 321.0


class TestValueFunctions:
    def test_ep_monotone_in_yardline(self):
        ep = ExpectedPoints()
        for state in (GameState(50), GameState(20, down=3, distance=4), GameState(90, down=4, distance=1)):
            v = [ep(y, state) for y in GRID]
            assert np.all(np.diff(v) <= 1e-12)

    def test_ep_touchdown_value(self):
        assert ExpectedPoints()(0, GameState(70)) == 7.0

    def test_wp_in_unit_interval_and_monotone(self):
        wp = WinProbability()
        for state in (GameState(50, score_diff=-10, seconds_remaining=60), GameState(80, score_diff=3)):
            v = np.array([wp(y, state) for y in GRID])
            assert np.all((v >= 0) & (v <= 1))
            assert np.all(np.diff(v) <= 1e-12)

    def test_wp_sharpens_as_clock_runs(self):
        wp = WinProbability()
        early = wp(50, GameState(50, score_diff=3, seconds_remaining=3000))
        late = wp(50, GameState(50, score_diff=3, seconds_remaining=30))
        assert late > early > 0.5

    def test_lookup_table_json_round_trip(self, tmp_path):
        table = LookupTable(np.arange(111), [1, 2, 3, 4], [[1, 5], [6, 99]],
                            np.tile(np.linspace(0.9, 0.1, 111)[:, None, None], (1, 4, 2)), kind="win_probability")
        path = tmp_path / "wp.json"
        path.write_text(json.dumps(table.to_dict()))
        g = load_value_function(path)
        assert g.name == "win_probability"
        assert g(0, GameState(30)) == 1.0
        state = GameState(50, down=4, distance=5)
        # turnover on downs: the opponent's win probability is complemented
        assert g(48, state) == pytest.approx(1.0 - table.lookup(52, 1, 10))

    def test_lookup_table_shape_checked(self):
        with pytest.raises(ValueError):
            LookupTable(np.arange(111), [1, 2, 3, 4], [[1, 99]], np.zeros((111, 4, 2)))

    def test_distance_bins(self):
        t = LookupTable([0, 1], [1, 2, 3, 4], [[1, 3], [4, 10], [11, 99]],
                        np.arange(24.0).reshape(2, 4, 3))
        assert t.lookup(1, 2, 3) == t.values[1, 1, 0]
        assert t.lookup(1, 2, 3.5) == t.values[1, 1, 1]
        assert t.lookup(1, 2, 150) == t.values[1, 1, 2]


class TestExpectedPlayValue:
    def test_point_mass(self):
        ep = ExpectedPoints()
        state = GameState(40, down=2, distance=7)
        assert expected_play_value(point_mass(25), ep, state) == ep(25, state)

    def test_uniform_identity(self):
        mass = np.zeros(len(GRID))
        mass[:101] = 1.0 / 101
        got = expected_play_value(YardlineDensity(mass), lambda y, s: y, GameState(50))
        assert abs(got - 50.0) <= 1e-12

    def test_identity_equals_density_mean(self, rng):
        d = YardlineDensity(rng.dirichlet(np.ones(len(GRID))))
        assert abs(expected_play_value(d, lambda y, s: y, GameState(50)) - d.mean) <= 1e-12

    def test_monte_carlo(self):
        rng = np.random.default_rng(5)
        mass = 0.5 * norm.pdf(GRID, 45, 3) + 0.5 * norm.pdf(GRID, 2, 2)
        d = YardlineDensity(mass / math.fsum(mass))
        ep = ExpectedPoints()
        state = GameState(50)
        exact = expected_play_value(d, ep, state)
        grid_values = np.array([ep(int(y), state) for y in GRID])
        draws = grid_values[d.sample(1_000_000, rng)]
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - exact) <= 3 * se

    def test_jensen_gap_for_convex_value(self):
        mass = np.zeros(len(GRID))
        mass[0] = mass[46] = 0.5
        d = YardlineDensity(mass)
        g = lambda y, s: (y - 23.0) ** 2
        assert expected_play_value(d, g, GameState(50)) - g(d.mean, None) > 0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=111, max_size=111).filter(lambda v: sum(v) > 0),
           st.floats(-5, 5))
    def test_constant_value(self, weights, c):
        w = np.array(weights)
        d = YardlineDensity(w / math.fsum(w))
        assert expected_play_value(d, lambda y, s: c, GameState(50)) == pytest.approx(c, abs=1e-12)


class TestDensity:
    def test_mass_validation(self):
        with pytest.raises(ValueError):
            YardlineDensity(np.full(len(GRID), 0.5))

    def test_single_leaf_is_smoothed_marginal(self, rng):
        n = 300
        X = rng.normal(size=(n, 2))
        y = np.round(rng.uniform(10, 80, n))
        f = DensityForest(n_trees=1, min_leaf=n, bootstrap=False).fit(X, y)
        d = f.estimate(X[0])
        # independent Silverman bandwidth and bin integration
        sd = y.std()
        iqr = np.percentile(y, 75, method="inverted_cdf") - np.percentile(y, 25, method="inverted_cdf")
        h = max(0.9 * min(sd, iqr / 1.34) * n ** -0.2, 0.5)
        edges = np.concatenate([[-np.inf], GRID[:-1] + 0.5, [np.inf]])
        want = np.mean([np.diff(norm.cdf(edges, v, h)) for v in y], axis=0)
        np.testing.assert_allclose(d.mass, want / want.sum(), atol=1e-12)

    def test_bandwidth_to_zero(self, rng):
        y = rng.integers(5, 95, 200).astype(float)
        X = rng.normal(size=(200, 1))
        f = DensityForest(n_trees=1, min_leaf=200, bootstrap=False, bandwidth=1e-3).fit(X, y)
        d = f.estimate(X[0])
        values, counts = np.unique(y, return_counts=True)
        freq = counts / len(y)
        assert np.all(d.mass[values.astype(int)] >= 0.99 * freq)

    def test_two_component_modes(self):
        sample = two_component_sample(TwoComponentConfig(seed=1, n=3000))
        f = fit_yardline_density(sample.X, sample.end_yardline, seed=0, n_trees=30, min_leaf=20,
                                 max_features=None, columns=sample.columns)
        d = f.estimate([50.0, 4.0, 0.0])
        modes = sorted(density_modes(d)[:2])
        want = sorted(sample.modes(50.0))
        assert len(modes) == 2
        np.testing.assert_allclose(modes, want, atol=3.0)
        assert abs(math.fsum(d.mass) - 1.0) <= 1e-9

    def test_weights_sum_to_one(self, rng):
        X = rng.normal(size=(150, 3))
        y = rng.uniform(0, 100, 150)
        f = DensityForest(n_trees=7, min_leaf=5, seed=2).fit(X, y)
        for x in X[:10]:
            assert math.fsum(f.weights(x)) == pytest.approx(1.0, abs=1e-12)

    def test_state_round_trip(self, rng):
        X = rng.normal(size=(120, 3))
        y = rng.uniform(0, 100, 120)
        f = DensityForest(n_trees=4, min_leaf=10, seed=3).fit(X, y, columns=("a", "b", "c"))
        g = DensityForest.from_state(json.loads(json.dumps(f.state())))
        np.testing.assert_array_equal(f.estimate(X[3]).mass, g.estimate(X[3]).mass)
        assert g.columns == ("a", "b", "c")

    def test_deterministic_given_seed(self, rng):
        X = rng.normal(size=(120, 3))
        y = rng.uniform(0, 100, 120)
        a = DensityForest(n_trees=4, min_leaf=10, seed=9).fit(X, y).estimate(X[0]).mass
        b = DensityForest(n_trees=4, min_leaf=10, seed=9).fit(X, y).estimate(X[0]).mass
        np.testing.assert_array_equal(a, b)

    def test_summary(self):
        d = point_mass(30)
        assert d.summary() == {"mean": 30.0, "mode": 30, "entropy": 0.0}
        assert d.quantile(0.5) == 30


@pytest.fixture(scope="module")
def fitted(small_table):
    return small_table, fit_model(small_table, ModelConfig("intercept"))


class TestTimeline:
    def one_sequence(self, table):
        _, a, b = table.sequence_slices()[0]
        return table.subset(np.arange(a, b))

    def test_length_and_constant_gain(self, fitted):
        table, model = fitted
        part = self.one_sequence(table)
        tl = valuation_timeline(part, model, [ExpectedPoints()])
        assert len(tl) == len(part)
        np.testing.assert_allclose(tl.series("expected_gain"), model.predict(part))
        np.testing.assert_allclose(tl.series("expected_end_yardline"),
                                   np.clip(part.bc_x_adj - model.predict(part), 0, 110))

    def test_constant_value_function(self, fitted):
        table, model = fitted
        part = self.one_sequence(table)
        g = lambda y, s: 1.25
        g.name = "const"
        tl = valuation_timeline(part, model, [g])
        np.testing.assert_array_equal(tl.series("const"), 1.25)

    def test_clock_advances(self, fitted):
        table, model = fitted
        part = self.one_sequence(table)
        seen = []

        def g(y, s):
            seen.append(s.seconds_remaining)
            return 0.0

        g.name = "clock"
        valuation_timeline(part, model, [g], state=GameState(50, seconds_remaining=100.0))
        np.testing.assert_allclose(seen, 100.0 - (part.time_index - part.time_index[0]))

    def test_density_timeline(self, fitted):
        table, model = fitted
        forest = fit_yardline_density(table.X, table.bc_x_adj - table.y, n_trees=3, min_leaf=30,
                                      columns=table.columns)
        part = self.one_sequence(table)
        tl = valuation_timeline(part, model, [ExpectedPoints()], density_model=forest)
        assert tl.value_method == "density"
        for rec in tl.records:
            assert set(rec.density) == {"mean", "mode", "entropy"}

    def test_json_round_trip(self, fitted):
        table, model = fitted
        tl = valuation_timeline(self.one_sequence(table), model, [ExpectedPoints(), WinProbability()])
        back = ValuationTimeline.from_dict(json.loads(tl.to_json()))
        assert back.to_json() == tl.to_json()

    def test_threads_do_not_change_output(self, fitted):
        table, model = fitted
        a = valuation_timelines(table, model, [ExpectedPoints()], threads=1)
        b = valuation_timelines(table, model, [ExpectedPoints()], threads=3)
        assert timelines_csv(a) == timelines_csv(b)
        assert sum(len(t) for t in a) == len(table)

    def test_rejects_multiple_sequences(self, fitted):
        table, model = fitted
        with pytest.raises(ValueError):
            valuation_timeline(table, model)
