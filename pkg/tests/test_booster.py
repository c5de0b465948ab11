import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loanboost.booster import (
    BoosterModel,
    compute_gradients,
    feature_importance,
    init_base_score,
    line_search_rho,
    log_loss,
    logistic_grad_hess,
    predict_margin,
    predict_proba,
    sigmoid,
    train,
)
from loanboost.dataset import Dataset
from loanboost.errors import ConfigError, SchemaError
from loanboost.params import BoosterParams
from loanboost.tree import RegressionTree, TreeNode, grow_tree
from conftest import random_dataset
from oracles import finite_difference_grad_hess, golden_section_mp, logistic_total_loss_mp


class TestGradients:
    def test_symmetric_point(self):
        assert logistic_grad_hess(1, 0.0, 1.0) == (-0.5, 0.25)

    def test_linear_in_weight(self):
        assert logistic_grad_hess(0, 0.0, 2.0) == (1.0, 0.5)

    def test_against_finite_differences(self):
        g, h = logistic_grad_hess(1, 2.0, 1.0)
        fg, fh = finite_difference_grad_hess(1, 2.0, 1.0)
        assert g == pytest.approx(-0.1192, abs=5e-5) and h == pytest.approx(0.1050, abs=5e-5)
        assert g == pytest.approx(fg, rel=1e-6) and h == pytest.approx(fh, rel=1e-4)

    def test_extreme_margins_finite(self):
        for m in (-800.0, 800.0):
            g, h = logistic_grad_hess(1, m, 1.0)
            assert math.isfinite(g) and 0 < h <= 0.25

    def test_compute_gradients_weights_positive_rows(self, four_rows):
        base = compute_gradients(four_rows, np.zeros(4), BoosterParams())
        doubled = compute_gradients(four_rows, np.zeros(4), BoosterParams(positive_class_weight=2.0))
        assert base.g.tolist() == [0.5, 0.5, -0.5, -0.5] and base.g.sum() == 0
        assert doubled.g.tolist() == [0.5, 0.5, -1.0, -1.0]
        assert doubled.h.tolist() == [0.25, 0.25, 0.5, 0.5]

    def test_compute_gradients_length_check(self, four_rows):
        with pytest.raises(ValueError):
            compute_gradients(four_rows, np.zeros(3), BoosterParams())


class TestBaseScore:
    def test_balanced(self):
        assert init_base_score([1, 1, 0, 0]) == 0.0

    def test_matches_loss_minimizer(self):
        expected = golden_section_mp(lambda c: logistic_total_loss_mp([1, 0, 0, 0], [c] * 4), -10, 10)
        assert init_base_score([1, 0, 0, 0]) == pytest.approx(expected, abs=1e-8)
        assert init_base_score([1, 0, 0, 0]) == pytest.approx(math.log(0.25 / 0.75), abs=1e-12)

    def test_clamped(self):
        assert init_base_score([1, 1, 1]) == pytest.approx(13.8155, abs=1e-4)

    def test_empty(self):
        with pytest.raises(ValueError):
            init_base_score([])


class TestLineSearch:
    def test_squared_loss_exact_fit_gives_unit_step(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([1.0, 1.0, 3.0, 3.0])
        F = np.zeros(4)
        tree = grow_tree(X, (F - y, np.ones(4)), np.arange(4), BoosterParams(reg_alpha=0, reg_lambda=0, max_depth=1))
        steps = line_search_rho(X, np.arange(4), y, F, tree, loss="squared")
        assert all(v == pytest.approx(1.0, abs=1e-12) for v in steps.values())

    def test_logistic_matches_golden_section(self):
        X = np.zeros((5, 1))
        y = np.array([1, 1, 1, 0, 1])
        F = np.array([0.2, -0.3, 0.0, 0.4, 0.1])
        tree = RegressionTree([TreeNode(weight=0.7)])
        rho = line_search_rho(X, np.arange(5), y, F, tree)[0]
        oracle = golden_section_mp(
            lambda r: logistic_total_loss_mp(y, [mpmath.mpf(float(f)) + r * mpmath.mpf(0.7) for f in F]), -50, 50)
        assert rho == pytest.approx(oracle, abs=1e-8)

    def test_zero_hessian_leaf(self):
        X = np.zeros((2, 1))
        tree = RegressionTree([TreeNode(weight=1.0)])
        assert line_search_rho(X, np.arange(2), [1, 0], [0.0, 0.0], tree, weights=[0.0, 0.0]) == {0: 0.0}


class TestTrain:
    def test_four_row_stump_prediction(self, four_rows):
        params = BoosterParams(n_estimators=1, learning_rate=1.0, subsample=1.0, reg_alpha=0, reg_lambda=0,
                               max_depth=1)
        model = train(four_rows, params)
        assert model.base_score == 0.0
        assert [n.weight for n in model.trees[0].nodes if n.is_leaf] == [-2.0, 2.0]
        p = predict_proba(model, four_rows)
        assert p[0] == pytest.approx(0.1192, abs=5e-5)
        assert p[0] == pytest.approx(1 / (1 + math.exp(2.0)), rel=1e-15)

    def test_zero_trees_predict_half(self, four_rows):
        model = BoosterModel(0.0, [], BoosterParams(), ("x",))
        assert predict_proba(model, four_rows).tolist() == [0.5] * 4

    def test_constant_target(self):
        X = np.arange(20, dtype=float)[:, None]
        data = Dataset(("x",), X, np.ones(20, dtype=int))
        model = train(data, BoosterParams(n_estimators=10, reg_alpha=0.0))
        assert len(model.trees) == 10
        assert all(len(t.nodes) == 1 for t in model.trees)
        assert np.all(np.abs(predict_proba(model, data) - 1.0) < 1e-3)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train(Dataset(("x",), np.empty((0, 1)), np.empty(0, dtype=int)), BoosterParams())

    def test_single_row_is_base_only(self):
        model = train(Dataset(("x",), np.ones((1, 1)), np.array([1])), BoosterParams(n_estimators=5))
        assert model.trees == []

    @pytest.mark.parametrize("mode", ["newton", "friedman"])
    def test_deterministic_serialization(self, mode):
        data = random_dataset(np.random.default_rng(1), 150, 4, missing=0.1)
        params = BoosterParams(n_estimators=15, learning_rate=0.3, mode=mode, seed=9)
        assert train(data, params).to_json() == train(data, params).to_json()

    @pytest.mark.parametrize("mode", ["newton", "friedman"])
    def test_monotone_training_loss_full_sample(self, mode):
        data = random_dataset(np.random.default_rng(2), 300, 5, missing=0.1)
        losses = []
        params = BoosterParams(n_estimators=40, learning_rate=0.1, subsample=1.0, mode=mode)
        train(data, params, callback=lambda t, m: losses.append(log_loss(data.target, m)))
        start = log_loss(data.target, np.full(data.n_rows, init_base_score(data.target)))
        assert losses[0] <= start + 1e-12
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_friedman_fits(self):
        data = random_dataset(np.random.default_rng(3), 400, 3)
        model = train(data, BoosterParams(n_estimators=30, learning_rate=0.3, mode="friedman"))
        assert log_loss(data.target, predict_margin(model, data)) < log_loss(
            data.target, np.full(data.n_rows, model.base_score))

    def test_workers_do_not_change_model(self):
        data = random_dataset(np.random.default_rng(4), 200, 6, missing=0.2)
        params = BoosterParams(n_estimators=10, learning_rate=0.3)
        assert train(data, params, workers=1).to_json() == train(data, params, workers=4).to_json()

    def test_shrinkage_equivalence_first_tree(self):
        data = random_dataset(np.random.default_rng(5), 120, 3)
        common = dict(n_estimators=1, subsample=1.0, reg_alpha=0.0)
        full = train(data, BoosterParams(learning_rate=1.0, **common))
        small = train(data, BoosterParams(learning_rate=0.25, **common))
        np.testing.assert_allclose(small.trees[0].predict(data.X), 0.25 * full.trees[0].predict(data.X),
                                   rtol=1e-15, atol=0)

    def test_additivity(self):
        data = random_dataset(np.random.default_rng(6), 100, 3, missing=0.1)
        model = train(data, BoosterParams(n_estimators=8, learning_rate=0.5))
        margin = np.full(data.n_rows, model.base_score)
        for tree in model.trees:
            margin = margin + tree.predict(data.X)
        np.testing.assert_array_equal(predict_margin(model, data), margin)


class TestPredict:
    def test_all_missing_row_in_unit_interval(self):
        data = random_dataset(np.random.default_rng(7), 200, 4, missing=0.1)
        model = train(data, BoosterParams(n_estimators=20, learning_rate=0.3))
        p = predict_proba(model, np.full((3, 4), np.nan))
        assert np.all((p > 0) & (p < 1))

    def test_columns_aligned_by_name(self):
        data = random_dataset(np.random.default_rng(8), 100, 3)
        model = train(data, BoosterParams(n_estimators=5, learning_rate=0.5))
        shuffled = data.select(["f2", "f0", "f1"])
        np.testing.assert_array_equal(predict_proba(model, shuffled), predict_proba(model, data))

    def test_missing_column_is_schema_error(self):
        data = random_dataset(np.random.default_rng(8), 50, 3)
        model = train(data, BoosterParams(n_estimators=2))
        with pytest.raises(SchemaError):
            predict_proba(model, data.select(["f0", "f1"]))


class TestSerialization:
    def test_round_trip(self):
        data = random_dataset(np.random.default_rng(9), 120, 3, missing=0.2)
        model = train(data, BoosterParams(n_estimators=6, learning_rate=0.5, mode="friedman"))
        again = BoosterModel.from_json(model.to_json())
        assert again.to_json() == model.to_json()
        np.testing.assert_array_equal(predict_proba(again, data), predict_proba(model, data))

    def test_schema_fields(self):
        model = BoosterModel(0.1, [RegressionTree([TreeNode(weight=0.3)])], BoosterParams(), ("a",))
        doc = json.loads(model.to_json())
        assert doc["format_version"] == 1 and doc["mode"] == "newton"
        assert set(doc) == {"format_version", "mode", "params", "base_score", "feature_names", "trees"}
        assert doc["trees"] == [{"weight": 0.3}]

    def test_reals_round_trip_exactly(self):
        w = 0.1 + 0.2
        model = BoosterModel(1 / 3, [RegressionTree([TreeNode(weight=w)])], BoosterParams(), ("a",))
        again = BoosterModel.from_json(model.to_json())
        assert again.base_score == 1 / 3 and again.trees[0].nodes[0].weight == w

    def test_unknown_version_rejected(self):
        doc = json.loads(BoosterModel(0.0, [], BoosterParams(), ("a",)).to_json())
        doc["format_version"] = 2
        with pytest.raises(SchemaError):
            BoosterModel.from_dict(doc)


class TestImportance:
    def model_with_splits(self, features, gains):
        nodes = []
        for f, gain in zip(features, gains):
            nodes.append(RegressionTree([TreeNode(feature=f, threshold=0.0, gain=gain, left=1, right=2),
                                         TreeNode(weight=-1.0), TreeNode(weight=1.0)]))
        return BoosterModel(0.0, nodes, BoosterParams(), tuple(f"f{j}" for j in range(5)))

    def test_single_feature(self):
        model = self.model_with_splits([3, 3], [2.0, 1.0])
        assert feature_importance(model, "gain") == [("f3", 1.0)]

    def test_split_count_and_ties(self):
        model = self.model_with_splits([4, 1, 4, 1, 2], [1.0, 1.0, 1.0, 1.0, 5.0])
        assert feature_importance(model, "split_count") == [("f1", 0.4), ("f4", 0.4), ("f2", 0.2)]
        assert feature_importance(model, "gain")[0] == ("f2", 5.0 / 9.0)

    def test_no_splits(self):
        assert feature_importance(BoosterModel(0.0, [], BoosterParams(), ("a",))) == []

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 1000))
    def test_normalized(self, seed):
        data = random_dataset(np.random.default_rng(seed), 80, 4, missing=0.1)
        model = train(data, BoosterParams(n_estimators=5, learning_rate=0.5, reg_alpha=0.0))
        for kind in ("gain", "split_count"):
            scores = [s for _, s in feature_importance(model, kind)]
            if scores:
                assert abs(sum(scores) - 1.0) < 1e-12
                assert scores == sorted(scores, reverse=True)


class TestParams:
    def test_defaults_match_grid_search_table(self):
        p = BoosterParams()
        assert (p.n_estimators, p.learning_rate, p.subsample, p.reg_alpha, p.reg_lambda, p.max_depth) == (
            1000, 0.01, 0.8, 1.0, 1.0, 6)
        assert (p.positive_class_weight, p.min_gain, p.max_bins, p.mode) == (1.0, 0.0, 256, "newton")

    @pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(subsample=1.5), dict(max_depth=0),
                                        dict(max_bins=1), dict(mode="ada"), dict(reg_lambda=-1)])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            BoosterParams(**kwargs)


def test_sigmoid_stable():
    assert sigmoid(-1000.0) == 0.0 or sigmoid(-1000.0) > 0
    assert sigmoid(0.0) == 0.5
